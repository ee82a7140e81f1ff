// SPDX-License-Identifier: Apache-2.0

#include "dualsign/cli.hpp"

int main(int argc, char** argv) { return dualsign::cli::run(argc, argv); }
