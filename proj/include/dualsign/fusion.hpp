// SPDX-License-Identifier: Apache-2.0
//
// Dual-encoder memory fusion: every (text position, gloss position) pair
// becomes one memory row holding the elementwise product of the two encoder
// outputs.

#pragma once

#include <string>

#include "dualsign/ops.hpp"

namespace dualsign {

inline constexpr std::size_t kDefaultFusionCap = 4096;

template <class T>
struct FusedMemory {
  Tensor<T> matrix;  // (N*U) x d
  std::size_t text_rows = 0;
  std::size_t gloss_rows = 0;

  std::size_t rows() const { return text_rows * gloss_rows; }
};

/// Row n*U + u of the result is h_text[n] ⊙ h_gloss[u]: each text row is
/// repeated U times consecutively and the gloss block is tiled N times.
template <class T>
FusedMemory<T> fuse_memories(const Tensor<T>& h_text, const Tensor<T>& h_gloss, std::size_t cap = kDefaultFusionCap) {
  if (h_text.cols() != h_gloss.cols()) {
    throw DimensionError("fuse_memories: model widths differ, text " + shape_str(h_text.shape()) + " vs gloss " +
                         shape_str(h_gloss.shape()));
  }
  const std::size_t n = h_text.rows(), u = h_gloss.rows();
  if (n * u > cap) {
    throw ContractError("fuse_memories: " + std::to_string(n) + "x" + std::to_string(u) + " = " + std::to_string(n * u) +
                        " memory rows exceed the cap of " + std::to_string(cap));
  }
  return {mul(repeat_rows(h_text, u), tile_rows(h_gloss, n)), n, u};
}

}  // namespace dualsign
