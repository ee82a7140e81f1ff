// SPDX-License-Identifier: Apache-2.0
//
// Central-difference verification of analytic gradients (64-bit only).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "dualsign/ops.hpp"

namespace dualsign {

namespace detail {

// Fixed random projection so non-scalar outputs reduce to a scalar whose
// gradient exercises every output coordinate.
inline Tensor<double> projection_weights(const Shape& shape) {
  std::mt19937_64 rng(0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> w(numel(shape));
  for (auto& v : w) v = u(rng);
  return Tensor<double>(shape, std::move(w));
}

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
}

inline double checked(double v, std::size_t coord) {
  if (!std::isfinite(v)) {
    throw ContractError("grad_check: non-finite value while perturbing coordinate " + std::to_string(coord));
  }
  return v;
}

}  // namespace detail

/// Max over coordinates of |analytic - central difference| / max(1, |central difference|)
/// for f: x -> tensor, reduced to a scalar through a fixed random projection.
template <class F>
double grad_check(F&& f, const Tensor<double>& x, double h = 1e-5) {
  Tensor<double> leaf(x.shape(), std::vector<double>(x.data().begin(), x.data().end()), true);
  Tensor<double> y = f(leaf);
  const bool scalar = y.numel() == 1;
  Tensor<double> weights = scalar ? Tensor<double>::scalar(1.0) : detail::projection_weights(y.shape());
  auto reduce = [&](const Tensor<double>& out) { return scalar ? out : sum(mul(out, weights)); };

  Tensor<double> loss = reduce(y);
  loss.backward();
  std::vector<double> analytic(leaf.numel(), 0.0);
  if (leaf.has_grad()) std::copy(leaf.grad().begin(), leaf.grad().end(), analytic.begin());

  NoGradGuard no_grad;
  double worst = 0.0;
  for (std::size_t i = 0; i < leaf.numel(); ++i) {
    std::vector<double> shifted(x.data().begin(), x.data().end());
    shifted[i] += h;
    const double up = detail::checked(reduce(f(Tensor<double>(x.shape(), shifted))).item(), i);
    shifted[i] -= 2 * h;
    const double down = detail::checked(reduce(f(Tensor<double>(x.shape(), shifted))).item(), i);
    worst = std::max(worst, detail::relative_error(analytic[i], (up - down) / (2 * h)));
  }
  return worst;
}

/// Same measure for a scalar loss over named parameters, probing `coords`
/// randomly chosen parameter coordinates. Parameters are restored afterwards.
inline double grad_check_params(const std::function<Tensor<double>()>& loss_fn, std::vector<Tensor<double>> params,
                                std::size_t coords, std::uint64_t seed = 1, double h = 1e-5) {
  if (params.empty()) throw ContractError("grad_check_params: no parameters");
  for (auto& p : params) p.zero_grad();
  Tensor<double> loss = loss_fn();
  if (loss.numel() != 1) throw ContractError("grad_check_params: loss must be scalar");
  loss.backward();

  std::size_t total = 0;
  for (const auto& p : params) total += p.numel();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, total - 1);

  NoGradGuard no_grad;
  double worst = 0.0;
  for (std::size_t c = 0; c < coords; ++c) {
    std::size_t flat = pick(rng);
    std::size_t which = 0;
    while (flat >= params[which].numel()) flat -= params[which++].numel();
    auto& p = params[which];
    const double analytic = p.has_grad() ? p.grad()[flat] : 0.0;
    const double original = p.data()[flat];
    p.mutable_data()[flat] = original + h;
    const double up = detail::checked(loss_fn().item(), flat);
    p.mutable_data()[flat] = original - h;
    const double down = detail::checked(loss_fn().item(), flat);
    p.mutable_data()[flat] = original;
    worst = std::max(worst, detail::relative_error(analytic, (up - down) / (2 * h)));
  }
  return worst;
}

}  // namespace dualsign
