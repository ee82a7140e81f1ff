// SPDX-License-Identifier: Apache-2.0
//
// Differentiable tensor operations. Everything is 2-D (rank-1 tensors act as a
// single row); there is no implicit broadcasting, only the explicit row-bias,
// repeat and tile ops below.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dualsign/tensor.hpp"

namespace dualsign {

/// Row-major boolean matrix; true marks a key position a query may attend to.
struct AttentionMask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> allowed;

  bool operator()(std::size_t r, std::size_t c) const { return allowed[r * cols + c] != 0; }

  /// Lower-triangular: query t sees keys 0..t.
  static AttentionMask causal(std::size_t n) {
    AttentionMask m{n, n, std::vector<std::uint8_t>(n * n, 0)};
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c <= r; ++c) m.allowed[r * n + c] = 1;
    return m;
  }

  /// Every query sees exactly the keys flagged valid (padding masked out).
  static AttentionMask keys(std::size_t queries, const std::vector<bool>& key_valid) {
    AttentionMask m{queries, key_valid.size(), std::vector<std::uint8_t>(queries * key_valid.size(), 0)};
    for (std::size_t r = 0; r < queries; ++r)
      for (std::size_t c = 0; c < key_valid.size(); ++c) m.allowed[r * m.cols + c] = key_valid[c] ? 1 : 0;
    return m;
  }
};

namespace detail {

template <class T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

template <class T>
void require_matrix(const char* op, const Tensor<T>& a) {
  if (a.rank() > 2) throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(a.shape()));
}

// C[m×n] += A[m×k] · B[k×n]
template <class T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = a[i * k + p];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

// C[m×k] += A[m×n] · B[k×n]ᵀ
template <class T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T* brow = b + p * n;
      T acc = T(0);
      for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
      c[i * k + p] += acc;
    }
  }
}

// C[k×n] += A[m×k]ᵀ · B[m×n]
template <class T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = a[i * k + p];
      T* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

template <class T>
using NodeList = std::vector<std::shared_ptr<Node<T>>>;

}  // namespace detail

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_matrix("matmul", a);
  detail::require_matrix("matmul", b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  std::vector<T> out(m * n, T(0));
  detail::gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  return detail::make_result<T>("matmul", {m, n}, std::move(out), {a.node_ptr(), b.node_ptr()},
                                [m, k, n](Node<T>& self) {
                                  auto& pa = *self.parents[0];
                                  auto& pb = *self.parents[1];
                                  if (pa.requires_grad)
                                    detail::gemm_nt(self.grad.data(), pb.value.data(), pa.grad_buffer(), m, n, k);
                                  if (pb.requires_grad)
                                    detail::gemm_tn(pa.value.data(), self.grad.data(), pb.grad_buffer(), m, k, n);
                                });
}

template <class T>
Tensor<T> transpose(const Tensor<T>& a) {
  detail::require_matrix("transpose", a);
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<T> out(m * n);
  auto src = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = src[i * n + j];
  return detail::make_result<T>("transpose", {n, m}, std::move(out), {a.node_ptr()}, [m, n](Node<T>& self) {
    T* g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j * m + i];
  });
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("add", a, b);
  std::vector<T> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return detail::make_result<T>("add", a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()}, [](Node<T>& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      T* g = p->grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("sub", a, b);
  std::vector<T> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return detail::make_result<T>("sub", a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()}, [](Node<T>& self) {
    const T sign[2] = {T(1), T(-1)};
    for (std::size_t k = 0; k < 2; ++k) {
      auto& p = *self.parents[k];
      if (!p.requires_grad) continue;
      T* g = p.grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += sign[k] * self.grad[i];
    }
  });
}

/// Elementwise (Hadamard) product.
template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("mul", a, b);
  std::vector<T> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return detail::make_result<T>("mul", a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()}, [](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      T* g = pa.grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      T* g = pb.grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * pa.value[i];
    }
  });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= s;
  return detail::make_result<T>("scale", a.shape(), std::move(out), {a.node_ptr()}, [s](Node<T>& self) {
    T* g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += s * self.grad[i];
  });
}

/// x[m×n] + bias[n] applied to every row.
template <class T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  detail::require_matrix("add_bias", x);
  const std::size_t m = x.rows(), n = x.cols();
  if (bias.numel() != n) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " does not match " + shape_str(x.shape()));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  auto b = bias.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += b[j];
  return detail::make_result<T>("add_bias", x.shape(), std::move(out), {x.node_ptr(), bias.node_ptr()},
                                [m, n](Node<T>& self) {
                                  auto& px = *self.parents[0];
                                  auto& pb = *self.parents[1];
                                  if (px.requires_grad) {
                                    T* g = px.grad_buffer();
                                    for (std::size_t i = 0; i < m * n; ++i) g[i] += self.grad[i];
                                  }
                                  if (pb.requires_grad) {
                                    T* g = pb.grad_buffer();
                                    for (std::size_t i = 0; i < m; ++i)
                                      for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
                                  }
                                });
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = v > T(0) ? v : T(0);
  return detail::make_result<T>("relu", x.shape(), std::move(out), {x.node_ptr()}, [](Node<T>& self) {
    auto& p = *self.parents[0];
    T* g = p.grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (p.value[i] > T(0)) g[i] += self.grad[i];
  });
}

/// Row-wise softmax. Disallowed mask positions get exactly zero weight; every
/// row must keep at least one allowed position.
template <class T>
Tensor<T> softmax_rows(const Tensor<T>& x, const AttentionMask* mask = nullptr) {
  detail::require_matrix("softmax_rows", x);
  const std::size_t m = x.rows(), n = x.cols();
  if (mask && (mask->rows != m || mask->cols != n)) {
    throw DimensionError("softmax_rows: mask " + std::to_string(mask->rows) + "x" + std::to_string(mask->cols) +
                         " does not match logits " + shape_str(x.shape()));
  }
  std::vector<T> out(m * n, T(0));
  auto src = x.data();
  for (std::size_t i = 0; i < m; ++i) {
    T hi = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (!mask || (*mask)(i, j)) hi = std::max(hi, src[i * n + j]);
    if (hi == -std::numeric_limits<T>::infinity()) throw ContractError("softmax_rows: row " + std::to_string(i) + " is fully masked");
    T total = T(0);
    for (std::size_t j = 0; j < n; ++j) {
      if (mask && !(*mask)(i, j)) continue;
      out[i * n + j] = std::exp(src[i * n + j] - hi);
      total += out[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= total;
  }
  return detail::make_result<T>("softmax_rows", x.shape(), std::move(out), {x.node_ptr()}, [m, n](Node<T>& self) {
    T* g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < m; ++i) {
      const T* y = self.value.data() + i * n;
      const T* dy = self.grad.data() + i * n;
      T dot = T(0);
      for (std::size_t j = 0; j < n; ++j) dot += y[j] * dy[j];
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += y[j] * (dy[j] - dot);
    }
  });
}

/// Normalizes each row to zero mean / unit variance, then applies gain and bias.
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps = T(1e-5)) {
  detail::require_matrix("layer_norm", x);
  const std::size_t m = x.rows(), d = x.cols();
  if (gain.numel() != d || bias.numel() != d) {
    throw DimensionError("layer_norm: gain/bias " + shape_str(gain.shape()) + "/" + shape_str(bias.shape()) +
                         " do not match last dimension of " + shape_str(x.shape()));
  }
  if (!(eps > T(0))) throw ContractError("layer_norm: eps must be positive");
  std::vector<T> out(m * d);
  // xhat and 1/sigma are needed again in backward.
  auto xhat = std::make_shared<std::vector<T>>(m * d);
  auto inv_std = std::make_shared<std::vector<T>>(m);
  auto src = x.data();
  auto gv = gain.data(), bv = bias.data();
  for (std::size_t i = 0; i < m; ++i) {
    const T* row = src.data() + i * d;
    T mean = T(0);
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= T(d);
    T var = T(0);
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= T(d);
    const T is = T(1) / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const T h = (row[j] - mean) * is;
      (*xhat)[i * d + j] = h;
      out[i * d + j] = h * gv[j] + bv[j];
    }
  }
  return detail::make_result<T>(
      "layer_norm", x.shape(), std::move(out), {x.node_ptr(), gain.node_ptr(), bias.node_ptr()},
      [m, d, xhat, inv_std](Node<T>& self) {
        auto& px = *self.parents[0];
        auto& pg = *self.parents[1];
        auto& pb = *self.parents[2];
        const T* dy = self.grad.data();
        if (pg.requires_grad) {
          T* g = pg.grad_buffer();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < d; ++j) g[j] += dy[i * d + j] * (*xhat)[i * d + j];
        }
        if (pb.requires_grad) {
          T* g = pb.grad_buffer();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < d; ++j) g[j] += dy[i * d + j];
        }
        if (px.requires_grad) {
          T* g = px.grad_buffer();
          const T* gain_v = pg.value.data();
          std::vector<T> dh(d);
          for (std::size_t i = 0; i < m; ++i) {
            T mean_dh = T(0), mean_dh_h = T(0);
            for (std::size_t j = 0; j < d; ++j) {
              dh[j] = dy[i * d + j] * gain_v[j];
              mean_dh += dh[j];
              mean_dh_h += dh[j] * (*xhat)[i * d + j];
            }
            mean_dh /= T(d);
            mean_dh_h /= T(d);
            for (std::size_t j = 0; j < d; ++j)
              g[i * d + j] += (*inv_std)[i] * (dh[j] - mean_dh - (*xhat)[i * d + j] * mean_dh_h);
          }
        }
      });
}

/// Inverted dropout: zeroes with probability p, scales survivors by 1/(1-p).
template <class T, class Rng>
Tensor<T> dropout(const Tensor<T>& x, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw ContractError("dropout: rate must lie in [0, 1)");
  if (p == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - p);
  const T s = T(1.0 / (1.0 - p));
  auto factor = std::make_shared<std::vector<T>>(x.numel());
  for (auto& f : *factor) f = keep(rng) ? s : T(0);
  std::vector<T> out(x.numel());
  auto src = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = src[i] * (*factor)[i];
  return detail::make_result<T>("dropout", x.shape(), std::move(out), {x.node_ptr()}, [factor](Node<T>& self) {
    T* g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * (*factor)[i];
  });
}

template <class T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t begin, std::size_t count) {
  detail::require_matrix("slice_cols", x);
  const std::size_t m = x.rows(), n = x.cols();
  if (count == 0 || begin + count > n) {
    throw DimensionError("slice_cols: columns [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") out of range for " + shape_str(x.shape()));
  }
  std::vector<T> out(m * count);
  auto src = x.data();
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(src.data() + i * n + begin, count, out.data() + i * count);
  return detail::make_result<T>("slice_cols", {m, count}, std::move(out), {x.node_ptr()},
                                [m, n, begin, count](Node<T>& self) {
                                  T* g = self.parents[0]->grad_buffer();
                                  for (std::size_t i = 0; i < m; ++i)
                                    for (std::size_t j = 0; j < count; ++j) g[i * n + begin + j] += self.grad[i * count + j];
                                });
}

template <class T>
Tensor<T> slice_rows(const Tensor<T>& x, std::size_t begin, std::size_t count) {
  detail::require_matrix("slice_rows", x);
  const std::size_t m = x.rows(), n = x.cols();
  if (count == 0 || begin + count > m) {
    throw DimensionError("slice_rows: rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") out of range for " + shape_str(x.shape()));
  }
  auto src = x.data();
  std::vector<T> out(src.begin() + begin * n, src.begin() + (begin + count) * n);
  return detail::make_result<T>("slice_rows", {count, n}, std::move(out), {x.node_ptr()},
                                [n, begin](Node<T>& self) {
                                  T* g = self.parents[0]->grad_buffer() + begin * n;
                                  for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
                                });
}

/// Horizontal concatenation of matrices with equal row counts.
template <class T>
Tensor<T> concat_cols(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const std::size_t m = parts[0].rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  detail::NodeList<T> parents;
  for (const auto& p : parts) {
    detail::require_matrix("concat_cols", p);
    if (p.rows() != m) {
      throw DimensionError("concat_cols: row mismatch " + shape_str(parts[0].shape()) + " vs " + shape_str(p.shape()));
    }
    widths.push_back(p.cols());
    total += p.cols();
    parents.push_back(p.node_ptr());
  }
  std::vector<T> out(m * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto src = parts[k].data();
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(src.data() + i * widths[k], widths[k], out.data() + i * total + offset);
    offset += widths[k];
  }
  return detail::make_result<T>("concat_cols", {m, total}, std::move(out), std::move(parents),
                                [m, total, widths](Node<T>& self) {
                                  std::size_t off = 0;
                                  for (std::size_t k = 0; k < widths.size(); ++k) {
                                    auto& p = *self.parents[k];
                                    if (p.requires_grad) {
                                      T* g = p.grad_buffer();
                                      for (std::size_t i = 0; i < m; ++i)
                                        for (std::size_t j = 0; j < widths[k]; ++j)
                                          g[i * widths[k] + j] += self.grad[i * total + off + j];
                                    }
                                    off += widths[k];
                                  }
                                });
}

template <class T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  return concat_cols<T>(std::span<const Tensor<T>>(parts));
}

/// Vertical concatenation of matrices with equal column counts.
template <class T>
Tensor<T> concat_rows(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  const std::size_t n = parts[0].cols();
  std::vector<std::size_t> heights;
  std::size_t total = 0;
  detail::NodeList<T> parents;
  std::vector<T> out;
  for (const auto& p : parts) {
    detail::require_matrix("concat_rows", p);
    if (p.cols() != n) {
      throw DimensionError("concat_rows: column mismatch " + shape_str(parts[0].shape()) + " vs " + shape_str(p.shape()));
    }
    heights.push_back(p.rows());
    total += p.rows();
    parents.push_back(p.node_ptr());
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  return detail::make_result<T>("concat_rows", {total, n}, std::move(out), std::move(parents),
                                [n, heights](Node<T>& self) {
                                  std::size_t off = 0;
                                  for (std::size_t k = 0; k < heights.size(); ++k) {
                                    auto& p = *self.parents[k];
                                    const std::size_t len = heights[k] * n;
                                    if (p.requires_grad) {
                                      T* g = p.grad_buffer();
                                      for (std::size_t i = 0; i < len; ++i) g[i] += self.grad[off + i];
                                    }
                                    off += len;
                                  }
                                });
}

template <class T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  return concat_rows<T>(std::span<const Tensor<T>>(parts));
}

/// Selects rows of a table (embedding lookup).
template <class T>
Tensor<T> gather_rows(const Tensor<T>& table, std::span<const int> indices) {
  detail::require_matrix("gather_rows", table);
  const std::size_t vocab = table.rows(), d = table.cols();
  if (indices.empty()) throw ContractError("gather_rows: empty index list");
  std::vector<T> out(indices.size() * d);
  auto src = table.data();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || static_cast<std::size_t>(indices[i]) >= vocab) {
      throw DimensionError("gather_rows: index " + std::to_string(indices[i]) + " outside table " +
                           shape_str(table.shape()));
    }
    std::copy_n(src.data() + indices[i] * d, d, out.data() + i * d);
  }
  std::vector<int> idx(indices.begin(), indices.end());
  return detail::make_result<T>("gather_rows", {idx.size(), d}, std::move(out), {table.node_ptr()},
                                [idx, d](Node<T>& self) {
                                  T* g = self.parents[0]->grad_buffer();
                                  for (std::size_t i = 0; i < idx.size(); ++i)
                                    for (std::size_t j = 0; j < d; ++j) g[idx[i] * d + j] += self.grad[i * d + j];
                                });
}

/// Each row repeated k times consecutively: rows a,b → a,a,..,b,b,..
template <class T>
Tensor<T> repeat_rows(const Tensor<T>& x, std::size_t k) {
  detail::require_matrix("repeat_rows", x);
  if (k == 0) throw ContractError("repeat_rows: repeat count must be positive");
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<T> out(m * k * n);
  auto src = x.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t r = 0; r < k; ++r) std::copy_n(src.data() + i * n, n, out.data() + (i * k + r) * n);
  return detail::make_result<T>("repeat_rows", {m * k, n}, std::move(out), {x.node_ptr()}, [m, n, k](Node<T>& self) {
    T* g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t r = 0; r < k; ++r)
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[(i * k + r) * n + j];
  });
}

/// The whole block stacked k times: rows a,b → a,b,a,b,..
template <class T>
Tensor<T> tile_rows(const Tensor<T>& x, std::size_t k) {
  detail::require_matrix("tile_rows", x);
  if (k == 0) throw ContractError("tile_rows: tile count must be positive");
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<T> out;
  out.reserve(m * n * k);
  for (std::size_t r = 0; r < k; ++r) out.insert(out.end(), x.data().begin(), x.data().end());
  return detail::make_result<T>("tile_rows", {m * k, n}, std::move(out), {x.node_ptr()}, [m, n, k](Node<T>& self) {
    T* g = self.parents[0]->grad_buffer();
    for (std::size_t r = 0; r < k; ++r)
      for (std::size_t i = 0; i < m * n; ++i) g[i] += self.grad[r * m * n + i];
  });
}

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  return detail::make_result<T>("reshape", std::move(shape), std::move(out), {x.node_ptr()}, [](Node<T>& self) {
    T* g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = T(0);
  for (auto v : x.data()) total += v;
  return detail::make_result<T>("sum", {1}, {total}, {x.node_ptr()}, [](Node<T>& self) {
    auto& p = *self.parents[0];
    T* g = p.grad_buffer();
    for (std::size_t i = 0; i < p.value.size(); ++i) g[i] += self.grad[0];
  });
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / T(x.numel()));
}

/// Mean of squared differences over every element.
template <class T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& truth) {
  detail::require_same_shape("mse_loss", pred, truth);
  const std::size_t n = pred.numel();
  auto p = pred.data(), t = truth.data();
  T total = T(0);
  for (std::size_t i = 0; i < n; ++i) total += (p[i] - t[i]) * (p[i] - t[i]);
  return detail::make_result<T>("mse_loss", {1}, {total / T(n)}, {pred.node_ptr(), truth.node_ptr()},
                                [n](Node<T>& self) {
                                  auto& pp = *self.parents[0];
                                  auto& pt = *self.parents[1];
                                  const T c = T(2) * self.grad[0] / T(n);
                                  if (pp.requires_grad) {
                                    T* g = pp.grad_buffer();
                                    for (std::size_t i = 0; i < n; ++i) g[i] += c * (pp.value[i] - pt.value[i]);
                                  }
                                  if (pt.requires_grad) {
                                    T* g = pt.grad_buffer();
                                    for (std::size_t i = 0; i < n; ++i) g[i] -= c * (pp.value[i] - pt.value[i]);
                                  }
                                });
}

/// Mean token cross-entropy of row-wise logits against class targets.
template <class T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> targets) {
  detail::require_matrix("cross_entropy", logits);
  const std::size_t m = logits.rows(), v = logits.cols();
  if (targets.size() != m) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                         shape_str(logits.shape()));
  }
  auto probs = std::make_shared<std::vector<T>>(m * v);
  auto src = logits.data();
  T total = T(0);
  for (std::size_t i = 0; i < m; ++i) {
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= v) {
      throw DimensionError("cross_entropy: target " + std::to_string(targets[i]) + " outside " + std::to_string(v) + " classes");
    }
    const T* row = src.data() + i * v;
    const T hi = *std::max_element(row, row + v);
    T z = T(0);
    for (std::size_t j = 0; j < v; ++j) z += std::exp(row[j] - hi);
    for (std::size_t j = 0; j < v; ++j) (*probs)[i * v + j] = std::exp(row[j] - hi) / z;
    total += -(row[targets[i]] - hi - std::log(z));
  }
  std::vector<int> tgt(targets.begin(), targets.end());
  return detail::make_result<T>("cross_entropy", {1}, {total / T(m)}, {logits.node_ptr()},
                                [m, v, probs, tgt](Node<T>& self) {
                                  T* g = self.parents[0]->grad_buffer();
                                  const T c = self.grad[0] / T(m);
                                  for (std::size_t i = 0; i < m; ++i) {
                                    for (std::size_t j = 0; j < v; ++j) g[i * v + j] += c * (*probs)[i * v + j];
                                    g[i * v + tgt[i]] -= c;
                                  }
                                });
}

}  // namespace dualsign
