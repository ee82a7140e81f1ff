// SPDX-License-Identifier: Apache-2.0
//
// Transformer building blocks shared by the generator and the back-translator.

#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "dualsign/ops.hpp"

namespace dualsign {

using Rng = std::mt19937_64;

/// Named, ordered parameter registry. Names are stable across runs and form
/// the keys of a checkpoint.
template <class T>
class ParameterStore {
 public:
  Tensor<T> add(const std::string& name, Tensor<T> value) {
    value.set_requires_grad(true);
    if (!params_.emplace(name, value).second) throw ContractError("duplicate parameter name '" + name + "'");
    return value;
  }

  Tensor<T> zeros(const std::string& name, Shape shape) { return add(name, Tensor<T>::zeros(std::move(shape))); }
  Tensor<T> ones(const std::string& name, Shape shape) { return add(name, Tensor<T>::full(std::move(shape), T(1))); }

  /// Glorot-uniform weight matrix.
  Tensor<T> xavier(const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> u(-limit, limit);
    std::vector<T> w(in * out);
    for (auto& v : w) v = static_cast<T>(u(rng));
    return add(name, Tensor<T>({in, out}, std::move(w)));
  }

  Tensor<T> normal(const std::string& name, Shape shape, double stddev, Rng& rng) {
    std::normal_distribution<double> n(0.0, stddev);
    std::vector<T> w(numel(shape));
    for (auto& v : w) v = static_cast<T>(n(rng));
    return add(name, Tensor<T>(std::move(shape), std::move(w)));
  }

  const std::map<std::string, Tensor<T>>& named() const { return params_; }

  std::vector<Tensor<T>> list() const {
    std::vector<Tensor<T>> out;
    for (const auto& [_, p] : params_) out.push_back(p);
    return out;
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& [_, p] : params_) n += p.numel();
    return n;
  }

  void zero_grad() {
    for (auto& [_, p] : params_) p.zero_grad();
  }

 private:
  std::map<std::string, Tensor<T>> params_;
};

/// Training/eval switch plus the dropout stream.
struct ForwardContext {
  bool training = false;
  double dropout_rate = 0.0;
  Rng* rng = nullptr;

  template <class T>
  Tensor<T> drop(const Tensor<T>& x) const {
    if (!training || dropout_rate <= 0.0 || rng == nullptr) return x;
    return dropout(x, dropout_rate, *rng);
  }
};

/// Sinusoidal position row: even columns sin(pos / 10000^(i/d)), odd columns cos.
template <class T>
void positional_row(std::size_t pos, std::size_t d_model, T* out) {
  for (std::size_t i = 0; i < d_model; i += 2) {
    const double angle = static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d_model));
    out[i] = static_cast<T>(std::sin(angle));
    if (i + 1 < d_model) out[i + 1] = static_cast<T>(std::cos(angle));
  }
}

template <class T>
Tensor<T> positional_encoding(std::size_t length, std::size_t d_model) {
  std::vector<T> pe(length * d_model);
  for (std::size_t pos = 0; pos < length; ++pos) positional_row(pos, d_model, pe.data() + pos * d_model);
  return Tensor<T>({length, d_model}, std::move(pe));
}

/// Positions [begin, begin + length) of the table.
template <class T>
Tensor<T> positional_encoding(std::size_t begin, std::size_t length, std::size_t d_model) {
  std::vector<T> pe(length * d_model);
  for (std::size_t k = 0; k < length; ++k) positional_row(begin + k, d_model, pe.data() + k * d_model);
  return Tensor<T>({length, d_model}, std::move(pe));
}

template <class T>
struct Linear {
  Tensor<T> weight;  // in x out
  Tensor<T> bias;    // out

  Linear() = default;
  Linear(ParameterStore<T>& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng)
      : weight(store.xavier(name + ".weight", in, out, rng)), bias(store.zeros(name + ".bias", {out})) {}

  std::size_t in_features() const { return weight.rows(); }
  std::size_t out_features() const { return weight.cols(); }

  Tensor<T> operator()(const Tensor<T>& x) const { return add_bias(matmul(x, weight), bias); }
};

template <class T>
struct LayerNorm {
  Tensor<T> gain;
  Tensor<T> bias;
  T eps = T(1e-5);

  LayerNorm() = default;
  LayerNorm(ParameterStore<T>& store, const std::string& name, std::size_t d)
      : gain(store.ones(name + ".gain", {d})), bias(store.zeros(name + ".bias", {d})) {}

  Tensor<T> operator()(const Tensor<T>& x) const { return layer_norm(x, gain, bias, eps); }
};

template <class T>
struct FeedForward {
  Linear<T> inner;
  Linear<T> outer;

  FeedForward() = default;
  FeedForward(ParameterStore<T>& store, const std::string& name, std::size_t d_model, std::size_t d_ff, Rng& rng)
      : inner(store, name + ".inner", d_model, d_ff, rng), outer(store, name + ".outer", d_ff, d_model, rng) {}

  Tensor<T> operator()(const Tensor<T>& x, const ForwardContext& ctx) const { return outer(ctx.drop(relu(inner(x)))); }
};

/// Scaled dot-product attention over `heads` parallel projections,
/// softmax(QK^T / sqrt(d_k)) V per head, concatenated and projected.
template <class T>
class MultiHeadAttention {
 public:
  Linear<T> query, key, value, output;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore<T>& store, const std::string& name, std::size_t d_model, std::size_t heads, Rng& rng)
      : query(store, name + ".query", d_model, d_model, rng),
        key(store, name + ".key", d_model, d_model, rng),
        value(store, name + ".value", d_model, d_model, rng),
        output(store, name + ".output", d_model, d_model, rng),
        heads_(heads) {
    if (heads == 0 || d_model % heads != 0) {
      throw ContractError("attention: d_model " + std::to_string(d_model) + " not divisible by " +
                          std::to_string(heads) + " heads");
    }
  }

  std::size_t heads() const { return heads_; }

  Tensor<T> operator()(const Tensor<T>& q_in, const Tensor<T>& k_in, const Tensor<T>& v_in,
                       const AttentionMask* mask = nullptr, const ForwardContext& ctx = {}) const {
    if (mask && (mask->rows != q_in.rows() || mask->cols != k_in.rows())) {
      throw DimensionError("attention: mask " + std::to_string(mask->rows) + "x" + std::to_string(mask->cols) +
                           " does not match " + std::to_string(q_in.rows()) + " queries x " +
                           std::to_string(k_in.rows()) + " keys");
    }
    return output(attend(query(q_in), key(k_in), value(v_in), mask, ctx));
  }

  /// Per-head attention over already projected queries, keys and values;
  /// returns the concatenated heads before the output projection.
  Tensor<T> attend(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, const AttentionMask* mask = nullptr,
                   const ForwardContext& ctx = {}) const {
    const std::size_t d_model = q.cols(), dk = d_model / heads_;
    const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dk));
    std::vector<Tensor<T>> per_head;
    per_head.reserve(heads_);
    for (std::size_t h = 0; h < heads_; ++h) {
      const Tensor<T> qh = heads_ == 1 ? q : slice_cols(q, h * dk, dk);
      const Tensor<T> kh = heads_ == 1 ? k : slice_cols(k, h * dk, dk);
      const Tensor<T> vh = heads_ == 1 ? v : slice_cols(v, h * dk, dk);
      const Tensor<T> weights = ctx.drop(softmax_rows(scale(matmul(qh, transpose(kh)), inv_sqrt), mask));
      per_head.push_back(matmul(weights, vh));
    }
    return heads_ == 1 ? per_head[0] : concat_cols(per_head);
  }

 private:
  std::size_t heads_ = 1;
};

/// Post-norm encoder block: x = LN(x + MHA(x)); x = LN(x + FF(x)).
template <class T>
struct EncoderLayer {
  MultiHeadAttention<T> attention;
  LayerNorm<T> norm1;
  FeedForward<T> feed_forward;
  LayerNorm<T> norm2;

  EncoderLayer() = default;
  EncoderLayer(ParameterStore<T>& store, const std::string& name, std::size_t d_model, std::size_t heads,
               std::size_t d_ff, Rng& rng)
      : attention(store, name + ".attention", d_model, heads, rng),
        norm1(store, name + ".norm1", d_model),
        feed_forward(store, name + ".feed_forward", d_model, d_ff, rng),
        norm2(store, name + ".norm2", d_model) {}

  Tensor<T> operator()(const Tensor<T>& x, const AttentionMask* mask, const ForwardContext& ctx) const {
    Tensor<T> h = norm1(add(x, ctx.drop(attention(x, x, x, mask, ctx))));
    return norm2(add(h, ctx.drop(feed_forward(h, ctx))));
  }
};

/// Post-norm decoder block: causal self-attention, cross-attention over a
/// memory, feed-forward; each followed by residual + layer norm.
template <class T>
struct DecoderLayer {
  MultiHeadAttention<T> self_attention;
  LayerNorm<T> norm1;
  MultiHeadAttention<T> cross_attention;
  LayerNorm<T> norm2;
  FeedForward<T> feed_forward;
  LayerNorm<T> norm3;

  DecoderLayer() = default;
  DecoderLayer(ParameterStore<T>& store, const std::string& name, std::size_t d_model, std::size_t heads,
               std::size_t d_ff, Rng& rng)
      : self_attention(store, name + ".self_attention", d_model, heads, rng),
        norm1(store, name + ".norm1", d_model),
        cross_attention(store, name + ".cross_attention", d_model, heads, rng),
        norm2(store, name + ".norm2", d_model),
        feed_forward(store, name + ".feed_forward", d_model, d_ff, rng),
        norm3(store, name + ".norm3", d_model) {}

  Tensor<T> operator()(const Tensor<T>& x, const Tensor<T>& memory, const AttentionMask& causal,
                       const ForwardContext& ctx) const {
    Tensor<T> h = norm1(add(x, ctx.drop(self_attention(x, x, x, &causal, ctx))));
    h = norm2(add(h, ctx.drop(cross_attention(h, memory, memory, nullptr, ctx))));
    return norm3(add(h, ctx.drop(feed_forward(h, ctx))));
  }

  /// State for decoding one position at a time (inference only): projected
  /// self-attention keys/values of earlier positions and the memory's
  /// cross-attention keys/values.
  struct StepCache {
    Tensor<T> keys, values;
    Tensor<T> memory_keys, memory_values;
  };

  StepCache start(const Tensor<T>& memory) const {
    return {{}, {}, cross_attention.key(memory), cross_attention.value(memory)};
  }

  /// The next position's output given its input row; equals the last row of
  /// the full causal forward over all positions so far.
  Tensor<T> step(const Tensor<T>& x, StepCache& cache) const {
    const Tensor<T> k = self_attention.key(x), v = self_attention.value(x);
    cache.keys = cache.keys ? concat_rows(std::vector<Tensor<T>>{cache.keys, k}) : k;
    cache.values = cache.values ? concat_rows(std::vector<Tensor<T>>{cache.values, v}) : v;
    Tensor<T> h =
        norm1(add(x, self_attention.output(self_attention.attend(self_attention.query(x), cache.keys, cache.values))));
    h = norm2(add(h, cross_attention.output(
                         cross_attention.attend(cross_attention.query(h), cache.memory_keys, cache.memory_values))));
    return norm3(add(h, feed_forward(h, ForwardContext{})));
  }
};

}  // namespace dualsign
