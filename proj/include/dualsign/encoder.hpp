// SPDX-License-Identifier: Apache-2.0
//
// Symbolic-source encoders (text or gloss tokens -> contextual rows).

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "dualsign/nn.hpp"
#include "dualsign/vocabulary.hpp"

namespace dualsign {

/// Raised for invalid or inconsistent configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

struct EncoderConfig {
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t d_model = 64;
  std::size_t d_ff = 256;
  double dropout = 0.1;
  bool share_embeddings = false;

  void validate() const {
    if (heads == 0 || d_model % heads != 0) throw ConfigError("config key 'heads': d_model must be divisible by heads");
    if (d_model == 0 || d_model % 2 != 0) throw ConfigError("config key 'd_model': must be a positive even number");
    if (d_ff == 0) throw ConfigError("config key 'd_ff': must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("config key 'dropout': must lie in [0, 1)");
  }
};

/// Token rows of `table`, scaled by sqrt(d_model), plus sinusoidal positions.
template <class T>
Tensor<T> embed_tokens(std::span<const int> ids, const Tensor<T>& table) {
  if (ids.empty()) throw ContractError("embed: empty token list");
  const std::size_t d = table.cols();
  return add(scale(gather_rows(table, ids), static_cast<T>(std::sqrt(static_cast<double>(d)))),
             positional_encoding<T>(ids.size(), d));
}

template <class T>
Tensor<T> embed_source(const std::vector<std::string>& tokens, const Vocabulary& vocab, const Tensor<T>& table) {
  const auto ids = vocab.encode(tokens);
  return embed_tokens<T>(ids, table);
}

/// Embedding table followed by L self-attention blocks.
template <class T>
class Encoder {
 public:
  Encoder() = default;

  /// Pass an existing `shared_table` to reuse another encoder's embeddings.
  Encoder(ParameterStore<T>& store, const std::string& name, const EncoderConfig& cfg, std::size_t vocab_size, Rng& rng,
          Tensor<T> shared_table = {})
      : cfg_(cfg) {
    cfg.validate();
    table_ = shared_table ? shared_table
                          : store.normal(name + ".embedding", {vocab_size, cfg.d_model},
                                         1.0 / std::sqrt(static_cast<double>(cfg.d_model)), rng);
    for (std::size_t l = 0; l < cfg.layers; ++l)
      layers_.emplace_back(store, name + ".layers." + std::to_string(l), cfg.d_model, cfg.heads, cfg.d_ff, rng);
  }

  const Tensor<T>& table() const { return table_; }
  const EncoderConfig& config() const { return cfg_; }
  std::vector<EncoderLayer<T>>& layers() { return layers_; }

  Tensor<T> operator()(std::span<const int> ids, const ForwardContext& ctx = {}, const AttentionMask* mask = nullptr) const {
    if (ids.empty()) throw ContractError("encoder: empty token list");
    Tensor<T> x = ctx.drop(embed_tokens<T>(ids, table_));
    for (const auto& layer : layers_) x = layer(x, mask, ctx);
    return x;
  }

  /// Batched forward: every sequence is padded to the longest with PAD and the
  /// padded keys are masked, so each result (valid rows only) matches the
  /// unbatched forward.
  std::vector<Tensor<T>> forward_batch(const std::vector<std::vector<int>>& batch, const ForwardContext& ctx = {}) const {
    std::size_t longest = 0;
    for (const auto& ids : batch) {
      if (ids.empty()) throw ContractError("encoder: empty token list in batch");
      longest = std::max(longest, ids.size());
    }
    std::vector<Tensor<T>> out;
    for (const auto& ids : batch) {
      std::vector<int> padded(ids);
      padded.resize(longest, Vocabulary::kPad);
      std::vector<bool> valid(longest, false);
      std::fill(valid.begin(), valid.begin() + static_cast<std::ptrdiff_t>(ids.size()), true);
      const auto mask = AttentionMask::keys(longest, valid);
      out.push_back(slice_rows((*this)(padded, ctx, &mask), 0, ids.size()));
    }
    return out;
  }

 private:
  EncoderConfig cfg_;
  Tensor<T> table_;
  std::vector<EncoderLayer<T>> layers_;
};

}  // namespace dualsign
