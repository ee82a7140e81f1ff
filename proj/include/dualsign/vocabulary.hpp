// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dualsign/tensor.hpp"

namespace dualsign {

/// Dense token <-> index map with four reserved entries.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr std::size_t kSpecialCount = 4;

  Vocabulary() : tokens_{"<pad>", "<unk>", "<s>", "</s>"} { reindex(); }

  /// Keeps tokens seen at least `min_count` times, ordered by descending
  /// frequency and then lexicographically.
  static Vocabulary build(const std::vector<std::vector<std::string>>& sentences, int min_count = 1) {
    if (min_count < 1) throw ContractError("build_vocab: min_count must be >= 1");
    if (sentences.empty()) throw ContractError("build_vocab: empty corpus");
    std::map<std::string, int> counts;
    for (const auto& s : sentences)
      for (const auto& tok : s) ++counts[tok];

    Vocabulary v;
    std::vector<std::pair<std::string, int>> kept;
    for (const auto& [tok, n] : counts) {
      if (n >= min_count && !v.is_special_token(tok)) kept.emplace_back(tok, n);
    }
    std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    for (auto& [tok, n] : kept) v.tokens_.push_back(tok);
    v.reindex();
    return v;
  }

  /// Rebuilds from a stored token list (specials first, as written by tokens()).
  static Vocabulary from_tokens(std::vector<std::string> tokens) {
    Vocabulary v;
    if (tokens.size() < kSpecialCount ||
        !std::equal(v.tokens_.begin(), v.tokens_.end(), tokens.begin())) {
      throw ContractError("vocabulary: stored token list must start with the four special tokens");
    }
    v.tokens_ = std::move(tokens);
    v.reindex();
    if (v.index_.size() != v.tokens_.size()) throw ContractError("vocabulary: duplicate token in stored list");
    return v;
  }

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  bool contains(std::string_view tok) const { return index_.count(std::string(tok)) != 0; }

  int index(std::string_view tok) const {
    auto it = index_.find(std::string(tok));
    return it == index_.end() ? kUnk : it->second;
  }

  const std::string& token(int idx) const { return tokens_.at(static_cast<std::size_t>(idx)); }

  std::vector<int> encode(const std::vector<std::string>& toks) const {
    std::vector<int> ids;
    ids.reserve(toks.size());
    for (const auto& t : toks) ids.push_back(index(t));
    return ids;
  }

  /// Drops PAD/BOS and stops at the first EOS.
  std::vector<std::string> decode(std::span<const int> ids) const {
    std::vector<std::string> out;
    for (int id : ids) {
      if (id == kEos) break;
      if (id == kPad || id == kBos) continue;
      out.push_back(token(id));
    }
    return out;
  }

 private:
  bool is_special_token(const std::string& tok) const {
    return std::find(tokens_.begin(), tokens_.begin() + kSpecialCount, tok) != tokens_.begin() + kSpecialCount;
  }

  void reindex() {
    index_.clear();
    for (std::size_t i = 0; i < tokens_.size(); ++i) index_.emplace(tokens_[i], static_cast<int>(i));
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace dualsign
