// SPDX-License-Identifier: Apache-2.0
//
// Corpus BLEU (clipped n-gram precision, brevity penalty, no smoothing) and
// sentence-averaged ROUGE-L F1.

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "dualsign/tensor.hpp"

namespace dualsign {

using Sentence = std::vector<std::string>;

struct TranslationScores {
  double bleu1 = 0, bleu2 = 0, bleu3 = 0, bleu4 = 0;
  double rouge_l = 0;
};

namespace detail {

inline void check_corpus(const std::vector<Sentence>& cands, const std::vector<Sentence>& refs, const char* what) {
  if (cands.empty()) throw ContractError(std::string(what) + ": empty corpus");
  if (cands.size() != refs.size()) {
    throw ContractError(std::string(what) + ": " + std::to_string(cands.size()) + " candidates vs " +
                        std::to_string(refs.size()) + " references");
  }
}

inline std::map<std::vector<std::string>, std::size_t> ngrams(const Sentence& s, std::size_t n) {
  std::map<std::vector<std::string>, std::size_t> out;
  for (std::size_t i = 0; i + n <= s.size(); ++i) ++out[Sentence(s.begin() + i, s.begin() + i + n)];
  return out;
}

inline std::size_t lcs_length(const Sentence& a, const Sentence& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace detail

/// Corpus BLEU-1..max_n. Entry k-1 is BLEU-k.
inline std::vector<double> bleu(const std::vector<Sentence>& cands, const std::vector<Sentence>& refs,
                                std::size_t max_n = 4) {
  detail::check_corpus(cands, refs, "bleu");
  if (max_n == 0) throw ContractError("bleu: max_n must be at least 1");
  std::vector<double> matched(max_n, 0), total(max_n, 0);
  double cand_len = 0, ref_len = 0;
  for (std::size_t s = 0; s < cands.size(); ++s) {
    cand_len += static_cast<double>(cands[s].size());
    ref_len += static_cast<double>(refs[s].size());
    for (std::size_t n = 1; n <= max_n; ++n) {
      const auto c = detail::ngrams(cands[s], n);
      const auto r = detail::ngrams(refs[s], n);
      for (const auto& [gram, count] : c) {
        auto it = r.find(gram);
        if (it != r.end()) matched[n - 1] += static_cast<double>(std::min(count, it->second));
        total[n - 1] += static_cast<double>(count);
      }
    }
  }
  const double bp = cand_len == 0 ? 0.0 : (cand_len > ref_len ? 1.0 : std::exp(1.0 - ref_len / cand_len));
  std::vector<double> out(max_n, 0.0);
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= max_n; ++n) {
    if (matched[n - 1] == 0) break;  // this and every higher order are zero
    log_sum += std::log(matched[n - 1] / total[n - 1]);
    out[n - 1] = bp * std::exp(log_sum / static_cast<double>(n));
  }
  return out;
}

inline double rouge_l(const std::vector<Sentence>& cands, const std::vector<Sentence>& refs) {
  detail::check_corpus(cands, refs, "rouge_l");
  double sum = 0.0;
  for (std::size_t s = 0; s < cands.size(); ++s) {
    const double lcs = static_cast<double>(detail::lcs_length(cands[s], refs[s]));
    if (lcs == 0) continue;
    const double p = lcs / static_cast<double>(cands[s].size());
    const double r = lcs / static_cast<double>(refs[s].size());
    sum += 2 * p * r / (p + r);
  }
  return sum / static_cast<double>(cands.size());
}

inline TranslationScores score_translations(const std::vector<Sentence>& cands, const std::vector<Sentence>& refs) {
  const auto b = bleu(cands, refs, 4);
  return {b[0], b[1], b[2], b[3], rouge_l(cands, refs)};
}

}  // namespace dualsign
