// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "dualsign/metrics.hpp"

using namespace dualsign;

namespace {

std::vector<Sentence> corpus(std::initializer_list<std::string> lines) {
  std::vector<Sentence> out;
  for (const auto& l : lines) {
    Sentence s;
    std::string w;
    for (char c : l) {
      if (c == ' ') {
        if (!w.empty()) s.push_back(w);
        w.clear();
      } else {
        w += c;
      }
    }
    if (!w.empty()) s.push_back(w);
    out.push_back(s);
  }
  return out;
}

std::vector<Sentence> random_corpus(std::mt19937_64& rng, std::size_t n, std::size_t vocab) {
  std::uniform_int_distribution<std::size_t> len(1, 8), word(0, vocab - 1);
  std::vector<Sentence> out(n);
  for (auto& s : out) {
    s.resize(len(rng));
    for (auto& w : s) w = "w" + std::to_string(word(rng));
  }
  return out;
}

}  // namespace

TEST(Bleu, IdenticalCorpusScoresOne) {
  const auto c = corpus({"the cat sat on the mat", "a dog barked loudly today"});
  for (double b : bleu(c, c)) EXPECT_DOUBLE_EQ(b, 1.0);
  EXPECT_DOUBLE_EQ(rouge_l(c, c), 1.0);
}

TEST(Bleu, DisjointCorpusScoresZero) {
  const auto c = corpus({"a b c d"}), r = corpus({"w x y z"});
  for (double b : bleu(c, r)) EXPECT_EQ(b, 0.0);
  EXPECT_EQ(rouge_l(c, r), 0.0);
}

TEST(Bleu, RepeatedWordIsClipped) {
  // "the" occurs once in the reference; the longer candidate gets no penalty.
  const auto b = bleu(corpus({"the the the"}), corpus({"the cat"}));
  EXPECT_NEAR(b[0], 1.0 / 3.0, 1e-12);
  EXPECT_EQ(b[1], 0.0);
}

TEST(Bleu, ShortCandidateIsPenalized) {
  const auto b = bleu(corpus({"the cat"}), corpus({"the cat sat on mat"}));
  EXPECT_NEAR(b[0], 0.22313016014842982, 1e-12);  // exp(1 - 5/2)
  EXPECT_NEAR(b[1], 0.22313016014842982, 1e-12);
  EXPECT_EQ(b[2], 0.0);  // no trigrams in the candidate
}

TEST(Bleu, CountsArePooledOverCorpus) {
  const auto b = bleu(corpus({"a b c d", "x y"}), corpus({"a b c e", "x z"}));
  EXPECT_NEAR(b[0], 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(b[1], 0.57735026918962573, 1e-12);
  EXPECT_NEAR(b[2], 0.55032120814910430, 1e-12);
  EXPECT_EQ(b[3], 0.0);
}

TEST(Bleu, EmptyCandidatesScoreZero) {
  const std::vector<Sentence> c{{}}, r = corpus({"a b"});
  for (double b : bleu(c, r)) EXPECT_EQ(b, 0.0);
  EXPECT_EQ(rouge_l(c, r), 0.0);
}

TEST(Bleu, ContractErrors) {
  EXPECT_THROW(bleu({}, {}), ContractError);
  EXPECT_THROW(bleu(corpus({"a"}), corpus({"a", "b"})), ContractError);
  EXPECT_THROW(bleu(corpus({"a"}), corpus({"a"}), 0), ContractError);
  EXPECT_THROW(rouge_l(corpus({"a"}), {}), ContractError);
}

TEST(RougeL, SubstitutionInTheMiddle) { EXPECT_NEAR(rouge_l(corpus({"a b c"}), corpus({"a x c"})), 2.0 / 3.0, 1e-12); }

TEST(RougeL, PrefixOfReference) { EXPECT_NEAR(rouge_l(corpus({"a b"}), corpus({"a b c d"})), 2.0 / 3.0, 1e-12); }

TEST(RougeL, AveragedOverSentences) {
  EXPECT_NEAR(rouge_l(corpus({"a b c d", "x y"}), corpus({"a b c e", "x z"})), 0.625, 1e-12);
}

TEST(RougeL, LcsIsNotContiguous) { EXPECT_EQ(detail::lcs_length(corpus({"a q b r c"})[0], corpus({"a b c"})[0]), 3u); }

TEST(ScoreTranslations, FieldsMatchComponents) {
  const auto c = corpus({"a b c d", "x y"}), r = corpus({"a b c e", "x z"});
  const auto s = score_translations(c, r);
  const auto b = bleu(c, r);
  EXPECT_EQ(s.bleu1, b[0]);
  EXPECT_EQ(s.bleu4, b[3]);
  EXPECT_EQ(s.rouge_l, rouge_l(c, r));
}

TEST(MetricProperties, InvariantUnderCorpusReordering) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    auto c = random_corpus(rng, 12, 6), r = random_corpus(rng, 12, 6);
    const auto b0 = bleu(c, r);
    const double r0 = rouge_l(c, r);
    std::vector<std::size_t> perm(c.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Sentence> cp, rp;
    for (auto i : perm) {
      cp.push_back(c[i]);
      rp.push_back(r[i]);
    }
    const auto b1 = bleu(cp, rp);
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(b0[k], b1[k], 1e-12);
    EXPECT_NEAR(r0, rouge_l(cp, rp), 1e-12);
  }
}

TEST(MetricProperties, BleuOrdersAreNonIncreasing) {
  // Holds when each order's precision is at most the previous one, which is
  // the case for candidates drawn from the reference with few substitutions.
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> coin(0, 4);
  for (int trial = 0; trial < 100; ++trial) {
    const auto r = random_corpus(rng, 10, 30);
    auto c = r;
    for (auto& s : c)
      for (auto& w : s)
        if (coin(rng) == 0) w = "zz";
    const auto b = bleu(c, r);
    for (std::size_t k = 1; k < 4; ++k) EXPECT_LE(b[k], b[k - 1] + 1e-12) << "trial " << trial;
    for (double v : b) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(MetricProperties, FixingAWordNeverLowersScores) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const auto r = random_corpus(rng, 6, 20);
    auto c = r;
    std::vector<std::pair<std::size_t, std::size_t>> wrong;
    for (std::size_t s = 0; s < c.size(); ++s)
      for (std::size_t i = 0; i < c[s].size(); ++i)
        if ((s + i + trial) % 3 == 0) {
          c[s][i] = "zz";
          wrong.emplace_back(s, i);
        }
    if (wrong.empty()) continue;
    const auto before = bleu(c, r);
    const double rouge_before = rouge_l(c, r);
    const auto [s, i] = wrong[static_cast<std::size_t>(trial) % wrong.size()];
    c[s][i] = r[s][i];
    const auto after = bleu(c, r);
    for (std::size_t k = 0; k < 4; ++k) EXPECT_GE(after[k], before[k] - 1e-12);
    EXPECT_GE(rouge_l(c, r), rouge_before - 1e-12);
  }
}

TEST(MetricProperties, RougeIsSymmetric) {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = random_corpus(rng, 5, 5), b = random_corpus(rng, 5, 5);
    EXPECT_NEAR(rouge_l(a, b), rouge_l(b, a), 1e-12);
  }
}
