// SPDX-License-Identifier: Apache-2.0
//
// Deterministic synthetic corpus for desk-scale experiments.
//
// Glosses come in groups of three: two dialect variants that share one text
// word (REGEN-A / REGEN-B both read "regen") and a blend gloss whose motion is
// the mean of the two variants. Every gloss contributes a fixed 4-frame
// prototype. A modifier word in the text ("stark") scales the following
// segment's motion amplitude and AU intensities by 1.5; glosses never carry
// it. So the base motion is pinned down only by the gloss, the modifier only
// by the text.

#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "dualsign/dataset.hpp"

namespace dualsign {

struct SynthConfig {
  std::uint64_t seed = 7;
  std::size_t n_samples = 50;  // train split size
  std::size_t n_dev = 0;       // 0: max(1, n_samples / 5)
  std::size_t n_test = 0;      // 0: max(1, n_samples / 5)
  std::size_t gloss_groups = 3;
  std::size_t max_glosses = 4;
  double modifier_prob = 0.35;
  ChannelLayout layout{};
};

class SynthWorld {
 public:
  static constexpr std::size_t kSegmentFrames = 4;
  static constexpr double kModifierScale = 1.5;
  static constexpr const char* kModifier = "stark";

  explicit SynthWorld(const SynthConfig& cfg) : layout_(cfg.layout) {
    static const char* const kWords[] = {"regen", "sonne", "wind",  "schnee", "wolke",   "nebel",
                                         "sturm", "frost", "hagel", "tau",    "gewitter", "glatteis"};
    constexpr std::size_t kMaxGroups = sizeof(kWords) / sizeof(kWords[0]) / 2;
    if (cfg.gloss_groups < 1 || cfg.gloss_groups > kMaxGroups) {
      throw ContractError("synth: gloss_groups must be in [1, " + std::to_string(kMaxGroups) + "]");
    }
    std::mt19937_64 rng(cfg.seed ^ 0xa5a5a5a5ULL);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const std::size_t moving = layout_.manual + layout_.landmark_dims();
    constexpr std::size_t kRank = 4;
    std::vector<double> basis(moving * kRank);
    for (auto& b : basis) b = normal(rng) * 6.0;

    auto random_prototype = [&]() {
      Prototype p{Frames(kSegmentFrames, moving), Frames(kSegmentFrames, layout_.aus)};
      for (std::size_t k = 0; k < kSegmentFrames; ++k) {
        double z[kRank];
        for (auto& v : z) v = normal(rng);
        for (std::size_t c = 0; c < moving; ++c) {
          double acc = 0;
          for (std::size_t r = 0; r < kRank; ++r) acc += basis[c * kRank + r] * z[r];
          p.offset.at(k, c) = acc;
        }
      }
      static const double kProfile[kSegmentFrames] = {0.5, 1.0, 1.0, 0.5};
      for (std::size_t j = 0; j < layout_.aus; ++j) {
        const double peak = unit(rng) < 0.3 ? 3.2 * unit(rng) : 0.0;
        for (std::size_t k = 0; k < kSegmentFrames; ++k) p.au.at(k, j) = peak * kProfile[k];
      }
      return p;
    };

    for (std::size_t g = 0; g < cfg.gloss_groups; ++g) {
      const std::string variant_word = kWords[2 * g];
      const std::string blend_word = kWords[2 * g + 1];
      Prototype a = random_prototype();
      Prototype b = random_prototype();
      Prototype blend{Frames(kSegmentFrames, moving), Frames(kSegmentFrames, layout_.aus)};
      for (std::size_t i = 0; i < blend.offset.values.size(); ++i)
        blend.offset.values[i] = 0.5 * (a.offset.values[i] + b.offset.values[i]);
      for (std::size_t i = 0; i < blend.au.values.size(); ++i)
        blend.au.values[i] = 0.5 * (a.au.values[i] + b.au.values[i]);
      add_gloss(upper(variant_word) + "-A", variant_word, std::move(a));
      add_gloss(upper(variant_word) + "-B", variant_word, std::move(b));
      add_gloss(upper(blend_word), blend_word, std::move(blend));
    }
    rest_ = rest_pose(layout_);
  }

  const ChannelLayout& layout() const { return layout_; }
  const std::vector<std::string>& glosses() const { return gloss_names_; }
  const std::string& text_word(const std::string& gloss) const { return text_of_.at(gloss); }

  /// Frames for a gloss sequence; modified[i] marks segment i as emphasized.
  Frames render(const std::vector<std::string>& gloss, const std::vector<bool>& modified) const {
    const std::size_t moving = layout_.manual + layout_.landmark_dims();
    Frames f(gloss.size() * kSegmentFrames, layout_.width());
    for (std::size_t i = 0; i < gloss.size(); ++i) {
      auto it = protos_.find(gloss[i]);
      if (it == protos_.end()) throw ContractError("synth: unknown gloss '" + gloss[i] + "'");
      const Prototype& p = it->second;
      const double amp = modified.at(i) ? kModifierScale : 1.0;
      for (std::size_t k = 0; k < kSegmentFrames; ++k) {
        const std::size_t t = i * kSegmentFrames + k;
        for (std::size_t c = 0; c < moving; ++c) f.at(t, c) = rest_[c] + amp * p.offset.at(k, c);
        for (std::size_t j = 0; j < layout_.aus; ++j) f.at(t, moving + j) = amp * p.au.at(k, j);
      }
    }
    return f;
  }

  /// Draws one sample: gloss sequence, text with optional modifiers, frames.
  template <class Rng>
  SampleRecord sample(Rng& rng, std::size_t max_glosses, double modifier_prob, std::string id) const {
    std::uniform_int_distribution<std::size_t> len(1, max_glosses);
    std::uniform_int_distribution<std::size_t> pick(0, gloss_names_.size() - 1);
    std::bernoulli_distribution emphasize(modifier_prob);
    SampleRecord r;
    r.id = std::move(id);
    const std::size_t u = len(rng);
    std::vector<bool> modified;
    for (std::size_t i = 0; i < u; ++i) {
      const auto& g = gloss_names_[pick(rng)];
      const bool mod = emphasize(rng);
      r.gloss.push_back(g);
      if (mod) r.text.push_back(kModifier);
      r.text.push_back(text_of_.at(g));
      modified.push_back(mod);
    }
    r.frames = render(r.gloss, modified);
    return r;
  }

  /// Modifier flags recovered from a sample's text.
  static std::vector<bool> modifiers_of(const SampleRecord& r) {
    std::vector<bool> out;
    bool pending = false;
    for (const auto& w : r.text) {
      if (w == kModifier) {
        pending = true;
      } else {
        out.push_back(pending);
        pending = false;
      }
    }
    return out;
  }

 private:
  struct Prototype {
    Frames offset;  // kSegmentFrames x (manual + landmark dims)
    Frames au;      // kSegmentFrames x aus
  };

  static std::string upper(std::string s) {
    for (auto& ch : s) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    return s;
  }

  void add_gloss(std::string name, std::string word, Prototype p) {
    gloss_names_.push_back(name);
    text_of_[name] = std::move(word);
    protos_.emplace(std::move(name), std::move(p));
  }

  // Upper-body skeleton (8 body joints + two 21-joint hands) and a 68-point
  // face in 260x210 image coordinates, so rendered frames look like a signer.
  static std::vector<double> rest_pose(const ChannelLayout& layout) {
    std::vector<double> rest(layout.manual + layout.landmark_dims(), 0.0);
    if (layout.manual == 150) {
      const double body[8][2] = {{130, 48}, {130, 78}, {98, 82}, {88, 128}, {106, 164}, {162, 82}, {172, 128}, {154, 164}};
      auto put = [&](std::size_t joint, double x, double y) {
        rest[joint * 3] = x;
        rest[joint * 3 + 1] = y;
        rest[joint * 3 + 2] = 0.0;
      };
      for (std::size_t j = 0; j < 8; ++j) put(j, body[j][0], body[j][1]);
      for (std::size_t hand = 0; hand < 2; ++hand) {
        const double wx = body[hand ? 7 : 4][0], wy = body[hand ? 7 : 4][1];
        const std::size_t base = 8 + hand * 21;
        put(base, wx, wy);
        for (std::size_t finger = 0; finger < 5; ++finger) {
          const double angle = (hand ? -1.0 : 1.0) * (0.9 - 0.45 * static_cast<double>(finger)) + std::numbers::pi / 2;
          for (std::size_t seg = 1; seg <= 4; ++seg) {
            const double r = 4.0 * static_cast<double>(seg);
            put(base + 1 + finger * 4 + (seg - 1), wx + r * std::cos(angle), wy + r * std::sin(angle));
          }
        }
      }
    }
    if (layout.landmarks == 68) {
      const std::size_t off = layout.manual, k = layout.landmark_coords;
      auto put = [&](std::size_t i, double x, double y) {
        rest[off + i * k] = x;
        rest[off + i * k + 1] = y;
      };
      const double cx = 130, cy = 46;
      for (std::size_t i = 0; i < 17; ++i) {  // jaw
        const double a = std::numbers::pi * static_cast<double>(i) / 16.0;
        put(i, cx - 16 * std::cos(a), cy + 4 + 18 * std::sin(a));
      }
      for (std::size_t i = 0; i < 10; ++i) put(17 + i, cx - 13 + 2.9 * static_cast<double>(i) + (i >= 5 ? 3 : 0), cy - 8);
      for (std::size_t i = 0; i < 9; ++i)  // nose
        put(27 + i, i < 4 ? cx : cx - 4 + 2.0 * static_cast<double>(i - 4), i < 4 ? cy - 5 + 2.5 * static_cast<double>(i) : cy + 6);
      for (std::size_t e = 0; e < 2; ++e)
        for (std::size_t i = 0; i < 6; ++i) {
          const double a = 2 * std::numbers::pi * static_cast<double>(i) / 6.0;
          put(36 + e * 6 + i, cx + (e ? 7 : -7) + 3 * std::cos(a), cy - 3 + 1.5 * std::sin(a));
        }
      for (std::size_t i = 0; i < 20; ++i) {  // mouth, outer then inner ring
        const bool inner = i >= 12;
        const std::size_t n = inner ? 8 : 12;
        const double a = 2 * std::numbers::pi * static_cast<double>(inner ? i - 12 : i) / static_cast<double>(n);
        put(48 + i, cx + (inner ? 5 : 8) * std::cos(a), cy + 13 + (inner ? 1.5 : 3) * std::sin(a));
      }
    }
    return rest;
  }

  ChannelLayout layout_;
  std::vector<std::string> gloss_names_;
  std::map<std::string, std::string> text_of_;
  std::map<std::string, Prototype> protos_;
  std::vector<double> rest_;
};

/// Raw (unnormalized) train/dev/test splits drawn from a SynthWorld.
inline std::map<std::string, std::vector<SampleRecord>> synth_splits(const SynthConfig& cfg) {
  if (cfg.n_samples < 1) throw ContractError("synth: n_samples must be >= 1");
  if (cfg.max_glosses < 1) throw ContractError("synth: max_glosses must be >= 1");
  SynthWorld world(cfg);
  std::mt19937_64 rng(cfg.seed);
  const std::size_t auto_held = std::max<std::size_t>(1, cfg.n_samples / 5);
  const std::pair<const char*, std::size_t> sizes[] = {
      {"train", cfg.n_samples}, {"dev", cfg.n_dev ? cfg.n_dev : auto_held}, {"test", cfg.n_test ? cfg.n_test : auto_held}};
  std::map<std::string, std::vector<SampleRecord>> splits;
  for (const auto& [name, n] : sizes) {
    auto& out = splits[name];
    for (std::size_t i = 0; i < n; ++i) {
      char id[64];
      std::snprintf(id, sizeof id, "%s-%04zu", name, i);
      out.push_back(world.sample(rng, cfg.max_glosses, cfg.modifier_prob, id));
    }
  }
  return splits;
}

/// Writes a synthetic dataset (manifest + JSON-lines splits) under `dir`.
inline void synth_corpus(const SynthConfig& cfg, const std::filesystem::path& dir) {
  write_dataset(dir, cfg.layout, synth_splits(cfg));
}

}  // namespace dualsign
