// SPDX-License-Identifier: Apache-2.0
//
// Sign generator: text and/or gloss encoders feeding a progressive decoder.
//
//   T2S   text encoder only
//   G2S   gloss encoder only
//   TG2S  both encoders, memories combined by fuse_memories()

#pragma once

#include <string>
#include <vector>

#include "dualsign/decoder.hpp"
#include "dualsign/encoder.hpp"
#include "dualsign/fusion.hpp"

namespace dualsign {

enum class Variant { T2S, G2S, TG2S };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::T2S: return "T2S";
    case Variant::G2S: return "G2S";
    case Variant::TG2S: return "TG2S";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "T2S") return Variant::T2S;
  if (s == "G2S") return Variant::G2S;
  if (s == "TG2S") return Variant::TG2S;
  throw ConfigError("config key 'model_variant': expected T2S, G2S or TG2S, got '" + s + "'");
}

inline bool uses_text(Variant v) { return v != Variant::G2S; }
inline bool uses_gloss(Variant v) { return v != Variant::T2S; }

/// Everything needed to rebuild a generator's parameter layout.
struct GeneratorSpec {
  Variant variant = Variant::TG2S;
  EncoderConfig encoder{};
  std::size_t frame_width = 0;
  std::size_t fusion_cap = kDefaultFusionCap;
  Vocabulary text_vocab{};
  Vocabulary gloss_vocab{};  // equals text_vocab when embeddings are shared
};

/// Vocabularies for a training split; shared embeddings get one joint vocabulary.
inline void build_vocabularies(GeneratorSpec& spec, const std::vector<SampleRecord>& train) {
  std::vector<std::vector<std::string>> text, gloss, both;
  for (const auto& r : train) {
    text.push_back(r.text);
    gloss.push_back(r.gloss);
    both.push_back(r.text);
    both.push_back(r.gloss);
  }
  if (spec.encoder.share_embeddings) {
    spec.text_vocab = spec.gloss_vocab = Vocabulary::build(both);
  } else {
    spec.text_vocab = Vocabulary::build(text);
    spec.gloss_vocab = Vocabulary::build(gloss);
  }
}

/// One training example in model form: decoder inputs are the targets shifted
/// right behind the zero seed row.
template <class T>
struct PreparedSample {
  std::string id;
  std::vector<int> text_ids;
  std::vector<int> gloss_ids;
  Tensor<T> decoder_input;  // T x (D+1)
  Tensor<T> target;         // T x (D+1)
};

template <class T>
class SignGenerator {
 public:
  SignGenerator(GeneratorSpec spec, Rng& rng) : spec_(std::move(spec)) {
    const auto& e = spec_.encoder;
    e.validate();
    if (spec_.frame_width == 0) throw ConfigError("generator: frame width must be positive");
    if (uses_text(spec_.variant)) {
      text_encoder_ = Encoder<T>(store_, "text_encoder", e, spec_.text_vocab.size(), rng);
    }
    if (uses_gloss(spec_.variant)) {
      const bool share = e.share_embeddings && uses_text(spec_.variant);
      gloss_encoder_ = Encoder<T>(store_, "gloss_encoder", e, spec_.gloss_vocab.size(), rng,
                                  share ? text_encoder_.table() : Tensor<T>{});
    }
    decoder_ = ProgressiveDecoder<T>(store_, "decoder", spec_.frame_width, e.layers, e.d_model, e.heads, e.d_ff, rng);
  }

  const GeneratorSpec& spec() const { return spec_; }
  ParameterStore<T>& parameters() { return store_; }
  const ParameterStore<T>& parameters() const { return store_; }
  const ProgressiveDecoder<T>& decoder() const { return decoder_; }
  const Encoder<T>& text_encoder() const { return text_encoder_; }
  const Encoder<T>& gloss_encoder() const { return gloss_encoder_; }

  /// Cross-attention source: a single encoder output, or the fused memory for TG2S.
  Tensor<T> memory(std::span<const int> text_ids, std::span<const int> gloss_ids, const ForwardContext& ctx = {}) const {
    switch (spec_.variant) {
      case Variant::T2S: return text_encoder_(text_ids, ctx);
      case Variant::G2S: return gloss_encoder_(gloss_ids, ctx);
      case Variant::TG2S:
        return fuse_memories(text_encoder_(text_ids, ctx), gloss_encoder_(gloss_ids, ctx), spec_.fusion_cap).matrix;
    }
    throw ContractError("generator: unknown variant");
  }

  /// Teacher-forced predictions, T x (D+1).
  Tensor<T> teacher_forced(const PreparedSample<T>& s, const ForwardContext& ctx = {}) const {
    return decoder_(decoder_.embed_joint(s.decoder_input, ctx), memory(s.text_ids, s.gloss_ids, ctx), ctx);
  }

  PreparedSample<T> prepare(const SampleRecord& r) const {
    if (r.frames.width != spec_.frame_width) {
      throw DataError("sample '" + r.id + "': frame width " + std::to_string(r.frames.width) + " != model width " +
                      std::to_string(spec_.frame_width));
    }
    const std::size_t len = r.frames.length, d = spec_.frame_width, w = d + 1;
    const auto counters = counter_targets(len).values();
    std::vector<T> target(len * w), input(len * w, T(0));
    for (std::size_t t = 0; t < len; ++t) {
      for (std::size_t c = 0; c < d; ++c) target[t * w + c] = static_cast<T>(r.frames.at(t, c));
      target[t * w + d] = static_cast<T>(counters[t]);
    }
    std::copy(target.begin(), target.end() - static_cast<std::ptrdiff_t>(w), input.begin() + static_cast<std::ptrdiff_t>(w));
    return {r.id, spec_.text_vocab.encode(r.text), spec_.gloss_vocab.encode(r.gloss),
            Tensor<T>({len, w}, std::move(input)), Tensor<T>({len, w}, std::move(target))};
  }

  DecoderOutput generate(const std::vector<std::string>& text, const std::vector<std::string>& gloss,
                         std::size_t max_frames, double stop_eps) const {
    NoGradGuard no_grad;
    const auto t = spec_.text_vocab.encode(text);
    const auto g = spec_.gloss_vocab.encode(gloss);
    return decoder_.generate(memory(t, g), max_frames, stop_eps);
  }

 private:
  GeneratorSpec spec_;
  ParameterStore<T> store_;
  Encoder<T> text_encoder_;
  Encoder<T> gloss_encoder_;
  ProgressiveDecoder<T> decoder_;
};

}  // namespace dualsign
