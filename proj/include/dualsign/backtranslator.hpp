// SPDX-License-Identifier: Apache-2.0
//
// Pose-to-text back-translator: a continuous-input transformer encoder over
// frames and a token decoder trained with cross-entropy, decoded greedily.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "dualsign/checkpoint.hpp"
#include "dualsign/config.hpp"
#include "dualsign/encoder.hpp"
#include "dualsign/trainer.hpp"

namespace dualsign {

struct BackTranslatorConfig {
  std::string channels = "all";  // "all" or "manual"
  EncoderConfig model{};
  double learning_rate = 1e-4;
  std::size_t batch_size = 8;
  std::size_t max_steps = 2000;
  std::size_t seed = 7;
  double clip_norm = 1.0;
  std::size_t eval_interval = 100;
  bool deterministic = true;

  void validate() const {
    if (channels != "all" && channels != "manual") throw ConfigError("config key 'channels': expected \"all\" or \"manual\"");
    if (!(learning_rate >= 0.0)) throw ConfigError("config key 'learning_rate': must be non-negative");
    if (batch_size < 1) throw ConfigError("config key 'batch_size': must be >= 1");
    if (eval_interval < 1) throw ConfigError("config key 'eval_interval': must be >= 1");
    model.validate();
  }

  static void read_fields(ConfigReader& r, BackTranslatorConfig& cfg) {
    r.read("channels", cfg.channels);
    read_encoder_fields(r, cfg.model);
    r.read("learning_rate", cfg.learning_rate);
    r.read("batch_size", cfg.batch_size);
    r.read("max_steps", cfg.max_steps);
    r.read("seed", cfg.seed);
    r.read("clip_norm", cfg.clip_norm);
    r.read("eval_interval", cfg.eval_interval);
    r.read("deterministic", cfg.deterministic);
  }

  static BackTranslatorConfig from_json(const json& j, const std::string& scope = "") {
    BackTranslatorConfig cfg;
    ConfigReader r(j, scope);
    read_fields(r, cfg);
    r.finish();
    cfg.validate();
    return cfg;
  }

  json to_json() const {
    json j{{"channels", channels},     {"learning_rate", learning_rate}, {"batch_size", batch_size},
           {"max_steps", max_steps},   {"seed", seed},                   {"clip_norm", clip_norm},
           {"eval_interval", eval_interval}, {"deterministic", deterministic}};
    write_encoder_fields(j, model);
    return j;
  }
};

/// Frames plus the teacher-forcing token streams for one sentence.
template <class T>
struct TranslationSample {
  std::string id;
  Tensor<T> frames;          // T x D
  std::vector<int> input;    // BOS w1 .. wN
  std::vector<int> target;   // w1 .. wN EOS
};

template <class T>
class BackTranslator {
 public:
  BackTranslator(const EncoderConfig& cfg, std::size_t frame_width, Vocabulary vocab, Rng& rng)
      : cfg_(cfg), width_(frame_width), vocab_(std::move(vocab)) {
    cfg.validate();
    if (frame_width == 0) throw ConfigError("back-translator: frame width must be positive");
    const std::size_t d = cfg.d_model;
    frame_embedding_ = Linear<T>(store_, "encoder.frame_embedding", frame_width, d, rng);
    for (std::size_t l = 0; l < cfg.layers; ++l)
      encoder_layers_.emplace_back(store_, "encoder.layers." + std::to_string(l), d, cfg.heads, cfg.d_ff, rng);
    token_table_ = store_.normal("decoder.embedding", {vocab_.size(), d}, 1.0 / std::sqrt(static_cast<double>(d)), rng);
    for (std::size_t l = 0; l < cfg.layers; ++l)
      decoder_layers_.emplace_back(store_, "decoder.layers." + std::to_string(l), d, cfg.heads, cfg.d_ff, rng);
    head_ = Linear<T>(store_, "decoder.head", d, vocab_.size(), rng);
  }

  BackTranslator(const BackTranslator&) = delete;
  BackTranslator& operator=(const BackTranslator&) = delete;
  BackTranslator(BackTranslator&&) = default;
  BackTranslator& operator=(BackTranslator&&) = default;

  std::size_t frame_width() const { return width_; }
  const Vocabulary& vocabulary() const { return vocab_; }
  ParameterStore<T>& parameters() { return store_; }
  const ParameterStore<T>& parameters() const { return store_; }

  Tensor<T> encode(const Tensor<T>& frames, const ForwardContext& ctx = {}) const {
    if (frames.cols() != width_) {
      throw DimensionError("back-translator: frame width " + std::to_string(frames.cols()) + " != model width " +
                           std::to_string(width_));
    }
    Tensor<T> x = ctx.drop(add(frame_embedding_(frames), positional_encoding<T>(frames.rows(), cfg_.d_model)));
    for (const auto& layer : encoder_layers_) x = layer(x, nullptr, ctx);
    return x;
  }

  /// Next-token logits for every prefix position, len(input) x V.
  Tensor<T> logits(std::span<const int> input, const Tensor<T>& memory, const ForwardContext& ctx = {}) const {
    Tensor<T> x = ctx.drop(embed_tokens<T>(input, token_table_));
    const auto causal = AttentionMask::causal(input.size());
    for (const auto& layer : decoder_layers_) x = layer(x, memory, causal, ctx);
    return head_(x);
  }

  Tensor<T> loss(const TranslationSample<T>& s, const ForwardContext& ctx = {}) const {
    return cross_entropy(logits(s.input, encode(s.frames, ctx), ctx), std::span<const int>(s.target));
  }

  TranslationSample<T> prepare(const SampleRecord& r) const {
    TranslationSample<T> s;
    s.id = r.id;
    s.frames = frames_tensor(r.frames);
    const auto ids = vocab_.encode(r.text);
    s.input.push_back(Vocabulary::kBos);
    s.input.insert(s.input.end(), ids.begin(), ids.end());
    s.target = ids;
    s.target.push_back(Vocabulary::kEos);
    return s;
  }

  Tensor<T> frames_tensor(const Frames& f) const {
    if (f.width != width_) {
      throw DimensionError("back-translator: frame width " + std::to_string(f.width) + " != model width " +
                           std::to_string(width_));
    }
    std::vector<T> v(f.values.size());
    std::transform(f.values.begin(), f.values.end(), v.begin(), [](double x) { return static_cast<T>(x); });
    return Tensor<T>({f.length, f.width}, std::move(v));
  }

  /// Greedy decoding; stops at EOS or after max_len tokens.
  std::vector<std::string> translate(const Frames& frames, std::size_t max_len) const {
    NoGradGuard no_grad;
    const Tensor<T> memory = encode(frames_tensor(frames));
    std::vector<typename DecoderLayer<T>::StepCache> caches;
    for (const auto& layer : decoder_layers_) caches.push_back(layer.start(memory));
    const T root_d = static_cast<T>(std::sqrt(static_cast<double>(cfg_.d_model)));
    int token = Vocabulary::kBos;
    std::vector<int> out;
    while (out.size() < max_len) {
      const int ids[1] = {token};
      Tensor<T> x = add(scale(gather_rows(token_table_, std::span<const int>(ids)), root_d),
                        positional_encoding<T>(out.size(), 1, cfg_.d_model));
      for (std::size_t l = 0; l < decoder_layers_.size(); ++l) x = decoder_layers_[l].step(x, caches[l]);
      const Tensor<T> z = head_(x);
      const auto row = z.data();
      int best = Vocabulary::kEos;
      for (std::size_t k = 0; k < row.size(); ++k) {
        const int id = static_cast<int>(k);
        if (id == Vocabulary::kPad || id == Vocabulary::kBos) continue;
        if (row[k] > row[static_cast<std::size_t>(best)]) best = id;
      }
      if (best == Vocabulary::kEos) break;
      out.push_back(best);
      token = best;
    }
    return vocab_.decode(out);
  }

 private:
  EncoderConfig cfg_;
  std::size_t width_;
  Vocabulary vocab_;
  ParameterStore<T> store_;
  Linear<T> frame_embedding_;
  std::vector<EncoderLayer<T>> encoder_layers_;
  Tensor<T> token_table_;
  std::vector<DecoderLayer<T>> decoder_layers_;
  Linear<T> head_;
};

/// Mean text length of a split, the basis of the greedy length cap.
inline double mean_text_length(const std::vector<SampleRecord>& records) {
  if (records.empty()) return 0.0;
  double n = 0;
  for (const auto& r : records) n += static_cast<double>(r.text.size());
  return n / static_cast<double>(records.size());
}

inline std::size_t greedy_length_cap(double mean_reference_length) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(2.0 * mean_reference_length)));
}

template <class T>
Checkpoint backtranslator_checkpoint(const BackTranslator<T>& model, const BackTranslatorConfig& cfg, std::size_t step,
                                     const ChannelLayout& layout, const NormStats& stats) {
  Checkpoint ck;
  ck.dtype = dtype_name<T>();
  ck.meta = json{{"kind", "backtranslator"},
                 {"step", step},
                 {"config", cfg.to_json()},
                 {"layout", layout.to_json()},
                 {"norm_stats", stats.to_json()},
                 {"vocab", model.vocabulary().tokens()}};
  ck.params = snapshot(model.parameters());
  return ck;
}

template <class T>
BackTranslator<T> load_backtranslator(const Checkpoint& ck) {
  require_kind(ck, "backtranslator");
  const auto cfg = BackTranslatorConfig::from_json(ck.meta.at("config"));
  const auto layout = ChannelLayout::from_json(ck.meta.at("layout"));
  Rng rng(cfg.seed);
  BackTranslator<T> model(cfg.model, layout.width(),
                          Vocabulary::from_tokens(ck.meta.at("vocab").get<std::vector<std::string>>()), rng);
  restore(model.parameters(), ck.params);
  return model;
}

template <class T>
double mean_cross_entropy(const BackTranslator<T>& model, const std::vector<TranslationSample<T>>& samples) {
  NoGradGuard no_grad;
  double total = 0;
  std::size_t tokens = 0;
  for (const auto& s : samples) {
    total += static_cast<double>(model.loss(s).item()) * static_cast<double>(s.target.size());
    tokens += s.target.size();
  }
  return tokens ? total / static_cast<double>(tokens) : 0.0;
}

struct BackTranslatorFit {
  Checkpoint checkpoint;  // lowest dev cross-entropy
  std::size_t best_step = 0;
  double best_dev_ce = std::numeric_limits<double>::infinity();
};

/// Trains on ground-truth frames. `log` receives {"step", "train_ce", "dev_ce"}.
template <class T>
BackTranslatorFit fit_backtranslator(const Dataset& full, const BackTranslatorConfig& cfg,
                                     const std::function<void(const json&)>& log = {}) {
  cfg.validate();
  const Dataset ds = select_channels(full, cfg.channels);
  const auto& train = ds.split("train");
  if (train.empty()) throw DataError("fit_backtranslator: empty train split");
  if (!ds.has_split("dev") || ds.split("dev").empty()) {
    throw DataError("fit_backtranslator: dataset needs a non-empty dev split");
  }
  std::vector<std::vector<std::string>> sentences;
  for (const auto& r : train) sentences.push_back(r.text);

  const std::uint64_t seed = run_seed(cfg.seed, cfg.deterministic);
  Rng init_rng(seed);
  BackTranslator<T> model(cfg.model, ds.layout.width(), Vocabulary::build(sentences), init_rng);
  std::vector<TranslationSample<T>> train_set, dev_set;
  for (const auto& r : train) train_set.push_back(model.prepare(r));
  for (const auto& r : ds.split("dev")) dev_set.push_back(model.prepare(r));

  BackTranslatorFit result;
  if (cfg.max_steps == 0) {
    result.checkpoint = backtranslator_checkpoint(model, cfg, 0, ds.layout, ds.stats);
    return result;
  }

  std::vector<Tensor<T>> params = model.parameters().list();
  Adam<T> opt(params, cfg.learning_rate);
  Rng batch_rng(seed + 1);
  Rng dropout_rng(seed + 2);
  const ForwardContext ctx{true, cfg.model.dropout, &dropout_rng};
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  double interval = 0;
  std::size_t interval_steps = 0;
  std::vector<NamedArray> best;

  for (std::size_t step = 1; step <= cfg.max_steps; ++step) {
    std::vector<const TranslationSample<T>*> batch;
    std::size_t tokens = 0;
    while (batch.size() < cfg.batch_size) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), batch_rng);
        cursor = 0;
      }
      batch.push_back(&train_set[order[cursor++]]);
      tokens += batch.back()->target.size();
    }
    opt.zero_grad();
    Tensor<T> loss;
    for (const auto* s : batch) {
      Tensor<T> term = scale(model.loss(*s, ctx), static_cast<T>(s->target.size()) / static_cast<T>(tokens));
      loss = loss ? add(loss, term) : term;
    }
    const double value = static_cast<double>(loss.item());
    if (!std::isfinite(value)) {
      std::string ids;
      for (const auto* s : batch) ids += (ids.empty() ? "" : ", ") + s->id;
      throw ContractError("back-translator: non-finite loss on samples [" + ids + "]");
    }
    loss.backward();
    opt.clip_grad_norm(cfg.clip_norm);
    opt.step();
    interval += value;
    ++interval_steps;

    if (step % cfg.eval_interval == 0 || step == cfg.max_steps) {
      const double dev = mean_cross_entropy(model, dev_set);
      if (log) log(json{{"step", step}, {"train_ce", interval / static_cast<double>(interval_steps)}, {"dev_ce", dev}});
      interval = 0;
      interval_steps = 0;
      if (dev < result.best_dev_ce) {
        result.best_dev_ce = dev;
        result.best_step = step;
        best = snapshot(model.parameters());
      }
    }
  }
  restore(model.parameters(), best);
  result.checkpoint = backtranslator_checkpoint(model, cfg, result.best_step, ds.layout, ds.stats);
  return result;
}

}  // namespace dualsign
