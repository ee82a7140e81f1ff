// SPDX-License-Identifier: Apache-2.0
//
// MSE training of the sign generators with Adam, gradient clipping and
// best-dev checkpointing.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dualsign/checkpoint.hpp"
#include "dualsign/config.hpp"
#include "dualsign/generator.hpp"

namespace dualsign {

struct TrainConfig {
  Variant variant = Variant::TG2S;
  double learning_rate = 1e-4;
  std::size_t batch_size = 8;
  std::size_t max_steps = 2000;
  std::size_t seed = 7;
  double clip_norm = 1.0;
  std::size_t eval_interval = 100;
  bool deterministic = true;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  EncoderConfig encoder{};
  std::size_t fusion_cap = kDefaultFusionCap;
  std::size_t max_frames = 300;
  double stop_eps = 0.02;
  double counter_weight = 1.0;  // loss weight of the counter column relative to one frame channel
  std::string channels = "all";  // "all" or "manual"

  void validate() const {
    if (!(learning_rate >= 0.0)) throw ConfigError("config key 'learning_rate': must be non-negative");
    if (batch_size < 1) throw ConfigError("config key 'batch_size': must be >= 1");
    if (eval_interval < 1) throw ConfigError("config key 'eval_interval': must be >= 1");
    if (!(counter_weight > 0.0)) throw ConfigError("config key 'counter_weight': must be positive");
    if (max_frames < 1) throw ConfigError("config key 'max_frames': must be >= 1");
    if (channels != "all" && channels != "manual") throw ConfigError("config key 'channels': expected \"all\" or \"manual\"");
    encoder.validate();
  }

  /// Reads known keys into `cfg`; the caller decides when to call finish().
  static void read_fields(ConfigReader& r, TrainConfig& cfg) {
    std::string variant = to_string(cfg.variant);
    r.read("model_variant", variant);
    cfg.variant = parse_variant(variant);
    r.read("learning_rate", cfg.learning_rate);
    r.read("batch_size", cfg.batch_size);
    r.read("max_steps", cfg.max_steps);
    r.read("seed", cfg.seed);
    r.read("clip_norm", cfg.clip_norm);
    r.read("eval_interval", cfg.eval_interval);
    r.read("deterministic", cfg.deterministic);
    r.read("adam_beta1", cfg.adam_beta1);
    r.read("adam_beta2", cfg.adam_beta2);
    read_encoder_fields(r, cfg.encoder);
    r.read("fusion_cap", cfg.fusion_cap);
    r.read("max_frames", cfg.max_frames);
    r.read("stop_eps", cfg.stop_eps);
    r.read("counter_weight", cfg.counter_weight);
    r.read("channels", cfg.channels);
  }

  static TrainConfig from_json(const json& j) {
    TrainConfig cfg;
    ConfigReader r(j);
    read_fields(r, cfg);
    r.finish();
    cfg.validate();
    return cfg;
  }

  json to_json() const {
    json j{{"model_variant", to_string(variant)},
           {"learning_rate", learning_rate},
           {"batch_size", batch_size},
           {"max_steps", max_steps},
           {"seed", seed},
           {"clip_norm", clip_norm},
           {"eval_interval", eval_interval},
           {"deterministic", deterministic},
           {"adam_beta1", adam_beta1},
           {"adam_beta2", adam_beta2},
           {"fusion_cap", fusion_cap},
           {"max_frames", max_frames},
           {"stop_eps", stop_eps},
           {"counter_weight", counter_weight},
           {"channels", channels}};
    write_encoder_fields(j, encoder);
    return j;
  }
};

/// Adaptive moment estimation over a fixed parameter list.
template <class T>
class Adam {
 public:
  Adam(std::vector<Tensor<T>> params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& p : params_) {
      m_.emplace_back(p.numel(), 0.0);
      v_.emplace_back(p.numel(), 0.0);
    }
  }

  std::size_t steps() const { return t_; }

  /// Global L2 norm of all gradients, rescaled down to `max_norm` if larger.
  double clip_grad_norm(double max_norm) {
    double sq = 0.0;
    for (const auto& p : params_)
      if (p.has_grad())
        for (T g : p.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
      const T s = static_cast<T>(max_norm / norm);
      for (auto& p : params_)
        if (p.has_grad())
          for (auto& g : p.node()->grad) g *= s;
    }
    return norm;
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& p = params_[k];
      if (!p.has_grad()) continue;
      auto w = p.mutable_data();
      auto g = p.grad();
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = static_cast<double>(g[i]);
        m_[k][i] = beta1_ * m_[k][i] + (1.0 - beta1_) * gi;
        v_[k][i] = beta2_ * v_[k][i] + (1.0 - beta2_) * gi * gi;
        const double update = lr_ * (m_[k][i] / c1) / (std::sqrt(v_[k][i] / c2) + eps_);
        w[i] = static_cast<T>(static_cast<double>(w[i]) - update);
      }
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

 private:
  std::vector<Tensor<T>> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

/// Pooled MSE over a batch: total squared error / total element count, so a
/// batch of duplicates scores the same as one copy. With counter_weight != 1
/// the counter column's squared errors are scaled by that factor.
template <class T>
Tensor<T> batch_loss(const SignGenerator<T>& model, std::span<const PreparedSample<T>* const> batch,
                     const ForwardContext& ctx, double counter_weight = 1.0) {
  std::size_t total = 0;
  for (const auto* s : batch) total += s->target.numel();
  Tensor<T> loss;
  for (const auto* s : batch) {
    const Tensor<T> pred = model.teacher_forced(*s, ctx);
    Tensor<T> term;
    if (counter_weight == 1.0) {
      term = scale(mse_loss(pred, s->target), static_cast<T>(s->target.numel()) / static_cast<T>(total));
    } else {
      const std::size_t len = pred.rows(), d = pred.cols() - 1;
      const Tensor<T> frames = scale(mse_loss(slice_cols(pred, 0, d), slice_cols(s->target, 0, d)),
                                     static_cast<T>(len * d) / static_cast<T>(total));
      const Tensor<T> counter = scale(mse_loss(slice_cols(pred, d, 1), slice_cols(s->target, d, 1)),
                                      static_cast<T>(counter_weight * static_cast<double>(len)) / static_cast<T>(total));
      term = add(frames, counter);
    }
    loss = loss ? add(loss, term) : term;
  }
  return loss;
}

/// One optimizer update. Returns the pre-update loss.
template <class T>
double train_step(SignGenerator<T>& model, std::span<const PreparedSample<T>* const> batch, Adam<T>& opt,
                  const TrainConfig& cfg, const ForwardContext& ctx) {
  if (batch.empty()) throw ContractError("train_step: empty batch");
  opt.zero_grad();
  Tensor<T> loss = batch_loss(model, batch, ctx, cfg.counter_weight);
  const double value = static_cast<double>(loss.item());
  if (!std::isfinite(value)) {
    std::string ids;
    for (const auto* s : batch) ids += (ids.empty() ? "" : ", ") + s->id;
    throw ContractError("train_step: non-finite loss on samples [" + ids + "]");
  }
  loss.backward();
  opt.clip_grad_norm(cfg.clip_norm);
  opt.step();
  return value;
}

/// Teacher-forced MSE (eval mode) pooled over a list of samples.
template <class T>
double evaluate_mse(const SignGenerator<T>& model, const std::vector<PreparedSample<T>>& samples) {
  NoGradGuard no_grad;
  double sq = 0.0;
  std::size_t n = 0;
  for (const auto& s : samples) {
    const Tensor<T> pred = model.teacher_forced(s);
    auto p = pred.data();
    auto t = s.target.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double d = static_cast<double>(p[i]) - static_cast<double>(t[i]);
      sq += d * d;
    }
    n += p.size();
  }
  return n ? sq / static_cast<double>(n) : 0.0;
}

struct GeneratorArtifacts {
  ChannelLayout layout;
  NormStats stats;
};

template <class T>
Checkpoint generator_checkpoint(const SignGenerator<T>& model, const TrainConfig& cfg, std::size_t step,
                                const GeneratorArtifacts& art) {
  Checkpoint ck;
  ck.dtype = dtype_name<T>();
  ck.meta = json{{"kind", "generator"},
                 {"step", step},
                 {"config", cfg.to_json()},
                 {"layout", art.layout.to_json()},
                 {"norm_stats", art.stats.to_json()},
                 {"text_vocab", model.spec().text_vocab.tokens()},
                 {"gloss_vocab", model.spec().gloss_vocab.tokens()}};
  ck.params = snapshot(model.parameters());
  return ck;
}

inline void require_kind(const Checkpoint& ck, const std::string& kind) {
  if (ck.meta.value("kind", std::string()) != kind) {
    throw DataError("checkpoint kind is '" + ck.meta.value("kind", std::string()) + "', expected '" + kind + "'");
  }
}

template <class T>
SignGenerator<T> load_generator(const Checkpoint& ck) {
  require_kind(ck, "generator");
  const TrainConfig cfg = TrainConfig::from_json(ck.meta.at("config"));
  GeneratorSpec spec;
  spec.variant = cfg.variant;
  spec.encoder = cfg.encoder;
  spec.fusion_cap = cfg.fusion_cap;
  spec.frame_width = ChannelLayout::from_json(ck.meta.at("layout")).width();
  spec.text_vocab = Vocabulary::from_tokens(ck.meta.at("text_vocab").get<std::vector<std::string>>());
  spec.gloss_vocab = Vocabulary::from_tokens(ck.meta.at("gloss_vocab").get<std::vector<std::string>>());
  Rng rng(cfg.seed);
  SignGenerator<T> model(std::move(spec), rng);
  restore(model.parameters(), ck.params);
  return model;
}

struct FitResult {
  Checkpoint checkpoint;       // best dev loss (or the initial model when max_steps = 0)
  Checkpoint last_checkpoint;  // parameters after the final step
  std::size_t best_step = 0;
  double best_dev_mse = std::numeric_limits<double>::infinity();
  double final_train_mse = std::numeric_limits<double>::quiet_NaN();  // of the final-step parameters
};

/// Dataset restricted to the configured channel set.
inline Dataset select_channels(const Dataset& ds, const std::string& channels) {
  if (channels == "manual") return ds.manual_only();
  if (channels == "all") return ds;
  throw ConfigError("config key 'channels': expected \"all\" or \"manual\"");
}

/// Trains for cfg.max_steps and returns the checkpoint with the lowest dev
/// MSE. `log` receives {"step", "train_mse", "dev_mse"} every eval interval.
template <class T>
FitResult fit(const Dataset& full, const TrainConfig& cfg, const std::function<void(const json&)>& log = {}) {
  cfg.validate();
  const Dataset ds = select_channels(full, cfg.channels);
  const auto& train = ds.split("train");
  if (train.empty()) throw DataError("fit: empty train split");
  if (!ds.has_split("dev") || ds.split("dev").empty()) throw DataError("fit: dataset needs a non-empty dev split");

  GeneratorSpec spec;
  spec.variant = cfg.variant;
  spec.encoder = cfg.encoder;
  spec.frame_width = ds.layout.width();
  spec.fusion_cap = cfg.fusion_cap;
  build_vocabularies(spec, train);

  const std::uint64_t seed = run_seed(cfg.seed, cfg.deterministic);
  Rng init_rng(seed);
  SignGenerator<T> model(std::move(spec), init_rng);
  const GeneratorArtifacts art{ds.layout, ds.stats};

  std::vector<PreparedSample<T>> train_set, dev_set;
  for (const auto& r : train) train_set.push_back(model.prepare(r));
  for (const auto& r : ds.split("dev")) dev_set.push_back(model.prepare(r));

  FitResult result;
  if (cfg.max_steps == 0) {
    result.checkpoint = generator_checkpoint(model, cfg, 0, art);
    result.final_train_mse = evaluate_mse(model, train_set);
    result.last_checkpoint = result.checkpoint;
    return result;
  }

  Adam<T> opt(model.parameters().list(), cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2);
  Rng batch_rng(seed + 1);
  Rng dropout_rng(seed + 2);
  const ForwardContext ctx{true, cfg.encoder.dropout, &dropout_rng};

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  double interval_loss = 0.0;
  std::size_t interval_steps = 0;
  std::vector<NamedArray> best;

  for (std::size_t step = 1; step <= cfg.max_steps; ++step) {
    std::vector<const PreparedSample<T>*> batch;
    while (batch.size() < cfg.batch_size) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), batch_rng);
        cursor = 0;
      }
      batch.push_back(&train_set[order[cursor++]]);
    }
    interval_loss += train_step(model, std::span<const PreparedSample<T>* const>(batch), opt, cfg, ctx);
    ++interval_steps;

    if (step % cfg.eval_interval == 0 || step == cfg.max_steps) {
      const double dev = evaluate_mse(model, dev_set);
      if (log) log(json{{"step", step}, {"train_mse", interval_loss / static_cast<double>(interval_steps)}, {"dev_mse", dev}});
      interval_loss = 0.0;
      interval_steps = 0;
      if (dev < result.best_dev_mse) {
        result.best_dev_mse = dev;
        result.best_step = step;
        best = snapshot(model.parameters());
      }
    }
  }
  result.final_train_mse = evaluate_mse(model, train_set);
  result.last_checkpoint = generator_checkpoint(model, cfg, cfg.max_steps, art);
  restore(model.parameters(), best);
  result.checkpoint = generator_checkpoint(model, cfg, result.best_step, art);
  return result;
}

}  // namespace dualsign
