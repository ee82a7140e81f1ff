// SPDX-License-Identifier: Apache-2.0
//
// Progressive decoder: autoregressive regression of continuous frames plus a
// progress counter, with future frames masked out.

#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "dualsign/dataset.hpp"
#include "dualsign/nn.hpp"

namespace dualsign {

/// Generated sequence: T x D frames and one counter value per frame.
struct DecoderOutput {
  Frames frames;
  std::vector<double> counters;
};

template <class T>
class ProgressiveDecoder {
 public:
  static constexpr double kCounterClampMax = 1.05;

  ProgressiveDecoder() = default;

  ProgressiveDecoder(ParameterStore<T>& store, const std::string& name, std::size_t frame_width, std::size_t layers,
                     std::size_t d_model, std::size_t heads, std::size_t d_ff, Rng& rng)
      : width_(frame_width),
        d_model_(d_model),
        joint_embedding_(store, name + ".joint_embedding", frame_width + 1, d_model, rng) {
    for (std::size_t l = 0; l < layers; ++l)
      layers_.emplace_back(store, name + ".layers." + std::to_string(l), d_model, heads, d_ff, rng);
    head_ = Linear<T>(store, name + ".head", d_model, frame_width + 1, rng);
  }

  std::size_t frame_width() const { return width_; }
  Linear<T>& joint_embedding() { return joint_embedding_; }
  Linear<T>& head() { return head_; }

  /// Rows m_t = [y_t, c_t] (already concatenated, width D+1) through the
  /// continuous embedding plus positions.
  Tensor<T> embed_joint(const Tensor<T>& joint, const ForwardContext& ctx = {}) const {
    if (joint.cols() != joint_embedding_.in_features()) {
      throw DimensionError("embed_targets: joint rows have width " + std::to_string(joint.cols()) +
                           ", projection expects " + std::to_string(joint_embedding_.in_features()));
    }
    return ctx.drop(add(joint_embedding_(joint), positional_encoding<T>(joint.rows(), d_model_)));
  }

  /// Frames (T x D) with their counters appended as column D+1, embedded.
  Tensor<T> embed_targets(const Tensor<T>& frames, std::span<const double> counters, const ForwardContext& ctx = {}) const {
    if (frames.rows() != counters.size()) {
      throw DimensionError("embed_targets: " + std::to_string(frames.rows()) + " frames but " +
                           std::to_string(counters.size()) + " counter values");
    }
    std::vector<T> c(counters.begin(), counters.end());
    Tensor<T> column({counters.size(), 1}, std::move(c));
    return embed_joint(concat_cols(std::vector<Tensor<T>>{frames, column}), ctx);
  }

  /// Causally masked decoding against `memory`; returns T x (D+1) rows of
  /// [predicted frame, predicted counter].
  Tensor<T> operator()(const Tensor<T>& embedded, const Tensor<T>& memory, const ForwardContext& ctx = {}) const {
    if (!memory) throw ContractError("decoder: empty memory");
    if (memory.cols() != d_model_) {
      throw DimensionError("decoder: memory width " + std::to_string(memory.cols()) + " != d_model " +
                           std::to_string(d_model_));
    }
    const auto causal = AttentionMask::causal(embedded.rows());
    Tensor<T> x = embedded;
    for (const auto& layer : layers_) x = layer(x, memory, causal, ctx);
    return head_(x);
  }

  /// Greedy autoregression from an all-zero seed frame with counter 0. Stops
  /// once the predicted counter reaches 1 - stop_eps or after max_frames.
  DecoderOutput generate(const Tensor<T>& memory, std::size_t max_frames, double stop_eps) const {
    if (max_frames < 1) throw ContractError("generate: max_frames must be >= 1");
    if (!memory) throw ContractError("decoder: empty memory");
    NoGradGuard no_grad;
    const std::size_t w = width_ + 1;
    std::vector<typename DecoderLayer<T>::StepCache> caches;
    for (const auto& layer : layers_) caches.push_back(layer.start(memory));
    std::vector<T> input(w, T(0));
    DecoderOutput out;
    out.frames.width = width_;
    while (out.frames.length < max_frames) {
      const std::size_t pos = out.frames.length;
      Tensor<T> x = add(joint_embedding_(Tensor<T>({1, w}, input)), positional_encoding<T>(pos, 1, d_model_));
      for (std::size_t l = 0; l < layers_.size(); ++l) x = layers_[l].step(x, caches[l]);
      const Tensor<T> pred = head_(x);
      auto last = pred.data();
      const double counter = std::clamp(static_cast<double>(last[width_]), 0.0, kCounterClampMax);
      for (std::size_t c = 0; c < width_; ++c) {
        out.frames.values.push_back(static_cast<double>(last[c]));
        input[c] = last[c];
      }
      input[width_] = static_cast<T>(counter);
      out.frames.length += 1;
      out.counters.push_back(counter);
      if (counter >= 1.0 - stop_eps) break;
    }
    return out;
  }

 private:
  std::size_t width_ = 0;
  std::size_t d_model_ = 0;
  Linear<T> joint_embedding_;
  std::vector<DecoderLayer<T>> layers_;
  Linear<T> head_;
};

}  // namespace dualsign
