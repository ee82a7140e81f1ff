// SPDX-License-Identifier: Apache-2.0
//
// Strict JSON config reading: every key must be known and correctly typed, and
// errors name the offending key.

#pragma once

#include <cstdint>
#include <random>
#include <set>
#include <string>

#include <json.hpp>

#include "dualsign/encoder.hpp"

namespace dualsign {

using json = nlohmann::json;

class ConfigReader {
 public:
  explicit ConfigReader(const json& j, std::string scope = "") : j_(j), scope_(std::move(scope)) {
    if (!j.is_object()) throw ConfigError(scope_.empty() ? "config must be a JSON object" : "config key '" + scope_ + "' must be an object");
  }

  void read(const std::string& key, double& out) {
    if (auto* v = take(key)) {
      if (!v->is_number()) fail(key, "expected a number");
      out = v->get<double>();
    }
  }

  void read(const std::string& key, std::size_t& out) {
    if (auto* v = take(key)) {
      if (!v->is_number_unsigned()) fail(key, "expected a non-negative integer");
      out = v->get<std::size_t>();
    }
  }

  void read(const std::string& key, bool& out) {
    if (auto* v = take(key)) {
      if (!v->is_boolean()) fail(key, "expected true or false");
      out = v->get<bool>();
    }
  }

  void read(const std::string& key, std::string& out) {
    if (auto* v = take(key)) {
      if (!v->is_string()) fail(key, "expected a string");
      out = v->get<std::string>();
    }
  }

  /// Raw access for nested objects; marks the key as consumed.
  const json* sub(const std::string& key) { return take(key); }

  /// Rejects any key no read() call asked for.
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown config key '" + qualified(it.key()) + "'");
    }
  }

  [[noreturn]] void fail(const std::string& key, const std::string& why) const {
    throw ConfigError("config key '" + qualified(key) + "': " + why);
  }

 private:
  const json* take(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string qualified(const std::string& key) const { return scope_.empty() ? key : scope_ + "." + key; }

  const json& j_;
  std::string scope_;
  std::set<std::string> seen_;
};

/// The seed actually used for a run: the configured one in deterministic
/// mode, otherwise mixed with fresh entropy.
inline std::uint64_t run_seed(std::uint64_t seed, bool deterministic) {
  if (deterministic) return seed;
  std::random_device rd;
  return seed ^ ((static_cast<std::uint64_t>(rd()) << 32) | rd());
}

inline void read_encoder_fields(ConfigReader& r, EncoderConfig& e) {
  r.read("layers", e.layers);
  r.read("heads", e.heads);
  r.read("d_model", e.d_model);
  r.read("d_ff", e.d_ff);
  r.read("dropout", e.dropout);
  r.read("share_embeddings", e.share_embeddings);
}

inline void write_encoder_fields(json& j, const EncoderConfig& e) {
  j["layers"] = e.layers;
  j["heads"] = e.heads;
  j["d_model"] = e.d_model;
  j["d_ff"] = e.d_ff;
  j["dropout"] = e.dropout;
  j["share_embeddings"] = e.share_embeddings;
}

}  // namespace dualsign
