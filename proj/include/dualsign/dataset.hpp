// SPDX-License-Identifier: Apache-2.0
//
// Frame datasets: channel layout, sample records, counter targets, z-score
// statistics and the manifest / JSON-lines on-disk format.

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dualsign/tensor.hpp"

namespace dualsign {

using json = nlohmann::json;

/// Input is malformed or inconsistent with its declared layout.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Which frame columns hold manual joints, facial landmarks and AU intensities.
/// Columns are laid out in that order.
struct ChannelLayout {
  std::size_t manual = 150;  // 50 joints x 3
  std::size_t landmarks = 68;
  std::size_t landmark_coords = 2;
  std::size_t aus = 17;

  static constexpr double kAuMax = 5.0;

  std::size_t landmark_dims() const { return landmarks * landmark_coords; }
  std::size_t width() const { return manual + landmark_dims() + aus; }
  std::size_t landmark_begin() const { return manual; }
  std::size_t au_begin() const { return manual + landmark_dims(); }

  /// Same layout restricted to the manual channels.
  ChannelLayout manual_only() const { return ChannelLayout{manual, 0, landmark_coords, 0}; }

  bool operator==(const ChannelLayout&) const = default;

  json to_json() const {
    return json{{"manual", manual}, {"landmarks", landmarks}, {"landmark_coords", landmark_coords}, {"aus", aus}};
  }

  static ChannelLayout from_json(const json& j) {
    ChannelLayout l;
    for (auto it = j.begin(); it != j.end(); ++it) {
      const auto& k = it.key();
      if (!it->is_number_unsigned()) throw DataError("layout: key '" + k + "' must be a non-negative integer");
      const auto v = it->get<std::size_t>();
      if (k == "manual") l.manual = v;
      else if (k == "landmarks") l.landmarks = v;
      else if (k == "landmark_coords") l.landmark_coords = v;
      else if (k == "aus") l.aus = v;
      else throw DataError("layout: unknown key '" + k + "'");
    }
    if (l.landmarks > 0 && l.landmark_coords != 2 && l.landmark_coords != 3) {
      throw DataError("layout: key 'landmark_coords' must be 2 or 3");
    }
    if (l.width() == 0) throw DataError("layout: declares zero channels");
    return l;
  }
};

/// T x D frame matrix, row-major.
struct Frames {
  std::size_t length = 0;
  std::size_t width = 0;
  std::vector<double> values;

  Frames() = default;
  Frames(std::size_t t, std::size_t d) : length(t), width(d), values(t * d, 0.0) {}

  std::span<double> row(std::size_t t) { return {values.data() + t * width, width}; }
  std::span<const double> row(std::size_t t) const { return {values.data() + t * width, width}; }
  double& at(std::size_t t, std::size_t c) { return values[t * width + c]; }
  double at(std::size_t t, std::size_t c) const { return values[t * width + c]; }

  /// Columns [begin, begin + count) of every frame.
  Frames columns(std::size_t begin, std::size_t count) const {
    Frames out(length, count);
    for (std::size_t t = 0; t < length; ++t)
      for (std::size_t c = 0; c < count; ++c) out.at(t, c) = at(t, begin + c);
    return out;
  }

  bool operator==(const Frames&) const = default;
};

struct SampleRecord {
  std::string id;
  std::vector<std::string> text;
  std::vector<std::string> gloss;
  Frames frames;
};

/// Counter values c_t = t / T for t = 1..T, kept as exact rationals.
class CounterTrack {
 public:
  explicit CounterTrack(std::size_t length) : length_(length) {
    if (length < 1) throw ContractError("counter_targets: sequence length must be >= 1");
  }

  std::size_t length() const { return length_; }
  std::size_t denominator() const { return length_; }
  /// t is 1-based.
  std::size_t numerator(std::size_t t) const { return t; }
  double value(std::size_t t) const { return static_cast<double>(t) / static_cast<double>(length_); }

  std::vector<double> values() const {
    std::vector<double> v(length_);
    for (std::size_t t = 1; t <= length_; ++t) v[t - 1] = value(t);
    return v;
  }

 private:
  std::size_t length_;
};

inline CounterTrack counter_targets(std::size_t length) { return CounterTrack(length); }

/// Per-channel affine normalization.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> std;

  static constexpr double kMinStd = 1e-8;

  static NormStats identity(std::size_t width) { return {std::vector<double>(width, 0.0), std::vector<double>(width, 1.0)}; }

  /// Population mean/stddev over every frame; near-constant channels keep unit scale.
  static NormStats compute(const std::vector<SampleRecord>& records, std::size_t width) {
    NormStats s{std::vector<double>(width, 0.0), std::vector<double>(width, 0.0)};
    std::size_t n = 0;
    for (const auto& r : records) {
      for (std::size_t t = 0; t < r.frames.length; ++t)
        for (std::size_t c = 0; c < width; ++c) s.mean[c] += r.frames.at(t, c);
      n += r.frames.length;
    }
    if (n == 0) return identity(width);
    for (auto& m : s.mean) m /= static_cast<double>(n);
    for (const auto& r : records)
      for (std::size_t t = 0; t < r.frames.length; ++t)
        for (std::size_t c = 0; c < width; ++c) {
          const double d = r.frames.at(t, c) - s.mean[c];
          s.std[c] += d * d;
        }
    for (auto& v : s.std) {
      v = std::sqrt(v / static_cast<double>(n));
      if (v < kMinStd) v = 1.0;
    }
    return s;
  }

  std::size_t width() const { return mean.size(); }

  void normalize(Frames& f) const {
    for (std::size_t t = 0; t < f.length; ++t)
      for (std::size_t c = 0; c < f.width; ++c) f.at(t, c) = (f.at(t, c) - mean[c]) / std[c];
  }

  void denormalize(Frames& f) const {
    for (std::size_t t = 0; t < f.length; ++t)
      for (std::size_t c = 0; c < f.width; ++c) f.at(t, c) = f.at(t, c) * std[c] + mean[c];
  }

  /// Stats restricted to a column range.
  NormStats columns(std::size_t begin, std::size_t count) const {
    return {std::vector<double>(mean.begin() + begin, mean.begin() + begin + count),
            std::vector<double>(std.begin() + begin, std.begin() + begin + count)};
  }

  json to_json() const { return json{{"mean", mean}, {"std", std}}; }

  static NormStats from_json(const json& j) {
    NormStats s;
    try {
      s.mean = j.at("mean").get<std::vector<double>>();
      s.std = j.at("std").get<std::vector<double>>();
    } catch (const json::exception& e) {
      throw DataError(std::string("normalization stats: ") + e.what());
    }
    if (s.mean.size() != s.std.size()) throw DataError("normalization stats: mean/std length mismatch");
    return s;
  }
};

/// A loaded corpus. Frames are held normalized; `stats` maps them back.
struct Dataset {
  ChannelLayout layout;
  std::string normalize = "zscore";
  NormStats stats;
  std::map<std::string, std::vector<SampleRecord>> splits;

  const std::vector<SampleRecord>& split(const std::string& name) const {
    auto it = splits.find(name);
    if (it == splits.end()) throw DataError("dataset has no split '" + name + "'");
    return it->second;
  }

  bool has_split(const std::string& name) const { return splits.count(name) != 0; }

  /// The same corpus viewed through the manual channels only.
  Dataset manual_only() const {
    Dataset d;
    d.layout = layout.manual_only();
    d.normalize = normalize;
    d.stats = stats.columns(0, layout.manual);
    for (const auto& [name, recs] : splits) {
      auto& out = d.splits[name];
      for (const auto& r : recs) out.push_back({r.id, r.text, r.gloss, r.frames.columns(0, layout.manual)});
    }
    return d;
  }
};

namespace detail {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path.string());
  out << content;
}

inline json parse_json(const std::string& text, const std::string& where) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(where + ": invalid JSON (" + e.what() + ")");
  }
}

}  // namespace detail

inline json record_to_json(const SampleRecord& r) {
  json frames = json::array();
  for (std::size_t t = 0; t < r.frames.length; ++t) {
    auto row = r.frames.row(t);
    frames.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return json{{"id", r.id}, {"text", r.text}, {"gloss", r.gloss}, {"frames", std::move(frames)}};
}

/// Parses one JSON-lines record and checks it against the layout width.
inline SampleRecord record_from_json(const json& j, std::size_t width) {
  SampleRecord r;
  try {
    r.id = j.at("id").get<std::string>();
  } catch (const json::exception&) {
    throw DataError("record without a string 'id'");
  }
  try {
    r.text = j.at("text").get<std::vector<std::string>>();
    r.gloss = j.at("gloss").get<std::vector<std::string>>();
  } catch (const json::exception&) {
    throw DataError("record '" + r.id + "': 'text' and 'gloss' must be string lists");
  }
  const auto it = j.find("frames");
  if (it == j.end() || !it->is_array()) throw DataError("record '" + r.id + "': missing 'frames' array");
  if (r.text.empty() || r.gloss.empty() || it->empty()) {
    throw DataError("record '" + r.id + "': text, gloss and frames must all be non-empty");
  }
  r.frames = Frames(it->size(), width);
  for (std::size_t t = 0; t < it->size(); ++t) {
    const auto& row = (*it)[t];
    if (!row.is_array() || row.size() != width) {
      throw DataError("record '" + r.id + "': frame " + std::to_string(t) + " has width " +
                      std::to_string(row.is_array() ? row.size() : 0) + ", layout expects " + std::to_string(width));
    }
    for (std::size_t c = 0; c < width; ++c) {
      const auto& v = row[c];
      const double x = v.is_number() ? v.get<double>() : std::nan("");
      if (!std::isfinite(x)) {
        throw DataError("record '" + r.id + "': non-finite value at frame " + std::to_string(t) + ", channel " +
                        std::to_string(c));
      }
      r.frames.at(t, c) = x;
    }
  }
  return r;
}

inline std::vector<SampleRecord> read_jsonl(const std::filesystem::path& path, std::size_t width) {
  std::istringstream in(detail::read_file(path));
  std::vector<SampleRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(record_from_json(detail::parse_json(line, path.string() + ":" + std::to_string(lineno)), width));
  }
  return out;
}

inline std::string records_to_jsonl(const std::vector<SampleRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += record_to_json(r).dump();
    out += '\n';
  }
  return out;
}

/// Reads a manifest and its split files. Statistics come from the train split
/// and normalize every split; frames in the result are normalized.
inline Dataset load_dataset(const std::filesystem::path& manifest_path) {
  const json m = detail::parse_json(detail::read_file(manifest_path), manifest_path.string());
  Dataset ds;
  for (auto it = m.begin(); it != m.end(); ++it) {
    if (it.key() != "layout" && it.key() != "splits" && it.key() != "normalize") {
      throw DataError("manifest: unknown key '" + it.key() + "'");
    }
  }
  if (!m.contains("layout")) throw DataError("manifest: missing key 'layout'");
  if (!m.contains("splits") || !m["splits"].is_object()) throw DataError("manifest: missing key 'splits'");
  ds.layout = ChannelLayout::from_json(m["layout"]);
  ds.normalize = m.value("normalize", std::string("zscore"));
  if (ds.normalize != "zscore" && ds.normalize != "none") {
    throw DataError("manifest: key 'normalize' must be \"zscore\" or \"none\"");
  }
  const auto base = manifest_path.parent_path();
  for (auto it = m["splits"].begin(); it != m["splits"].end(); ++it) {
    if (!it->is_string()) throw DataError("manifest: split '" + it.key() + "' must name a file");
    std::filesystem::path p = it->get<std::string>();
    if (p.is_relative()) p = base / p;
    ds.splits[it.key()] = read_jsonl(p, ds.layout.width());
  }
  if (!ds.has_split("train")) throw DataError("manifest: missing split 'train'");
  ds.stats = ds.normalize == "zscore" ? NormStats::compute(ds.splits["train"], ds.layout.width())
                                      : NormStats::identity(ds.layout.width());
  for (auto& [name, recs] : ds.splits)
    for (auto& r : recs) ds.stats.normalize(r.frames);
  return ds;
}

/// Writes raw (unnormalized) splits plus a manifest into `dir`.
inline void write_dataset(const std::filesystem::path& dir, const ChannelLayout& layout,
                          const std::map<std::string, std::vector<SampleRecord>>& splits,
                          const std::string& normalize = "zscore") {
  json manifest{{"layout", layout.to_json()}, {"normalize", normalize}, {"splits", json::object()}};
  for (const auto& [name, recs] : splits) {
    const std::string file = name + ".jsonl";
    detail::write_file(dir / file, records_to_jsonl(recs));
    manifest["splits"][name] = file;
  }
  detail::write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace dualsign
