// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint container:
//
//   bytes 0..7    magic "DUALSIGN"
//   bytes 8..11   format version, uint32 little-endian
//   bytes 12..19  header length H, uint64 little-endian
//   next H bytes  JSON header: metadata plus the ordered parameter table
//                 [{"name", "shape"}], dtype "f32" or "f64"
//   remainder     parameter values, little-endian, in table order

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "dualsign/dataset.hpp"
#include "dualsign/nn.hpp"

namespace dualsign {

inline constexpr char kCheckpointMagic[8] = {'D', 'U', 'A', 'L', 'S', 'I', 'G', 'N'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  json meta = json::object();
  std::string dtype = "f32";
  std::vector<NamedArray> params;
};

template <class T>
constexpr const char* dtype_name() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? "f32" : "f64";
}

template <class T>
std::vector<NamedArray> snapshot(const ParameterStore<T>& store) {
  std::vector<NamedArray> out;
  for (const auto& [name, p] : store.named()) out.push_back({name, p.shape(), {p.data().begin(), p.data().end()}});
  return out;
}

/// Copies stored values into a store with the identical name/shape table.
template <class T>
void restore(ParameterStore<T>& store, const std::vector<NamedArray>& params) {
  const auto& named = store.named();
  if (named.size() != params.size()) {
    throw DataError("checkpoint holds " + std::to_string(params.size()) + " parameters, model expects " +
                    std::to_string(named.size()));
  }
  for (const auto& a : params) {
    auto it = named.find(a.name);
    if (it == named.end()) throw DataError("checkpoint parameter '" + a.name + "' is unknown to the model");
    if (it->second.shape() != a.shape) {
      throw DataError("checkpoint parameter '" + a.name + "' has shape " + shape_str(a.shape) + ", model expects " +
                      shape_str(it->second.shape()));
    }
    auto dst = Tensor<T>(it->second).mutable_data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(a.values[i]);
  }
}

namespace detail {

template <class U>
void put_le(std::string& out, U v) {
  static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");
  char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.append(buf, sizeof(U));
}

template <class U>
U get_le(const std::string& in, std::size_t& pos, const std::string& path) {
  if (pos + sizeof(U) > in.size()) throw DataError("checkpoint truncated: " + path);
  U v;
  std::memcpy(&v, in.data() + pos, sizeof(U));
  pos += sizeof(U);
  return v;
}

}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& ck) {
  if (ck.dtype != "f32" && ck.dtype != "f64") throw ContractError("checkpoint dtype must be f32 or f64");
  json header = ck.meta;
  header["dtype"] = ck.dtype;
  header["params"] = json::array();
  for (const auto& p : ck.params) header["params"].push_back({{"name", p.name}, {"shape", p.shape}});
  const std::string text = header.dump();

  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  detail::put_le<std::uint64_t>(out, text.size());
  out += text;
  for (const auto& p : ck.params) {
    for (double v : p.values) {
      if (ck.dtype == "f32") detail::put_le<float>(out, static_cast<float>(v));
      else detail::put_le<double>(out, v);
    }
  }
  return out;
}

inline Checkpoint decode_checkpoint(const std::string& bytes, const std::string& path = "<memory>") {
  if (bytes.size() < sizeof kCheckpointMagic || std::memcmp(bytes.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0) {
    throw DataError("not a checkpoint file: " + path);
  }
  std::size_t pos = sizeof kCheckpointMagic;
  const auto version = detail::get_le<std::uint32_t>(bytes, pos, path);
  if (version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version) + ": " + path);
  }
  const auto header_len = detail::get_le<std::uint64_t>(bytes, pos, path);
  if (pos + header_len > bytes.size()) throw DataError("checkpoint truncated: " + path);
  json header = detail::parse_json(bytes.substr(pos, header_len), path);
  pos += header_len;

  Checkpoint ck;
  ck.dtype = header.at("dtype").get<std::string>();
  for (const auto& p : header.at("params")) {
    NamedArray a{p.at("name").get<std::string>(), p.at("shape").get<Shape>(), {}};
    const std::size_t n = numel(a.shape);
    a.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      a.values[i] = ck.dtype == "f32" ? static_cast<double>(detail::get_le<float>(bytes, pos, path))
                                      : detail::get_le<double>(bytes, pos, path);
    }
    ck.params.push_back(std::move(a));
  }
  if (pos != bytes.size()) throw DataError("trailing bytes in checkpoint: " + path);
  header.erase("dtype");
  header.erase("params");
  ck.meta = std::move(header);
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  detail::write_file(path, encode_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(detail::read_file(path), path.string());
}

}  // namespace dualsign
