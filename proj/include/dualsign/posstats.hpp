// SPDX-License-Identifier: Apache-2.0
//
// Part-of-speech occurrence tables and the pooled two-proportion Z test.

#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dualsign/dataset.hpp"

namespace dualsign {

inline const std::array<std::string, 4> kPosTags = {"NOUN", "VERB", "ADV", "ADJ"};

/// Counts for one source. Tags outside kPosTags land in `other`, which is
/// reported but excluded from `total()`.
struct PosRow {
  std::map<std::string, std::size_t> counts;
  std::size_t other = 0;

  std::size_t count(const std::string& tag) const {
    auto it = counts.find(tag);
    return it == counts.end() ? 0 : it->second;
  }

  std::size_t total() const {
    std::size_t t = 0;
    for (const auto& tag : kPosTags) t += count(tag);
    return t;
  }
};

struct TaggedSentence {
  std::vector<std::string> tokens;
  std::vector<std::string> tags;
  std::string source;  // "text" or "gloss"
};

inline PosRow pos_counts(const std::vector<TaggedSentence>& corpus) {
  PosRow row;
  for (const auto& tag : kPosTags) row.counts[tag] = 0;
  for (const auto& s : corpus) {
    for (const auto& tag : s.tags) {
      auto it = row.counts.find(tag);
      if (it != row.counts.end()) ++it->second;
      else ++row.other;
    }
  }
  return row;
}

struct ZTest {
  double z = 0;
  double p = 1;  // two-sided
};

/// Pooled two-proportion test of x1/n1 against x2/n2; z is positive when the
/// second proportion is larger.
inline ZTest two_proportion_z(std::size_t x1, std::size_t n1, std::size_t x2, std::size_t n2) {
  if (n1 == 0 || n2 == 0) throw ContractError("two_proportion_z: sample sizes must be positive");
  if (x1 > n1 || x2 > n2) throw ContractError("two_proportion_z: count exceeds sample size");
  const double p1 = static_cast<double>(x1) / static_cast<double>(n1);
  const double p2 = static_cast<double>(x2) / static_cast<double>(n2);
  const double pooled = static_cast<double>(x1 + x2) / static_cast<double>(n1 + n2);
  const double var = pooled * (1 - pooled) * (1.0 / static_cast<double>(n1) + 1.0 / static_cast<double>(n2));
  if (var == 0) return {0.0, 1.0};  // both samples all-or-nothing and identical
  const double z = (p2 - p1) / std::sqrt(var);
  return {z, std::erfc(std::abs(z) / std::sqrt(2.0))};
}

/// p-values print in %.6g, or "< 1e-300" once they underflow that far.
inline std::string format_p(double p) {
  if (p < 1e-300) return "< 1e-300";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", p);
  return buf;
}

struct PosReport {
  PosRow gloss;
  PosRow text;
  std::map<std::string, ZTest> tests;
};

inline std::vector<TaggedSentence> read_tagged(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open tagged corpus: " + path.string());
  std::vector<TaggedSentence> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    const json j = detail::parse_json(line, where);
    TaggedSentence s;
    try {
      s.tokens = j.at("tokens").get<std::vector<std::string>>();
      s.tags = j.at("tags").get<std::vector<std::string>>();
      s.source = j.at("source").get<std::string>();
    } catch (const json::exception& e) {
      throw DataError(where + ": " + e.what());
    }
    if (s.tokens.size() != s.tags.size()) throw DataError(where + ": tokens and tags differ in length");
    if (s.source != "text" && s.source != "gloss") throw DataError(where + ": source must be \"text\" or \"gloss\"");
    out.push_back(std::move(s));
  }
  return out;
}

inline PosReport pos_report(const std::vector<TaggedSentence>& corpus) {
  std::vector<TaggedSentence> gloss, text;
  for (const auto& s : corpus) (s.source == "gloss" ? gloss : text).push_back(s);
  PosReport r{pos_counts(gloss), pos_counts(text), {}};
  if (r.gloss.total() == 0 || r.text.total() == 0) return r;
  for (const auto& tag : kPosTags) {
    r.tests[tag] = two_proportion_z(r.gloss.count(tag), r.gloss.total(), r.text.count(tag), r.text.total());
  }
  return r;
}

inline const char* kPosDenominatorNote =
    "proportions use each source's sum over NOUN, VERB, ADV and ADJ as denominator";

inline json pos_report_json(const PosReport& r) {
  json j;
  for (const auto* src : {"gloss", "text"}) {
    const PosRow& row = std::string(src) == "gloss" ? r.gloss : r.text;
    json counts;
    for (const auto& tag : kPosTags) counts[tag] = row.count(tag);
    j[src] = {{"counts", counts}, {"total", row.total()}, {"other", row.other}};
  }
  json tests = json::object();
  for (const auto& [tag, t] : r.tests) {
    tests[tag] = {{"z", t.z}, {"p", t.p}, {"p_text", format_p(t.p)}, {"significant_at_0.05", t.p < 0.05}};
  }
  j["tests"] = tests;
  j["note"] = kPosDenominatorNote;
  return j;
}

inline std::string pos_report_text(const PosReport& r) {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-6s %10s %10s %12s %14s\n", "POS", "gloss", "text", "z", "p");
  os << buf;
  for (const auto& tag : kPosTags) {
    auto it = r.tests.find(tag);
    if (it != r.tests.end()) {
      std::snprintf(buf, sizeof buf, "%-6s %10zu %10zu %12.4f %14s%s\n", tag.c_str(), r.gloss.count(tag),
                    r.text.count(tag), it->second.z, format_p(it->second.p).c_str(), it->second.p < 0.05 ? " *" : "");
    } else {
      std::snprintf(buf, sizeof buf, "%-6s %10zu %10zu %12s %14s\n", tag.c_str(), r.gloss.count(tag), r.text.count(tag),
                    "-", "-");
    }
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "%-6s %10zu %10zu\n", "TOTAL", r.gloss.total(), r.text.total());
  os << buf;
  std::snprintf(buf, sizeof buf, "%-6s %10zu %10zu\n", "OTHER", r.gloss.other, r.text.other);
  os << buf;
  os << "note: " << kPosDenominatorNote << "; * marks p < 0.05\n";
  return os.str();
}

}  // namespace dualsign
