// SPDX-License-Identifier: Apache-2.0
//
// Back-translation evaluation: generate frames with each model, translate them
// back to text and score against the source sentences.

#pragma once

#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "dualsign/backtranslator.hpp"
#include "dualsign/metrics.hpp"
#include "dualsign/trainer.hpp"

namespace dualsign {

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. Results must be written
/// into per-index slots so the outcome does not depend on scheduling. The
/// first exception is rethrown after all workers stop.
template <class F>
void parallel_for(std::size_t n, std::size_t jobs, F&& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < n && !failed; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          failed = true;
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  if (error) std::rethrow_exception(error);
}

struct EvalOptions {
  std::vector<std::string> splits{"dev", "test"};
  std::size_t max_frames = 300;
  double stop_eps = 0.02;
  std::size_t jobs = 1;
  bool ground_truth = false;  // add a row that back-translates the reference frames
};

struct EvalTranslation {
  std::string id;
  Sentence hypothesis;
  Sentence reference;
  std::size_t frames = 0;
};

struct EvalReport {
  std::vector<std::string> models;  // row order
  std::vector<std::string> splits;
  std::map<std::string, std::map<std::string, TranslationScores>> scores;
  std::map<std::string, std::map<std::string, std::vector<EvalTranslation>>> translations;
};

inline constexpr const char* kGroundTruthRow = "ground_truth";

/// Evaluates each named generator checkpoint on the requested splits of
/// `dataset` (normalized frames, as returned by load_dataset).
inline EvalReport evaluate_models(const std::vector<std::pair<std::string, Checkpoint>>& generators,
                                  const Checkpoint& backtranslator_ck, const Dataset& dataset,
                                  const EvalOptions& opt = {}) {
  const auto bt = load_backtranslator<float>(backtranslator_ck);
  const auto bt_cfg = BackTranslatorConfig::from_json(backtranslator_ck.meta.at("config"));
  const auto bt_layout = ChannelLayout::from_json(backtranslator_ck.meta.at("layout"));
  const Dataset ds = select_channels(dataset, bt_cfg.channels);
  if (!(ds.layout == bt_layout)) {
    throw DataError("evaluate: back-translator layout " + bt_layout.to_json().dump() + " does not match dataset " +
                    ds.layout.to_json().dump());
  }
  const std::size_t length_cap = greedy_length_cap(mean_text_length(dataset.split("train")));

  EvalReport report;
  report.splits = opt.splits;

  auto score_rows = [&](const std::string& name, auto&& frames_for) {
    report.models.push_back(name);
    for (const auto& split : opt.splits) {
      const auto& records = ds.split(split);
      std::vector<EvalTranslation> out(records.size());
      parallel_for(records.size(), opt.jobs, [&](std::size_t i) {
        const Frames f = frames_for(dataset.split(split)[i]);
        out[i] = {records[i].id, bt.translate(f, length_cap), records[i].text, f.length};
      });
      std::vector<Sentence> hyp, ref;
      for (const auto& t : out) {
        hyp.push_back(t.hypothesis);
        ref.push_back(t.reference);
      }
      report.scores[name][split] = score_translations(hyp, ref);
      report.translations[name][split] = std::move(out);
    }
  };

  const bool manual = bt_cfg.channels == "manual";
  auto for_backtranslator = [&](const Frames& f, const ChannelLayout& layout) {
    return manual ? f.columns(0, layout.manual) : f;
  };

  if (opt.ground_truth) {
    score_rows(kGroundTruthRow, [&](const SampleRecord& r) { return for_backtranslator(r.frames, dataset.layout); });
  }
  for (const auto& [name, ck] : generators) {
    const auto model = load_generator<float>(ck);
    const auto gen_layout = ChannelLayout::from_json(ck.meta.at("layout"));
    const ChannelLayout fed = manual ? gen_layout.manual_only() : gen_layout;
    if (!(fed == bt_layout)) {
      throw DataError("evaluate: model '" + name + "' layout " + gen_layout.to_json().dump() +
                      " does not match back-translator layout " + bt_layout.to_json().dump());
    }
    score_rows(name, [&](const SampleRecord& r) {
      return for_backtranslator(model.generate(r.text, r.gloss, opt.max_frames, opt.stop_eps).frames, gen_layout);
    });
  }
  return report;
}

/// Scores as percentages rounded to two decimals.
inline double percent(double score) { return std::round(score * 10000.0) / 100.0; }

inline json scores_json(const TranslationScores& s) {
  return json{{"bleu1", percent(s.bleu1)},
              {"bleu2", percent(s.bleu2)},
              {"bleu3", percent(s.bleu3)},
              {"bleu4", percent(s.bleu4)},
              {"rouge_l", percent(s.rouge_l)}};
}

inline json report_json(const EvalReport& r) {
  json j = json::object();
  for (const auto& m : r.models)
    for (const auto& s : r.splits) j[m][s] = scores_json(r.scores.at(m).at(s));
  return j;
}

inline std::string report_text(const EvalReport& r) {
  std::ostringstream os;
  char buf[200];
  for (const auto& split : r.splits) {
    os << split << "\n";
    std::snprintf(buf, sizeof buf, "%-14s %8s %8s %8s %8s %8s\n", "Model", "BLEU-1", "BLEU-2", "BLEU-3", "BLEU-4",
                  "ROUGE");
    os << buf;
    for (const auto& m : r.models) {
      const auto& s = r.scores.at(m).at(split);
      std::snprintf(buf, sizeof buf, "%-14s %8.2f %8.2f %8.2f %8.2f %8.2f\n", m.c_str(), percent(s.bleu1),
                    percent(s.bleu2), percent(s.bleu3), percent(s.bleu4), percent(s.rouge_l));
      os << buf;
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace dualsign
