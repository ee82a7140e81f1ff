// SPDX-License-Identifier: Apache-2.0
//
// The `dualsign` command line: synth, train, generate, evaluate,
// backtranslate-train, stats, render. run() is the whole program so tests can
// call it in-process.

#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dualsign/backtranslator.hpp"
#include "dualsign/evaluate.hpp"
#include "dualsign/posstats.hpp"
#include "dualsign/render.hpp"
#include "dualsign/synth.hpp"
#include "dualsign/trainer.hpp"

namespace dualsign::cli {

namespace fs = std::filesystem;

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kModelFile = "model.ckpt";
inline constexpr const char* kLastModelFile = "last.ckpt";
inline constexpr const char* kBackTranslatorDir = "backtranslator";

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline void write_json(const fs::path& path, const json& j) { detail::write_file(path, j.dump(2) + "\n"); }

inline void write_jsonl(const fs::path& path, const std::vector<json>& rows) {
  std::string s;
  for (const auto& r : rows) s += r.dump() + "\n";
  detail::write_file(path, s);
}

inline void write_run_manifest(const fs::path& out, const std::string& command, const json& config,
                               std::optional<std::uint64_t> seed) {
  json j{{"tool", "dualsign"},
         {"version", kVersion},
         {"command", command},
         {"config", config},
         {"config_hash", hex64(fnv1a(config.dump()))},
         {"seed", seed ? json(*seed) : json(nullptr)}};
  write_json(out / "run.json", j);
}

inline json read_json_file(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("file not found: " + path.string());
  return detail::parse_json(detail::read_file(path), path.string());
}

/// Applies `key=value` overrides; dotted keys reach into nested objects and
/// values parse as JSON when they can, as plain strings otherwise.
inline void apply_overrides(json& config, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + o + "' must look like key=value");
    const std::string key = o.substr(0, eq), text = o.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    json* node = &config;
    std::size_t start = 0;
    for (;;) {
      const auto dot = key.find('.', start);
      const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      if (!node->is_object()) throw ConfigError("override '" + key + "': '" + part + "' is not inside an object");
      if (dot == std::string::npos) {
        (*node)[part] = value;
        break;
      }
      node = &(*node)[part];
      if (node->is_null()) *node = json::object();
      start = dot + 1;
    }
  }
}

/// Manifest path from a directory or a file path.
inline fs::path manifest_path(const fs::path& p) {
  const fs::path m = fs::is_directory(p) ? p / "manifest.json" : p;
  if (!fs::exists(m)) throw DataError("dataset manifest not found: " + m.string());
  return m;
}

inline SynthConfig synth_config_from_json(const json& j) {
  SynthConfig c;
  ConfigReader r(j);
  std::size_t seed = c.seed;
  r.read("seed", seed);
  c.seed = seed;
  r.read("n_samples", c.n_samples);
  r.read("n_dev", c.n_dev);
  r.read("n_test", c.n_test);
  r.read("gloss_groups", c.gloss_groups);
  r.read("max_glosses", c.max_glosses);
  r.read("modifier_prob", c.modifier_prob);
  if (const json* layout = r.sub("layout")) {
    try {
      c.layout = ChannelLayout::from_json(*layout);
    } catch (const DataError& e) {
      throw ConfigError(std::string("config key 'layout': ") + e.what());
    }
  }
  r.finish();
  if (c.n_samples < 1) throw ConfigError("config key 'n_samples': must be >= 1");
  if (!(c.modifier_prob >= 0.0 && c.modifier_prob <= 1.0)) throw ConfigError("config key 'modifier_prob': must lie in [0, 1]");
  return c;
}

inline json synth_config_to_json(const SynthConfig& c) {
  return json{{"seed", c.seed},
              {"n_samples", c.n_samples},
              {"n_dev", c.n_dev},
              {"n_test", c.n_test},
              {"gloss_groups", c.gloss_groups},
              {"max_glosses", c.max_glosses},
              {"modifier_prob", c.modifier_prob},
              {"layout", c.layout.to_json()}};
}

/// Options shared by every subcommand.
struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  std::optional<bool> deterministic;
  std::optional<std::size_t> max_frames;
  std::optional<double> stop_eps;
  std::vector<std::string> overrides;

  void attach(CLI::App* cmd, bool out_required) {
    cmd->add_option("--config", config, "JSON config file")->check(CLI::ExistingFile);
    auto* o = cmd->add_option("--out", out, "output directory");
    if (out_required) o->required();
    cmd->add_option("--seed", seed, "random seed (overrides the config)");
    cmd->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
    cmd->add_option("--deterministic", deterministic, "reproducible seeding (true/false)");
    cmd->add_option("--max-frames", max_frames, "generation frame cap")->check(CLI::PositiveNumber);
    cmd->add_option("--stop-eps", stop_eps, "stop when the counter reaches 1 - eps");
    cmd->add_option("--set", overrides, "config override key=value (repeatable)");
  }

  json load_config() const {
    json j = config.empty() ? json::object() : read_json_file(config);
    if (!j.is_object()) throw ConfigError("config file " + config + " must hold a JSON object");
    apply_overrides(j, overrides);
    return j;
  }

  std::size_t worker_count() const { return jobs.value_or(1); }
};

struct Context {
  std::ostream& out;
  std::ostream& err;
};

// ---------------------------------------------------------------- synth

inline void cmd_synth(const Common& c, Context& io) {
  json j = c.load_config();
  if (c.seed) j["seed"] = *c.seed;
  const SynthConfig cfg = synth_config_from_json(j);
  const fs::path out = c.out;
  synth_corpus(cfg, out);
  write_run_manifest(out, "synth", synth_config_to_json(cfg), cfg.seed);
  io.out << "wrote synthetic corpus to " << out.string() << "\n";
}

// ---------------------------------------------------------------- train

struct TrainPlan {
  fs::path data;
  std::vector<TrainConfig> generators;
  std::optional<BackTranslatorConfig> backtranslator;
  json effective;
};

/// Splits a train config into per-variant generator configs and an optional
/// back-translator block. model_variant may be one variant, a list, or "all".
inline TrainPlan plan_training(const Common& c, const std::string& data_flag) {
  json j = c.load_config();
  const fs::path config_dir = c.config.empty() ? fs::path(".") : fs::path(c.config).parent_path();
  TrainPlan plan;

  std::string data = data_flag;
  if (data.empty()) {
    if (!j.contains("data") || !j["data"].is_string()) {
      throw ConfigError("config key 'data': dataset path missing (set it in the config or pass --data)");
    }
    fs::path p = j["data"].get<std::string>();
    data = (p.is_relative() ? config_dir / p : p).string();
  }
  j.erase("data");
  plan.data = fs::absolute(manifest_path(data)).lexically_normal();

  std::optional<json> bt_block;
  if (j.contains("backtranslator")) {
    bt_block = j["backtranslator"];
    j.erase("backtranslator");
  }

  std::vector<Variant> variants;
  const json v = j.contains("model_variant") ? j["model_variant"] : json("all");
  j.erase("model_variant");
  if (v.is_string() && v.get<std::string>() == "all") {
    variants = {Variant::G2S, Variant::T2S, Variant::TG2S};
  } else if (v.is_string()) {
    variants = {parse_variant(v.get<std::string>())};
  } else if (v.is_array() && !v.empty()) {
    for (const auto& e : v) {
      if (!e.is_string()) throw ConfigError("config key 'model_variant': list entries must be strings");
      variants.push_back(parse_variant(e.get<std::string>()));
    }
  } else {
    throw ConfigError("config key 'model_variant': expected a variant name, a list of names, or \"all\"");
  }

  if (c.seed) j["seed"] = *c.seed;
  if (c.deterministic) j["deterministic"] = *c.deterministic;
  if (c.max_frames) j["max_frames"] = *c.max_frames;
  if (c.stop_eps) j["stop_eps"] = *c.stop_eps;

  json effective_generators = json::array();
  for (Variant var : variants) {
    json g = j;
    g["model_variant"] = to_string(var);
    TrainConfig cfg = TrainConfig::from_json(g);
    effective_generators.push_back(cfg.to_json());
    plan.generators.push_back(std::move(cfg));
  }
  plan.effective = json{{"data", plan.data.string()}, {"generators", effective_generators}};
  if (bt_block) {
    json b = *bt_block;
    if (c.seed && !b.contains("seed")) b["seed"] = *c.seed;
    if (c.deterministic) b["deterministic"] = *c.deterministic;
    plan.backtranslator = BackTranslatorConfig::from_json(b, "backtranslator");
    plan.effective["backtranslator"] = plan.backtranslator->to_json();
  }
  return plan;
}

inline void train_backtranslator_into(const Dataset& ds, const BackTranslatorConfig& cfg, const fs::path& dir,
                                      Context& io) {
  std::vector<json> log;
  const auto fit = fit_backtranslator<float>(ds, cfg, [&](const json& row) { log.push_back(row); });
  save_checkpoint(fit.checkpoint, dir / kModelFile);
  write_jsonl(dir / "train_log.jsonl", log);
  io.out << "back-translator: best dev cross-entropy " << fit.best_dev_ce << " at step " << fit.best_step << "\n";
}

inline void cmd_train(const Common& c, const std::string& data_flag, Context& io) {
  const TrainPlan plan = plan_training(c, data_flag);
  const Dataset ds = load_dataset(plan.data);
  const fs::path out = c.out;
  for (const auto& cfg : plan.generators) {
    const fs::path dir = out / to_string(cfg.variant);
    std::vector<json> log;
    const auto fit = dualsign::fit<float>(ds, cfg, [&](const json& row) { log.push_back(row); });
    save_checkpoint(fit.checkpoint, dir / kModelFile);
    save_checkpoint(fit.last_checkpoint, dir / kLastModelFile);
    write_jsonl(dir / "train_log.jsonl", log);
    write_json(dir / "norm_stats.json", select_channels(ds, cfg.channels).stats.to_json());
    io.out << to_string(cfg.variant) << ": final train MSE " << fit.final_train_mse << ", best dev MSE "
           << fit.best_dev_mse << " at step " << fit.best_step << "\n";
  }
  if (plan.backtranslator) train_backtranslator_into(ds, *plan.backtranslator, out / kBackTranslatorDir, io);
  write_run_manifest(out, "train", plan.effective,
                     plan.generators.empty() ? std::nullopt : std::optional<std::uint64_t>(plan.generators[0].seed));
}

// ------------------------------------------------------ backtranslate-train

inline void cmd_backtranslate_train(const Common& c, const std::string& data_flag, Context& io) {
  json j = c.load_config();
  const fs::path config_dir = c.config.empty() ? fs::path(".") : fs::path(c.config).parent_path();
  std::string data = data_flag;
  if (data.empty()) {
    if (!j.contains("data") || !j["data"].is_string()) {
      throw ConfigError("config key 'data': dataset path missing (set it in the config or pass --data)");
    }
    fs::path p = j["data"].get<std::string>();
    data = (p.is_relative() ? config_dir / p : p).string();
  }
  j.erase("data");
  if (c.seed) j["seed"] = *c.seed;
  if (c.deterministic) j["deterministic"] = *c.deterministic;
  const auto cfg = BackTranslatorConfig::from_json(j);
  const fs::path manifest = fs::absolute(manifest_path(data)).lexically_normal();
  const Dataset ds = load_dataset(manifest);
  train_backtranslator_into(ds, cfg, c.out, io);
  write_run_manifest(c.out, "backtranslate-train", json{{"data", manifest.string()}, {"backtranslator", cfg.to_json()}},
                     cfg.seed);
}

// ------------------------------------------------------------- models dir

/// Generator checkpoints under a models directory: every subdirectory holding
/// a generator model.ckpt, in name order. A single checkpoint file also works.
inline std::vector<std::pair<std::string, Checkpoint>> load_generators(const fs::path& models) {
  std::vector<std::pair<std::string, Checkpoint>> out;
  if (fs::is_regular_file(models)) {
    auto ck = load_checkpoint(models);
    require_kind(ck, "generator");
    out.emplace_back(ck.meta.at("config").at("model_variant").get<std::string>(), std::move(ck));
    return out;
  }
  if (!fs::is_directory(models)) throw DataError("models path not found: " + models.string());
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(models))
    if (e.is_directory() && fs::exists(e.path() / kModelFile)) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  for (const auto& d : dirs) {
    auto ck = load_checkpoint(d / kModelFile);
    if (ck.meta.value("kind", std::string()) == "generator") out.emplace_back(d.filename().string(), std::move(ck));
  }
  if (out.empty()) throw DataError("no generator checkpoints under " + models.string());
  // Baselines first when the names are the variants.
  auto rank = [](const std::string& n) { return n == "G2S" ? 0 : n == "T2S" ? 1 : n == "TG2S" ? 2 : 3; };
  std::stable_sort(out.begin(), out.end(), [&](const auto& a, const auto& b) { return rank(a.first) < rank(b.first); });
  return out;
}

/// Dataset for commands run against a models directory: --data wins, then the
/// path recorded by `train`.
inline fs::path resolve_data(const std::string& data_flag, const fs::path& models) {
  if (!data_flag.empty()) return manifest_path(data_flag);
  const fs::path run = (fs::is_directory(models) ? models : models.parent_path().parent_path()) / "run.json";
  if (fs::exists(run)) {
    const json j = read_json_file(run);
    if (j.contains("config") && j["config"].contains("data")) return manifest_path(j["config"]["data"].get<std::string>());
  }
  throw DataError("no dataset given: pass --data (no run.json with a data path next to " + models.string() + ")");
}

// ---------------------------------------------------------------- generate

struct SourcePair {
  std::string id;
  std::vector<std::string> text;
  std::vector<std::string> gloss;
};

inline std::vector<SourcePair> read_sources(const fs::path& path) {
  const std::string body = detail::read_file(path);
  std::istringstream in(body);
  std::vector<SourcePair> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    const json j = detail::parse_json(line, where);
    try {
      out.push_back({j.value("id", "line-" + std::to_string(lineno)), j.at("text").get<std::vector<std::string>>(),
                     j.at("gloss").get<std::vector<std::string>>()});
    } catch (const json::exception& e) {
      throw DataError(where + ": " + e.what());
    }
    if (out.back().text.empty() || out.back().gloss.empty()) throw DataError(where + ": text and gloss must be non-empty");
  }
  return out;
}

struct GenerateOptions {
  std::string model;
  std::string data;
  std::string split = "test";
  std::string input;
  std::size_t render_stride = 0;
};

inline void cmd_generate(const Common& c, const GenerateOptions& g, Context& io) {
  const fs::path out = c.out;
  const auto models = load_generators(g.model);
  std::vector<SourcePair> sources;
  std::string source_name;
  if (!g.input.empty()) {
    sources = read_sources(g.input);
    source_name = fs::path(g.input).stem().string();
  } else {
    const Dataset ds = load_dataset(resolve_data(g.data, g.model));
    for (const auto& r : ds.split(g.split)) sources.push_back({r.id, r.text, r.gloss});
    source_name = g.split;
  }
  json effective{{"models", json::array()}, {"source", source_name}, {"render_stride", g.render_stride}};
  for (const auto& [name, ck] : models) {
    const auto cfg = TrainConfig::from_json(ck.meta.at("config"));
    const std::size_t max_frames = c.max_frames.value_or(cfg.max_frames);
    const double stop_eps = c.stop_eps.value_or(cfg.stop_eps);
    const auto model = load_generator<float>(ck);
    const auto layout = ChannelLayout::from_json(ck.meta.at("layout"));
    const auto stats = NormStats::from_json(ck.meta.at("norm_stats"));
    std::vector<SampleRecord> records(sources.size());
    std::vector<std::vector<double>> counters(sources.size());
    parallel_for(sources.size(), c.worker_count(), [&](std::size_t i) {
      auto o = model.generate(sources[i].text, sources[i].gloss, max_frames, stop_eps);
      stats.denormalize(o.frames);
      records[i] = {sources[i].id, sources[i].text, sources[i].gloss, std::move(o.frames)};
      counters[i] = std::move(o.counters);
    });
    const fs::path dir = out / "generated" / name;
    detail::write_file(dir / (source_name + ".jsonl"), records_to_jsonl(records));
    std::vector<json> counter_rows;
    for (std::size_t i = 0; i < records.size(); ++i) counter_rows.push_back({{"id", records[i].id}, {"counters", counters[i]}});
    write_jsonl(dir / (source_name + ".counters.jsonl"), counter_rows);
    write_json(dir / "norm_stats.json", stats.to_json());
    if (g.render_stride > 0) {
      for (const auto& r : records)
        for (const auto& [t, svg] : render_sequence(r.frames, layout, g.render_stride)) {
          char file[32];
          std::snprintf(file, sizeof file, "frame_%04zu.svg", t);
          detail::write_file(dir / "render" / r.id / file, svg);
        }
    }
    effective["models"].push_back({{"name", name}, {"max_frames", max_frames}, {"stop_eps", stop_eps}});
    io.out << name << ": generated " << records.size() << " sequences\n";
  }
  write_run_manifest(out, "generate", effective, std::nullopt);
}

// ---------------------------------------------------------------- evaluate

struct EvaluateOptions {
  std::string models;
  std::string backtranslator;
  std::string data;
  std::vector<std::string> splits{"dev", "test"};
  bool ground_truth = false;
};

inline void cmd_evaluate(const Common& c, const EvaluateOptions& e, Context& io) {
  const fs::path models_path = e.models;
  const auto generators = load_generators(models_path);
  fs::path bt_path = e.backtranslator;
  if (bt_path.empty()) {
    if (!fs::is_directory(models_path)) throw DataError("pass --backtranslator when --models names a single checkpoint");
    bt_path = models_path / kBackTranslatorDir / kModelFile;
  }
  if (fs::is_directory(bt_path)) bt_path /= kModelFile;
  if (!fs::exists(bt_path)) throw DataError("back-translator checkpoint not found: " + bt_path.string());
  const Checkpoint bt = load_checkpoint(bt_path);
  const Dataset ds = load_dataset(resolve_data(e.data, models_path));

  EvalOptions opt;
  opt.splits = e.splits;
  opt.jobs = c.worker_count();
  opt.ground_truth = e.ground_truth;
  const auto first_cfg = TrainConfig::from_json(generators.front().second.meta.at("config"));
  opt.max_frames = c.max_frames.value_or(first_cfg.max_frames);
  opt.stop_eps = c.stop_eps.value_or(first_cfg.stop_eps);

  const EvalReport report = evaluate_models(generators, bt, ds, opt);
  const fs::path out = c.out;
  write_json(out / "report.json", report_json(report));
  const std::string table = report_text(report);
  detail::write_file(out / "report.txt", table);
  std::vector<json> rows;
  for (const auto& m : report.models)
    for (const auto& s : report.splits)
      for (const auto& t : report.translations.at(m).at(s))
        rows.push_back({{"model", m}, {"split", s}, {"id", t.id}, {"frames", t.frames}, {"hypothesis", t.hypothesis},
                        {"reference", t.reference}});
  write_jsonl(out / "translations.jsonl", rows);
  json names = json::array();
  for (const auto& [name, _] : generators) names.push_back(name);
  write_run_manifest(out,
                     "evaluate",
                     json{{"models", names},
                          {"splits", e.splits},
                          {"ground_truth", e.ground_truth},
                          {"max_frames", opt.max_frames},
                          {"stop_eps", opt.stop_eps}},
                     std::nullopt);
  io.out << table;
}

// ------------------------------------------------------------------- stats

inline void cmd_stats(const Common& c, const std::string& tagged, Context& io) {
  const PosReport report = pos_report(read_tagged(tagged));
  io.out << pos_report_text(report);
  if (!c.out.empty()) {
    write_json(fs::path(c.out) / "pos_report.json", pos_report_json(report));
    detail::write_file(fs::path(c.out) / "pos_report.txt", pos_report_text(report));
    write_run_manifest(c.out, "stats", json{{"tagged", fs::path(tagged).filename().string()}}, std::nullopt);
  }
}

// ------------------------------------------------------------------ render

struct RenderOptions {
  std::string input;
  std::string data;
  std::size_t stride = 1;
  std::size_t limit = 0;
};

inline void cmd_render(const Common& c, const RenderOptions& r, Context& io) {
  ChannelLayout layout;
  if (!r.data.empty()) layout = ChannelLayout::from_json(read_json_file(manifest_path(r.data)).at("layout"));
  const auto records = read_jsonl(r.input, layout.width());
  const std::size_t n = r.limit ? std::min(r.limit, records.size()) : records.size();
  std::size_t files = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& [t, svg] : render_sequence(records[i].frames, layout, r.stride)) {
      char file[32];
      std::snprintf(file, sizeof file, "frame_%04zu.svg", t);
      detail::write_file(fs::path(c.out) / records[i].id / file, svg);
      ++files;
    }
  }
  write_run_manifest(c.out, "render", json{{"input", fs::path(r.input).filename().string()}, {"stride", r.stride}, {"limit", r.limit}},
                     std::nullopt);
  io.out << "rendered " << files << " frames from " << n << " sequences\n";
}

// --------------------------------------------------------------------- run

/// Exit codes: 0 success, 1 runtime error, 2 usage error.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Dual encoder sign language generation: synthesis, training, generation, evaluation.", "dualsign"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  Common common;
  std::string data;
  GenerateOptions gen;
  EvaluateOptions eval;
  RenderOptions render;
  std::string tagged;

  auto* synth = app.add_subcommand("synth", "write a deterministic synthetic corpus");
  common.attach(synth, true);

  auto* train = app.add_subcommand("train", "train generator variants (and optionally a back-translator)");
  common.attach(train, true);
  train->add_option("--data", data, "dataset manifest or directory (overrides the config's 'data')");

  auto* generate = app.add_subcommand("generate", "generate frame sequences with trained generators");
  common.attach(generate, true);
  generate->add_option("--model,--models", gen.model, "checkpoint file or models directory")->required();
  generate->add_option("--data", gen.data, "dataset manifest or directory");
  generate->add_option("--split", gen.split, "dataset split to generate for");
  generate->add_option("--input", gen.input, "JSON-lines of {id, text, gloss} instead of a dataset split");
  generate->add_option("--render", gen.render_stride, "also write SVGs for every N-th frame");

  auto* evaluate = app.add_subcommand("evaluate", "back-translate generated sequences and score them");
  common.attach(evaluate, true);
  evaluate->add_option("--models", eval.models, "models directory or a single generator checkpoint")->required();
  evaluate->add_option("--backtranslator", eval.backtranslator, "back-translator checkpoint or directory");
  evaluate->add_option("--data", eval.data, "dataset manifest or directory");
  evaluate->add_option("--split", eval.splits, "splits to score (repeatable)");
  evaluate->add_flag("--ground-truth", eval.ground_truth, "add a row scoring the reference frames");

  auto* bt = app.add_subcommand("backtranslate-train", "train a pose-to-text back-translator");
  common.attach(bt, true);
  bt->add_option("--data", data, "dataset manifest or directory (overrides the config's 'data')");

  auto* stats = app.add_subcommand("stats", "part-of-speech table and two-proportion Z tests");
  common.attach(stats, false);
  stats->add_option("--tagged", tagged, "JSON-lines of {tokens, tags, source}")->required();

  auto* rend = app.add_subcommand("render", "SVG stick figures for a frames file");
  common.attach(rend, true);
  rend->add_option("--input", render.input, "JSON-lines frames file (raw values)")->required();
  rend->add_option("--data", render.data, "dataset manifest supplying the channel layout");
  rend->add_option("--stride", render.stride, "render every N-th frame")->check(CLI::PositiveNumber);
  rend->add_option("--limit", render.limit, "render at most this many sequences");

  if (argc <= 1) {
    err << app.help();
    return 2;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << sub->help();
    return 2;
  }

  Context io{out, err};
  try {
    if (*synth) cmd_synth(common, io);
    else if (*train) cmd_train(common, data, io);
    else if (*generate) cmd_generate(common, gen, io);
    else if (*evaluate) cmd_evaluate(common, eval, io);
    else if (*bt) cmd_backtranslate_train(common, data, io);
    else if (*stats) cmd_stats(common, tagged, io);
    else if (*rend) cmd_render(common, render, io);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace dualsign::cli
