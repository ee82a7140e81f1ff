// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "dualsign/evaluate.hpp"
#include "dualsign/grad_check.hpp"
#include "test_support.hpp"

using namespace dualsign;
using namespace dualsign::testing;

namespace {

ChannelLayout small_layout() { return ChannelLayout{9, 2, 2, 3}; }

/// Small synthetic corpus, loaded back through the manifest so frames are normalized.
const Dataset& synth_dataset() {
  static const Dataset ds = [] {
    SynthConfig cfg;
    cfg.n_samples = 24;
    cfg.n_dev = 6;
    cfg.n_test = 6;
    cfg.gloss_groups = 2;
    cfg.max_glosses = 2;
    cfg.layout = small_layout();
    const auto dir = scratch_dir("bt_corpus");
    synth_corpus(cfg, dir);
    return load_dataset(dir / "manifest.json");
  }();
  return ds;
}

BackTranslatorConfig small_config(std::size_t steps) {
  BackTranslatorConfig cfg;
  cfg.model = toy_encoder(16, 2, 1);
  cfg.learning_rate = 3e-3;
  cfg.batch_size = 4;
  cfg.max_steps = steps;
  cfg.eval_interval = 20;
  return cfg;
}

TrainConfig generator_config(std::size_t steps) {
  TrainConfig cfg;
  cfg.encoder = toy_encoder(8, 2, 1);
  cfg.max_steps = steps;
  cfg.eval_interval = 5;
  cfg.learning_rate = 1e-3;
  cfg.max_frames = 40;
  return cfg;
}

}  // namespace

TEST(BackTranslatorConfig, Defaults) {
  const BackTranslatorConfig cfg;
  EXPECT_EQ(cfg.channels, "all");
  EXPECT_EQ(cfg.learning_rate, 1e-4);
  EXPECT_EQ(cfg.model.layers, 2u);
}

TEST(BackTranslatorConfig, ScopedUnknownKeyIsNamed) {
  try {
    BackTranslatorConfig::from_json(json{{"chanels", "manual"}}, "backtranslator");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("backtranslator.chanels"), std::string::npos) << e.what();
  }
  EXPECT_THROW(BackTranslatorConfig::from_json(json{{"channels", "face"}}), ConfigError);
}

TEST(BackTranslatorConfig, JsonRoundTrip) {
  auto cfg = small_config(11);
  cfg.channels = "manual";
  EXPECT_EQ(BackTranslatorConfig::from_json(cfg.to_json()).to_json(), cfg.to_json());
}

TEST(BackTranslator, PrepareFramesTokens) {
  Rng rng(1);
  BackTranslator<double> bt(toy_encoder(8, 2, 1), 5, Vocabulary::build({{"regen", "wind"}}), rng);
  const auto s = bt.prepare(toy_record("a", {"wind", "regen", "nebel"}, {}, 3, 5, 1));
  const auto& v = bt.vocabulary();
  EXPECT_EQ(s.input, (std::vector<int>{Vocabulary::kBos, v.index("wind"), v.index("regen"), Vocabulary::kUnk}));
  EXPECT_EQ(s.target, (std::vector<int>{v.index("wind"), v.index("regen"), Vocabulary::kUnk, Vocabulary::kEos}));
  EXPECT_EQ(bt.logits(s.input, bt.encode(s.frames)).shape(), (Shape{4, v.size()}));
  EXPECT_THROW(bt.prepare(toy_record("b", {"wind"}, {}, 3, 6, 1)), DimensionError);
}

TEST(BackTranslator, LossGradientsMatchFiniteDifferences) {
  Rng rng(2);
  BackTranslator<double> bt(toy_encoder(8, 2, 1), 4, Vocabulary::build({{"regen", "wind", "sonne"}}), rng);
  const auto s = bt.prepare(toy_record("g", {"sonne", "wind"}, {}, 5, 4, 2));
  EXPECT_LT(grad_check_params([&] { return bt.loss(s); }, bt.parameters().list(), 150, 4), 1e-5);
}

TEST(BackTranslator, TranslateHonoursLengthCapAndVocabulary) {
  Rng rng(3);
  BackTranslator<float> bt(toy_encoder(8, 2, 1), 4, Vocabulary::build({{"regen", "wind"}}), rng);
  const Frames f = toy_record("t", {}, {}, 6, 4, 3).frames;
  for (std::size_t cap : {0u, 1u, 3u, 7u}) {
    const auto out = bt.translate(f, cap);
    EXPECT_LE(out.size(), cap);
    for (const auto& w : out) {
      EXPECT_NE(w, "<pad>");
      EXPECT_NE(w, "<bos>");
    }
  }
  EXPECT_EQ(bt.translate(f, 5), bt.translate(f, 5));
}

TEST(BackTranslator, CachedDecodingMatchesFullForward) {
  Rng rng(4);
  BackTranslator<double> bt(toy_encoder(8, 2, 2), 4, Vocabulary::build({{"a", "b", "c", "d"}}), rng);
  const Frames f = toy_record("t", {}, {}, 5, 4, 4).frames;
  const auto words = bt.translate(f, 6);
  // Replay the greedy choice with the uncached decoder.
  NoGradGuard no_grad;
  const auto memory = bt.encode(bt.frames_tensor(f));
  std::vector<int> input{Vocabulary::kBos};
  std::vector<std::string> replay;
  while (replay.size() < 6) {
    const auto z = bt.logits(input, memory);
    const auto row = z.data().subspan((input.size() - 1) * z.cols(), z.cols());
    int best = Vocabulary::kEos;
    for (std::size_t k = 0; k < row.size(); ++k) {
      const int id = static_cast<int>(k);
      if (id == Vocabulary::kPad || id == Vocabulary::kBos) continue;
      if (row[k] > row[static_cast<std::size_t>(best)]) best = id;
    }
    if (best == Vocabulary::kEos) break;
    replay.push_back(bt.vocabulary().token(best));
    input.push_back(best);
  }
  EXPECT_EQ(words, replay);
}

TEST(BackTranslator, LengthCap) {
  EXPECT_EQ(greedy_length_cap(2.5), 5u);
  EXPECT_EQ(greedy_length_cap(2.6), 6u);
  EXPECT_EQ(greedy_length_cap(0.0), 1u);
  EXPECT_DOUBLE_EQ(mean_text_length({toy_record("a", {"x"}, {}, 1, 1, 1), toy_record("b", {"x", "y"}, {}, 1, 1, 1)}),
                   1.5);
}

TEST(FitBackTranslator, ZeroStepsIsTheBaseline) {
  const auto res = fit_backtranslator<float>(synth_dataset(), small_config(0));
  EXPECT_EQ(res.best_step, 0u);
  EXPECT_EQ(res.checkpoint.meta["kind"], "backtranslator");
  EXPECT_NO_THROW(load_backtranslator<float>(res.checkpoint));
}

TEST(FitBackTranslator, TrainingLowersDevCrossEntropy) {
  const auto& ds = synth_dataset();
  const auto base = load_backtranslator<float>(fit_backtranslator<float>(ds, small_config(0)).checkpoint);
  std::vector<TranslationSample<float>> dev;
  for (const auto& r : ds.split("dev")) dev.push_back(base.prepare(r));
  const double before = mean_cross_entropy(base, dev);

  std::vector<json> log;
  const auto res = fit_backtranslator<float>(ds, small_config(200), [&](const json& j) { log.push_back(j); });
  ASSERT_EQ(log.size(), 10u);
  EXPECT_TRUE(log[0].contains("train_ce") && log[0].contains("dev_ce"));
  EXPECT_LT(res.best_dev_ce, 0.5 * before) << "baseline " << before;
  EXPECT_LT(log.back()["train_ce"].get<double>(), log.front()["train_ce"].get<double>());
}

TEST(FitBackTranslator, ManualChannelsNarrowTheInput) {
  auto cfg = small_config(2);
  cfg.channels = "manual";
  const auto res = fit_backtranslator<float>(synth_dataset(), cfg);
  EXPECT_EQ(load_backtranslator<float>(res.checkpoint).frame_width(), small_layout().manual);
}

TEST(FitBackTranslator, CheckpointRoundTrip) {
  const auto& ds = synth_dataset();
  const auto res = fit_backtranslator<float>(ds, small_config(20));
  const auto back = decode_checkpoint(encode_checkpoint(res.checkpoint));
  EXPECT_EQ(back.meta, res.checkpoint.meta);
  const auto a = load_backtranslator<float>(res.checkpoint), b = load_backtranslator<float>(back);
  const auto sa = snapshot(a.parameters()), sb = snapshot(b.parameters());
  for (std::size_t i = 0; i < sa.size(); ++i) EXPECT_EQ(sa[i].values, sb[i].values);
  for (const auto& r : ds.split("test")) EXPECT_EQ(a.translate(r.frames, 6), b.translate(r.frames, 6));
  EXPECT_THROW(load_generator<float>(res.checkpoint), DataError);
}

TEST(Evaluate, ReportHasOneRowPerModelAndSplit) {
  const auto& ds = synth_dataset();
  const auto bt = fit_backtranslator<float>(ds, small_config(5)).checkpoint;
  const auto g2s = fit<float>(ds, [] {
                     auto c = generator_config(5);
                     c.variant = Variant::G2S;
                     return c;
                   }()).checkpoint;
  const auto tg2s = fit<float>(ds, generator_config(5)).checkpoint;
  EvalOptions opt;
  opt.max_frames = 20;
  opt.ground_truth = true;
  opt.jobs = 2;
  const auto report = evaluate_models({{"G2S", g2s}, {"TG2S", tg2s}}, bt, ds, opt);
  EXPECT_EQ(report.models, (std::vector<std::string>{kGroundTruthRow, "G2S", "TG2S"}));
  const auto j = report_json(report);
  EXPECT_EQ(j.size(), 3u);
  for (const auto& name : report.models) {
    for (const auto& split : {"dev", "test"}) {
      EXPECT_EQ(report.translations.at(name).at(split).size(), ds.split(split).size());
      for (const auto* key : {"bleu1", "bleu2", "bleu3", "bleu4", "rouge_l"}) {
        const double v = j[name][split][key].get<double>();
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 100.0);
      }
    }
  }
  const auto text = report_text(report);
  EXPECT_NE(text.find("TG2S"), std::string::npos);
  EXPECT_NE(text.find("BLEU-4"), std::string::npos);

  opt.jobs = 1;
  EXPECT_EQ(report_json(evaluate_models({{"G2S", g2s}, {"TG2S", tg2s}}, bt, ds, opt)), j);
}

TEST(Evaluate, LayoutMismatchIsAnError) {
  const auto& ds = synth_dataset();
  const auto bt = fit_backtranslator<float>(ds, small_config(0)).checkpoint;

  Dataset other = ds.manual_only();
  const auto narrow = fit<float>(other, generator_config(0)).checkpoint;
  try {
    evaluate_models({{"narrow", narrow}}, bt, ds, {});
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("narrow"), std::string::npos);
  }
  EXPECT_THROW(evaluate_models({}, bt, other, {}), DataError);
}

TEST(Evaluate, ManualBacktranslatorAcceptsFullGenerators) {
  const auto& ds = synth_dataset();
  auto cfg = small_config(0);
  cfg.channels = "manual";
  const auto bt = fit_backtranslator<float>(ds, cfg).checkpoint;
  const auto gen = fit<float>(ds, generator_config(0)).checkpoint;
  EvalOptions opt;
  opt.splits = {"test"};
  opt.max_frames = 10;
  EXPECT_EQ(evaluate_models({{"TG2S", gen}}, bt, ds, opt).models.size(), 1u);
}

TEST(Evaluate, ParallelForCoversEveryIndexOnce) {
  for (std::size_t jobs : {1u, 2u, 5u}) {
    std::vector<int> hits(37, 0);
    parallel_for(hits.size(), jobs, [&](std::size_t i) { ++hits[i]; });
    for (int h : hits) EXPECT_EQ(h, 1);
  }
  EXPECT_THROW(parallel_for(3, 2, [](std::size_t i) {
                 if (i == 1) throw DataError("boom");
               }),
               DataError);
}

TEST(Evaluate, PercentRounding) {
  EXPECT_EQ(percent(0.123456), 12.35);
  EXPECT_EQ(percent(1.0), 100.0);
  EXPECT_EQ(percent(0.0), 0.0);
}
