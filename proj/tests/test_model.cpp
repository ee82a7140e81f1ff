// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dualsign/generator.hpp"
#include "dualsign/grad_check.hpp"
#include "test_support.hpp"

using namespace dualsign;
using namespace dualsign::testing;

namespace {

using T64 = Tensor<double>;

void set_values(Tensor<double> t, std::vector<double> v) {
  auto d = t.mutable_data();
  ASSERT_EQ(d.size(), v.size());
  std::copy(v.begin(), v.end(), d.begin());
}

void set_identity(Linear<double>& l) {
  auto w = Tensor<double>(l.weight).mutable_data();
  std::fill(w.begin(), w.end(), 0.0);
  for (std::size_t i = 0; i < std::min(l.in_features(), l.out_features()); ++i) w[i * l.out_features() + i] = 1.0;
}

bool bit_equal(const T64& a, const T64& b) {
  return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

}  // namespace

// ---------------------------------------------------------------- embeddings

TEST(Embedding, IdentityTableBasisVectorScaledByRootD) {
  const std::size_t d = 4;
  auto table = T64::identity(d);
  std::vector<int> ids{0};
  auto e = sub(embed_tokens<double>(ids, table), positional_encoding<double>(1, d));
  EXPECT_DOUBLE_EQ(e.at(0, 0), 2.0);
  for (std::size_t c = 1; c < d; ++c) EXPECT_DOUBLE_EQ(e.at(0, c), 0.0);
}

TEST(Embedding, PureFunctionOfTokensAndTable) {
  const auto vocab = Vocabulary::build({{"a", "b", "c"}});
  const auto table = random_matrix(vocab.size(), 6, 3);
  const auto x = embed_source<double>({"a", "c", "zzz"}, vocab, table);
  const auto y = embed_source<double>({"a", "c", "zzz"}, vocab, table);
  EXPECT_TRUE(bit_equal(x, y));
  EXPECT_EQ(x.shape(), (Shape{3, 6}));
}

TEST(PositionalEncoding, PositionZeroAlternatesZeroOne) {
  const auto pe = positional_encoding<double>(1, 6);
  const std::vector<double> expected{0, 1, 0, 1, 0, 1};
  for (std::size_t c = 0; c < 6; ++c) EXPECT_EQ(pe.at(0, c), expected[c]);
}

TEST(PositionalEncoding, PositionOneMatchesSinusoidFormula) {
  // sin(1), cos(1), sin(1/100), cos(1/100) for d = 4.
  const auto pe = positional_encoding<double>(2, 4);
  EXPECT_NEAR(pe.at(1, 0), 0.8414709848078965, 1e-15);
  EXPECT_NEAR(pe.at(1, 1), 0.5403023058681398, 1e-15);
  EXPECT_NEAR(pe.at(1, 2), 0.009999833334166664, 1e-15);
  EXPECT_NEAR(pe.at(1, 3), 0.9999500004166653, 1e-15);
}

TEST(PositionalEncoding, OffsetWindowMatchesTableRows) {
  const auto full = positional_encoding<double>(9, 8);
  const auto window = positional_encoding<double>(5, 3, 8);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(window.at(r, c), full.at(5 + r, c));
}

// ----------------------------------------------------------------- attention

TEST(Attention, SinglePositionIdentityProjectionsReturnValueRow) {
  ParameterStore<double> store;
  Rng rng(1);
  MultiHeadAttention<double> mha(store, "mha", 3, 1, rng);
  for (auto* l : {&mha.query, &mha.key, &mha.value, &mha.output}) set_identity(*l);
  const auto q = random_matrix(1, 3, 2), k = random_matrix(1, 3, 3), v = random_matrix(1, 3, 4);
  const auto out = mha(q, k, v);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(out.at(0, c), v.at(0, c), 1e-15);
}

TEST(Attention, EqualLogitsAverageValueRows) {
  ParameterStore<double> store;
  Rng rng(1);
  MultiHeadAttention<double> mha(store, "mha", 2, 1, rng);
  for (auto* l : {&mha.key, &mha.value, &mha.output}) set_identity(*l);
  set_values(mha.query.weight, {0, 0, 0, 0});  // every query is zero, so Q K^T = 0
  const auto x = T64::matrix(3, 2, {1, 2, 3, 4, 5, 9});
  const auto out = mha(x, x, x);
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_NEAR(out.at(r, 0), 3.0, 1e-12);
    EXPECT_NEAR(out.at(r, 1), 5.0, 1e-12);
  }
}

TEST(Attention, HandComputedTwoPositionOneHead) {
  ParameterStore<double> store;
  Rng rng(1);
  MultiHeadAttention<double> mha(store, "mha", 2, 1, rng);
  set_values(mha.query.weight, {1, 0, 0, 2});
  set_values(mha.key.weight, {0.5, 0, 0, 1});
  set_values(mha.value.weight, {1, 2, 3, 4});
  set_identity(mha.output);
  const auto x = T64::identity(2);
  const auto out = mha(x, x, x);
  // Worked with 30-digit arithmetic: softmax([0.5, 0]/sqrt 2) and softmax([0, 2]/sqrt 2) against V = [[1,2],[3,4]].
  EXPECT_NEAR(out.at(0, 0), 1.82504199832078046, 1e-6);
  EXPECT_NEAR(out.at(0, 1), 2.82504199832078046, 1e-6);
  EXPECT_NEAR(out.at(1, 0), 2.60885936501391381, 1e-6);
  EXPECT_NEAR(out.at(1, 1), 3.60885936501391381, 1e-6);
}

TEST(Attention, MaskShapeMismatchIsError) {
  ParameterStore<double> store;
  Rng rng(1);
  MultiHeadAttention<double> mha(store, "mha", 4, 2, rng);
  const auto x = random_matrix(3, 4, 5);
  const auto mask = AttentionMask::causal(2);
  EXPECT_THROW(mha(x, x, x, &mask), DimensionError);
}

TEST(Attention, MaskedKeysGetZeroWeight) {
  ParameterStore<double> store;
  Rng rng(4);
  MultiHeadAttention<double> mha(store, "mha", 4, 2, rng);
  const auto q = random_matrix(2, 4, 6);
  const auto kv = random_matrix(3, 4, 7);
  auto changed = kv.detach();
  auto d = changed.mutable_data();
  for (std::size_t c = 0; c < 4; ++c) d[2 * 4 + c] += 10.0;  // only the masked key row differs
  const auto mask = AttentionMask::keys(2, {true, true, false});
  EXPECT_TRUE(bit_equal(mha(q, kv, kv, &mask), mha(q, changed, changed, &mask)));
}

TEST(Attention, HeadsMustDivideModelWidth) {
  ParameterStore<double> store;
  Rng rng(1);
  EXPECT_THROW(MultiHeadAttention<double>(store, "mha", 6, 4, rng), ContractError);
}

// ------------------------------------------------------------------- encoder

TEST(Encoder, ZeroLayersReturnsEmbeddedInputs) {
  ParameterStore<double> store;
  Rng rng(2);
  auto cfg = toy_encoder(8, 2, 0);
  Encoder<double> enc(store, "enc", cfg, 10, rng);
  const std::vector<int> ids{4, 7, 5};
  EXPECT_TRUE(bit_equal(enc(ids), embed_tokens<double>(ids, enc.table())));
}

TEST(Encoder, OutputShapeIsTokensByModelWidth) {
  ParameterStore<double> store;
  Rng rng(3);
  Encoder<double> enc(store, "enc", toy_encoder(8, 2, 2), 12, rng);
  std::mt19937_64 pick(5);
  std::uniform_int_distribution<int> tok(4, 11);
  for (std::size_t n = 1; n <= 64; ++n) {
    std::vector<int> ids(n);
    for (auto& i : ids) i = tok(pick);
    EXPECT_EQ(enc(ids).shape(), (Shape{n, 8}));
  }
}

TEST(Encoder, EmptyTokenListIsError) {
  ParameterStore<double> store;
  Rng rng(3);
  Encoder<double> enc(store, "enc", toy_encoder(), 12, rng);
  EXPECT_THROW(enc(std::vector<int>{}), ContractError);
}

TEST(Encoder, FullLayerGradientCheck) {
  ParameterStore<double> store;
  Rng rng(11);
  Encoder<double> enc(store, "enc", toy_encoder(8, 2, 1), 9, rng);
  const std::vector<int> ids{4, 6, 5, 8};
  const double err = grad_check_params([&] { return mean(mul(enc(ids), enc(ids))); }, store.list(), 200, 3);
  EXPECT_LT(err, 1e-5);
  const auto x = random_matrix(4, 8, 12);
  EXPECT_LT(grad_check([&](const T64& v) { return enc.layers()[0](v, nullptr, {}); }, x), 1e-5);
}

TEST(Encoder, PermutingTokensChangesOutput) {
  ParameterStore<double> store;
  Rng rng(8);
  Encoder<double> enc(store, "enc", toy_encoder(8, 2, 1), 12, rng);
  std::mt19937_64 pick(13);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> ids(5);
    std::iota(ids.begin(), ids.end(), 4);
    std::shuffle(ids.begin(), ids.end(), pick);
    auto perm = ids;
    std::reverse(perm.begin(), perm.end());  // distinct ids, so never a palindrome
    const auto a = enc(ids), b = enc(perm);
    // Row for the same token at a different position must differ.
    EXPECT_FALSE(bit_equal(slice_rows(a, 0, 1), slice_rows(b, 4, 1)));
  }
}

TEST(Encoder, BatchedForwardMatchesSingleSample) {
  ParameterStore<double> store;
  Rng rng(21);
  Encoder<double> enc(store, "enc", toy_encoder(8, 2, 2), 12, rng);
  const std::vector<std::vector<int>> batch{{4, 5, 6, 7, 8}, {9}, {10, 11, 4}};
  const auto out = enc.forward_batch(batch);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto single = enc(batch[i]);
    ASSERT_EQ(out[i].shape(), single.shape());
    for (std::size_t k = 0; k < single.numel(); ++k) EXPECT_NEAR(out[i].data()[k], single.data()[k], 1e-6);
  }
}

TEST(Encoder, SharedEmbeddingsShareOnlyTheTable) {
  auto e = toy_encoder();
  e.share_embeddings = true;
  Rng rng(3);
  SignGenerator<double> shared(toy_spec(Variant::TG2S, 12, e), rng);
  EXPECT_EQ(shared.text_encoder().table().node(), shared.gloss_encoder().table().node());
  const auto& names = shared.parameters().named();
  EXPECT_EQ(names.count("gloss_encoder.embedding"), 0u);
  EXPECT_EQ(names.count("gloss_encoder.layers.0.attention.query.weight"), 1u);

  e.share_embeddings = false;
  SignGenerator<double> separate(toy_spec(Variant::TG2S, 12, e), rng);
  EXPECT_NE(separate.text_encoder().table().node(), separate.gloss_encoder().table().node());
  for (const auto& [name, p] : separate.parameters().named()) {
    (void)p;
    EXPECT_TRUE(name.rfind("text_encoder.", 0) == 0 || name.rfind("gloss_encoder.", 0) == 0 ||
                name.rfind("decoder.", 0) == 0)
        << name;
  }
}

// -------------------------------------------------------------------- fusion

TEST(Fusion, SingleRowsGiveElementwiseProduct) {
  const auto a = T64::matrix(1, 3, {1, 2, 3}), b = T64::matrix(1, 3, {4, 5, -6});
  const auto f = fuse_memories(a, b);
  EXPECT_EQ(f.text_rows, 1u);
  EXPECT_EQ(f.gloss_rows, 1u);
  EXPECT_EQ(std::vector<double>(f.matrix.data().begin(), f.matrix.data().end()), (std::vector<double>{4, 10, -18}));
}

TEST(Fusion, OnesTextTilesGlossBlock) {
  const auto gloss = random_matrix(3, 4, 2);
  const auto f = fuse_memories(T64::full({2, 4}, 1.0), gloss).matrix;
  ASSERT_EQ(f.shape(), (Shape{6, 4}));
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t u = 0; u < 3; ++u)
      for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(f.at(n * 3 + u, c), gloss.at(u, c));
}

TEST(Fusion, MatchesNestedLoopOracle) {
  const auto text = random_matrix(2, 5, 7), gloss = random_matrix(3, 5, 8);
  const auto f = fuse_memories(text, gloss).matrix;
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t u = 0; u < 3; ++u)
      for (std::size_t c = 0; c < 5; ++c) EXPECT_EQ(f.at(n * 3 + u, c), text.at(n, c) * gloss.at(u, c));
}

TEST(Fusion, WidthMismatchIsError) {
  EXPECT_THROW(fuse_memories(T64::zeros({2, 4}), T64::zeros({2, 5})), DimensionError);
}

TEST(Fusion, CapIsEnforced) {
  EXPECT_THROW(fuse_memories(T64::zeros({10, 2}), T64::zeros({10, 2}), 99), ContractError);
  EXPECT_NO_THROW(fuse_memories(T64::zeros({10, 2}), T64::zeros({10, 2}), 100));
}

TEST(Fusion, GradientCheckThroughScalarReduction) {
  const auto text = random_matrix(3, 4, 1), gloss = random_matrix(2, 4, 2);
  EXPECT_LT(grad_check([&](const T64& x) { return sum(fuse_memories(x, gloss).matrix); }, text), 1e-6);
  EXPECT_LT(grad_check([&](const T64& x) { return sum(fuse_memories(text, x).matrix); }, gloss), 1e-6);
}

// ------------------------------------------------------------------- decoder

TEST(Decoder, ZeroLinearEmbeddingLeavesPositionalTerm) {
  ParameterStore<double> store;
  Rng rng(1);
  ProgressiveDecoder<double> dec(store, "dec", 12, 1, 8, 2, 16, rng);
  set_values(dec.joint_embedding().weight, std::vector<double>(13 * 8, 0.0));
  const auto frames = T64::zeros({5, 12});
  const std::vector<double> counters(5, 0.0);
  EXPECT_TRUE(bit_equal(dec.embed_targets(frames, counters), positional_encoding<double>(5, 8)));
}

TEST(Decoder, ProjectionWidthMustBeFrameWidthPlusOne) {
  ParameterStore<double> store;
  Rng rng(1);
  ProgressiveDecoder<double> ok(store, "ok", 12, 1, 8, 2, 16, rng);
  const std::vector<double> counters{0.5, 1.0};
  EXPECT_NO_THROW(ok.embed_targets(T64::zeros({2, 12}), counters));
  ParameterStore<double> store2;
  ProgressiveDecoder<double> narrow(store2, "narrow", 11, 1, 8, 2, 16, rng);  // 12-wide projection
  EXPECT_THROW(narrow.embed_targets(T64::zeros({2, 12}), counters), DimensionError);
}

TEST(Decoder, CounterLengthMustMatchFrames) {
  ParameterStore<double> store;
  Rng rng(1);
  ProgressiveDecoder<double> dec(store, "dec", 12, 1, 8, 2, 16, rng);
  const std::vector<double> counters{1.0};
  EXPECT_THROW(dec.embed_targets(T64::zeros({2, 12}), counters), DimensionError);
}

TEST(Decoder, EmbeddingGradientCheck) {
  ParameterStore<double> store;
  Rng rng(1);
  ProgressiveDecoder<double> dec(store, "dec", 12, 1, 8, 2, 16, rng);
  EXPECT_LT(grad_check([&](const T64& x) { return dec.embed_joint(x); }, random_matrix(3, 13, 4)), 1e-6);
  const std::vector<double> counters{1.0 / 3, 2.0 / 3, 1.0};
  EXPECT_LT(grad_check([&](const T64& x) { return dec.embed_targets(x, counters); }, random_matrix(3, 12, 5)), 1e-6);
}

TEST(Decoder, OutputShapeIsFramesByWidthPlusOne) {
  ParameterStore<double> store;
  Rng rng(1);
  ProgressiveDecoder<double> dec(store, "dec", 12, 2, 8, 2, 16, rng);
  const auto memory = random_matrix(6, 8, 2);
  for (std::size_t t = 1; t <= 7; ++t) {
    const auto y = dec(dec.embed_joint(random_matrix(t, 13, t)), memory);
    EXPECT_EQ(y.shape(), (Shape{t, 13}));
  }
}

TEST(Decoder, EmptyMemoryIsError) {
  ParameterStore<double> store;
  Rng rng(1);
  ProgressiveDecoder<double> dec(store, "dec", 12, 1, 8, 2, 16, rng);
  EXPECT_THROW(dec(dec.embed_joint(random_matrix(2, 13, 1)), T64{}), ContractError);
}

TEST(Decoder, CausalityExact) {
  ParameterStore<double> store;
  Rng rng(5);
  ProgressiveDecoder<double> dec(store, "dec", 12, 2, 8, 2, 16, rng);
  const auto memory = random_matrix(4, 8, 6);
  const auto joint = random_matrix(8, 13, 7);
  const auto base = dec(dec.embed_joint(joint), memory);
  for (std::size_t t = 0; t + 1 < 8; ++t) {
    auto changed = joint.detach();
    auto d = changed.mutable_data();
    for (std::size_t r = t + 1; r < 8; ++r)
      for (std::size_t c = 0; c < 13; ++c) d[r * 13 + c] += 3.0;
    const auto y = dec(dec.embed_joint(changed), memory);
    EXPECT_TRUE(bit_equal(slice_rows(base, 0, t + 1), slice_rows(y, 0, t + 1))) << "t=" << t;
  }
}

TEST(Decoder, FullGradientCheck) {
  ParameterStore<double> store;
  Rng rng(9);
  ProgressiveDecoder<double> dec(store, "dec", 6, 1, 8, 2, 16, rng);
  const auto memory = random_matrix(3, 8, 10);
  const auto joint = random_matrix(4, 7, 11);
  const auto target = random_matrix(4, 7, 12);
  EXPECT_LT(grad_check_params([&] { return mse_loss(dec(dec.embed_joint(joint), memory), target); }, store.list(), 150, 4),
            1e-4);
}

TEST(Generate, UntrainedModelRespectsFrameCap) {
  Rng rng(3);
  SignGenerator<float> model(toy_spec(Variant::TG2S), rng);
  const auto out = model.generate({"regen"}, {"REGEN-A"}, 10, 0.02);
  EXPECT_LE(out.frames.length, 10u);
  EXPECT_GE(out.frames.length, 1u);
  EXPECT_EQ(out.frames.width, 12u);
  EXPECT_EQ(out.counters.size(), out.frames.length);
  for (double c : out.counters) {
    EXPECT_GE(c, 0.0);
    EXPECT_LE(c, ProgressiveDecoder<float>::kCounterClampMax);
  }
}

TEST(Generate, StopEpsilonOneStopsAfterOneFrame) {
  Rng rng(3);
  SignGenerator<float> model(toy_spec(Variant::G2S), rng);
  EXPECT_EQ(model.generate({"regen"}, {"REGEN-A", "WIND"}, 50, 1.0).frames.length, 1u);
}

TEST(Generate, DeterministicGivenParameters) {
  Rng rng(4);
  SignGenerator<float> model(toy_spec(Variant::T2S), rng);
  const auto a = model.generate({"stark", "wind"}, {"WIND"}, 20, 0.02);
  const auto b = model.generate({"stark", "wind"}, {"WIND"}, 20, 0.02);
  EXPECT_EQ(a.frames, b.frames);
  EXPECT_EQ(a.counters, b.counters);
}

TEST(Generate, CachedStepsMatchFullCausalForward) {
  Rng rng(6);
  SignGenerator<double> model(toy_spec(Variant::TG2S), rng);
  const auto& spec = model.spec();
  const auto memory = model.memory(spec.text_vocab.encode({"stark", "regen"}), spec.gloss_vocab.encode({"REGEN-B"}));
  const auto out = model.decoder().generate(memory, 12, -1.0);  // never stops early
  ASSERT_EQ(out.frames.length, 12u);
  // Rebuild the seed-plus-outputs input and run the full forward once.
  const std::size_t w = 13;
  std::vector<double> joint(w, 0.0);
  for (std::size_t t = 0; t + 1 < out.frames.length; ++t) {
    for (std::size_t c = 0; c < 12; ++c) joint.push_back(out.frames.at(t, c));
    joint.push_back(out.counters[t]);
  }
  const auto full = model.decoder()(model.decoder().embed_joint(T64({out.frames.length, w}, joint)), memory);
  for (std::size_t t = 0; t < out.frames.length; ++t) {
    for (std::size_t c = 0; c < 12; ++c) EXPECT_NEAR(full.at(t, c), out.frames.at(t, c), 1e-10);
    EXPECT_NEAR(std::clamp(full.at(t, 12), 0.0, 1.05), out.counters[t], 1e-10);
  }
}

// ----------------------------------------------------------------- generator

TEST(Generator, VariantsUseTheirEncoders) {
  Rng rng(1);
  SignGenerator<double> t2s(toy_spec(Variant::T2S), rng), g2s(toy_spec(Variant::G2S), rng),
      tg2s(toy_spec(Variant::TG2S), rng);
  const std::vector<int> text{4, 5, 6}, gloss{4, 5};
  EXPECT_EQ(t2s.memory(text, gloss).rows(), 3u);
  EXPECT_EQ(g2s.memory(text, gloss).rows(), 2u);
  EXPECT_EQ(tg2s.memory(text, gloss).rows(), 6u);
  EXPECT_EQ(t2s.parameters().named().count("gloss_encoder.embedding"), 0u);
  EXPECT_EQ(g2s.parameters().named().count("text_encoder.embedding"), 0u);
}

TEST(Generator, PrepareShiftsTargetsBehindSeedRow) {
  Rng rng(1);
  SignGenerator<double> model(toy_spec(Variant::TG2S), rng);
  const auto r = toy_record("x", {"regen"}, {"REGEN-A"}, 4, 12, 3);
  const auto s = model.prepare(r);
  ASSERT_EQ(s.target.shape(), (Shape{4, 13}));
  for (std::size_t c = 0; c < 13; ++c) EXPECT_EQ(s.decoder_input.at(0, c), 0.0);
  for (std::size_t t = 1; t < 4; ++t)
    for (std::size_t c = 0; c < 13; ++c) EXPECT_EQ(s.decoder_input.at(t, c), s.target.at(t - 1, c));
  EXPECT_EQ(s.target.at(3, 12), 1.0);
  EXPECT_EQ(s.target.at(0, 12), 0.25);
}

TEST(Generator, PrepareRejectsWrongWidth) {
  Rng rng(1);
  SignGenerator<double> model(toy_spec(Variant::TG2S), rng);
  EXPECT_THROW(model.prepare(toy_record("bad", {"regen"}, {"REGEN-A"}, 4, 11, 3)), DataError);
}

TEST(Generator, ParseVariantRejectsUnknownNames) {
  EXPECT_EQ(parse_variant("TG2S"), Variant::TG2S);
  try {
    parse_variant("S2T");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("model_variant"), std::string::npos);
  }
}
