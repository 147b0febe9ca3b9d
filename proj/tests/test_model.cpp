#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "fawn/gradcheck.hpp"
#include "fawn/model.hpp"
#include "test_support.hpp"

namespace fawn {
namespace {

using testing::random_normal;

CsiSample random_sample(Rng& rng, SceneLabel label) {
  CsiSample s;
  s.csi_5g = random_normal(kShape5g, rng);
  s.csi_wifi = random_normal(kShapeWifi, rng);
  s.label = label;
  return s;
}

SceneLabel both_present() { return {Cell{2, 5}, Cell{7, 1}}; }

TEST(Params, CanonicalNamesAndShapes) {
  const auto& specs = FawnParams::specs();
  ASSERT_EQ(specs.size(), static_cast<std::size_t>(FawnParams::kCount));
  const std::vector<std::string> expected{
      "enc5g.conv1.w",    "enc5g.conv1.b",    "enc5g.conv2.w", "enc5g.conv2.b", "enc5g.fc.w",
      "enc5g.fc.b",       "encwifi.conv1.w",  "encwifi.conv1.b", "encwifi.conv2.w", "encwifi.conv2.b",
      "encwifi.fc.w",     "encwifi.fc.b",     "fusion.Wq",     "fusion.Wk",     "fusion.Wv",
      "heads.presence.w", "heads.presence.b", "heads.px.w",    "heads.px.b",    "heads.py.w",
      "heads.py.b",       "heads.rx.w",       "heads.rx.b",    "heads.ry.w",    "heads.ry.b"};
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_EQ(specs[i].name, expected[i]);
  EXPECT_EQ(FawnParams().at("enc5g.fc.w").shape(), (Shape{128, 2880}));
  EXPECT_EQ(FawnParams().at("encwifi.fc.w").shape(), (Shape{128, 416}));
  EXPECT_EQ(FawnParams().at("fusion.Wv").shape(), (Shape{128, 128}));
  EXPECT_THROW(FawnParams::index_of("heads.pz.w"), IndexError);
}

TEST(InitParams, SameSeedSameParameters) {
  Rng a(42), b(42);
  EXPECT_EQ(init_params(a), init_params(b));
}

TEST(InitParams, BiasesZeroWeightsWithinFanInBound) {
  Rng rng(42);
  const FawnParams p = init_params(rng);
  const auto& specs = FawnParams::specs();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (specs[i].fan_in == 0) {
      for (double v : p[i].data()) EXPECT_EQ(v, 0.0) << specs[i].name;
    } else {
      EXPECT_LE(p[i].max_abs(), 1.0 / std::sqrt(double(specs[i].fan_in))) << specs[i].name;
      EXPECT_GT(p[i].max_abs(), 0.0) << specs[i].name;
    }
  }
}

TEST(InitParams, ConvWeightMeanNearZero) {
  Rng rng(42);
  const FawnParams params = init_params(rng);
  const Tensor& w = params.at("enc5g.conv1.w");
  ASSERT_EQ(w.size(), 16u * 2 * 3 * 3);
  double mean = 0.0;
  for (double v : w.data()) mean += v;
  mean /= double(w.size());
  const double bound = 1.0 / std::sqrt(18.0);
  const double sigma = bound / std::sqrt(3.0);  // sd of U(-b, b)
  EXPECT_LT(std::abs(mean), 3.0 * sigma / std::sqrt(double(w.size())));
}

// ---------------------------------------------------------------- encoders

TEST(Encoder, FiveGStageShapes) {
  const EncoderConfig cfg = EncoderConfig::nr5g();
  const std::vector<Shape> chain{{2, 360, 4}, {16, 360, 4}, {16, 180, 2}, {32, 180, 2}, {32, 90, 1}, {2880}, {128}};
  EXPECT_EQ(cfg.stage_shapes(), chain);
  Rng rng(1);
  const FawnParams p = init_params(rng);
  Graph g;
  const ParamVars v = bind_params(g, p);
  std::vector<Shape> trace;
  const Var e = encoder_forward(g, g.leaf(random_normal(kShape5g, rng)), cfg, encoder_vars(v, Technology::Nr5g), &trace);
  EXPECT_EQ(trace, chain);
  EXPECT_EQ(g.value(e).shape(), (Shape{kEmbedDim}));
}

TEST(Encoder, WifiStageShapes) {
  const EncoderConfig cfg = EncoderConfig::wifi();
  const std::vector<Shape> chain{{2, 52, 1}, {16, 52, 1}, {16, 26, 1}, {32, 26, 1}, {32, 13, 1}, {416}, {128}};
  EXPECT_EQ(cfg.stage_shapes(), chain);
  Rng rng(2);
  const FawnParams p = init_params(rng);
  Graph g;
  const ParamVars v = bind_params(g, p);
  std::vector<Shape> trace;
  encoder_forward(g, g.leaf(random_normal(kShapeWifi, rng)), cfg, encoder_vars(v, Technology::Wifi), &trace);
  EXPECT_EQ(trace, chain);
}

TEST(Encoder, ZeroInputGivesFinalBias) {
  Rng rng(3);
  FawnParams p = init_params(rng);
  for (Technology tech : {Technology::Nr5g, Technology::Wifi}) {
    const EncoderConfig& cfg = encoder_config(tech);
    Graph g;
    const ParamVars v = bind_params(g, p);
    const Var e = encoder_forward(g, g.leaf(Tensor(cfg.input_shape(), 0.0)), cfg, encoder_vars(v, tech));
    EXPECT_EQ(g.value(e), Tensor(Shape{kEmbedDim}, 0.0));
  }
  // A nonzero fc bias passes straight through.
  for (std::size_t i = 0; i < kEmbedDim; ++i) p.at("enc5g.fc.b")[i] = 0.01 * double(i);
  Graph g;
  const ParamVars v = bind_params(g, p);
  const Var e = encoder_forward(g, g.leaf(Tensor(kShape5g, 0.0)), EncoderConfig::nr5g(), encoder_vars(v, Technology::Nr5g));
  EXPECT_EQ(g.value(e), p.at("enc5g.fc.b"));
}

TEST(Encoder, WrongInputShapeIsShapeError) {
  Rng rng(4);
  const FawnParams p = init_params(rng);
  Graph g;
  const ParamVars v = bind_params(g, p);
  EXPECT_THROW(encoder_forward(g, g.leaf(Tensor(Shape{2, 52, 1})), EncoderConfig::nr5g(), encoder_vars(v, Technology::Nr5g)),
               ShapeError);
}

// ---------------------------------------------------------------- fusion

struct FusionFixture {
  Graph g;
  FusionVars out;
  Tensor e5g, ewifi;
};

FusionVars run_fusion(Graph& g, const Tensor& e5g, const Tensor& ewifi, const Tensor& wq, const Tensor& wk, const Tensor& wv) {
  return fuse_attention(g, g.leaf(e5g), g.leaf(ewifi), g.leaf(wq), g.leaf(wk), g.leaf(wv));
}

Tensor identity(std::size_t n) {
  Tensor t(Shape{n, n}, 0.0);
  for (std::size_t i = 0; i < n; ++i) t[i * n + i] = 1.0;
  return t;
}

TEST(Fusion, ZeroScoresGiveUniformAttentionClosedForm) {
  Rng rng(5);
  const Tensor a = random_normal({kEmbedDim}, rng), b = random_normal({kEmbedDim}, rng);
  const Tensor zero(Shape{kEmbedDim, kEmbedDim}, 0.0);
  Graph g;
  const FusionVars f = run_fusion(g, a, b, zero, zero, identity(kEmbedDim));
  EXPECT_EQ(g.value(f.attention), Tensor(Shape{2, 2}, 0.5));
  const Tensor& fused = g.value(f.fused);
  ASSERT_EQ(fused.shape(), (Shape{kFusedDim}));
  for (std::size_t i = 0; i < kEmbedDim; ++i) {
    const double mean = (a[i] + b[i]) / 2.0;
    EXPECT_EQ(fused[i], a[i] + mean);
    EXPECT_EQ(fused[kEmbedDim + i], b[i] + mean);
  }
}

TEST(Fusion, AllProjectionsZeroLeaveTokensUnchanged) {
  Rng rng(6);
  const Tensor a = random_normal({kEmbedDim}, rng), b = random_normal({kEmbedDim}, rng);
  const Tensor zero(Shape{kEmbedDim, kEmbedDim}, 0.0);
  Graph g;
  const FusionVars f = run_fusion(g, a, b, zero, zero, zero);
  const Tensor& fused = g.value(f.fused);
  for (std::size_t i = 0; i < kEmbedDim; ++i) {
    EXPECT_EQ(fused[i], a[i]);
    EXPECT_EQ(fused[kEmbedDim + i], b[i]);
  }
}

TEST(Fusion, IdenticalTokensGiveIdenticalRows) {
  Rng rng(7);
  const Tensor a = random_normal({kEmbedDim}, rng);
  Graph g;
  const FusionVars f = run_fusion(g, a, a, random_normal({kEmbedDim, kEmbedDim}, rng), random_normal({kEmbedDim, kEmbedDim}, rng),
                                  random_normal({kEmbedDim, kEmbedDim}, rng));
  const Tensor& fused = g.value(f.fused);
  for (std::size_t i = 0; i < kEmbedDim; ++i) EXPECT_EQ(fused[i], fused[kEmbedDim + i]);
}

TEST(Fusion, AttentionRowsAreStochastic) {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    Graph g;
    const FusionVars f = run_fusion(g, random_normal({kEmbedDim}, rng), random_normal({kEmbedDim}, rng),
                                    random_normal({kEmbedDim, kEmbedDim}, rng), random_normal({kEmbedDim, kEmbedDim}, rng),
                                    random_normal({kEmbedDim, kEmbedDim}, rng));
    const Tensor& attn = g.value(f.attention);
    ASSERT_EQ(attn.shape(), (Shape{2, 2}));
    for (std::size_t r = 0; r < 2; ++r) {
      EXPECT_GE(attn[2 * r], 0.0);
      EXPECT_LE(attn[2 * r + 1], 1.0);
      EXPECT_NEAR(attn[2 * r] + attn[2 * r + 1], 1.0, 1e-12);
    }
  }
}

TEST(Fusion, UnequalEmbeddingLengthsAreShapeError) {
  Graph g;
  const Tensor w(Shape{4, 4}, 0.0);
  EXPECT_THROW(run_fusion(g, Tensor(Shape{4}), Tensor(Shape{3}), w, w, w), ShapeError);
}

// ---------------------------------------------------------------- decoder

TEST(Decoder, ZeroInputGivesZeroLogitsAndFirstIndexDecisions) {
  Rng rng(9);
  const FawnParams p = init_params(rng);
  Graph g;
  const ParamVars v = bind_params(g, p);
  const SceneEstimate est = read_estimate(g, decoder_forward(g, g.leaf(Tensor(Shape{kFusedDim}, 0.0)), v));
  EXPECT_EQ(est.presence[0], 0.0);
  EXPECT_EQ(est.presence[1], 0.0);
  for (const auto* head : {&est.px, &est.py, &est.rx, &est.ry}) {
    for (double l : *head) EXPECT_EQ(l, 0.0);
  }
  EXPECT_FALSE(est.person_present());
  EXPECT_FALSE(est.robot_present());
  EXPECT_EQ(est.person_cell(), (Cell{0, 0}));
  EXPECT_EQ(est.robot_cell(), (Cell{0, 0}));
}

TEST(Decoder, HeadSizes) {
  Rng rng(10);
  const FawnParams p = init_params(rng);
  Graph g;
  const ParamVars v = bind_params(g, p);
  const HeadVars h = decoder_forward(g, g.leaf(random_normal({kFusedDim}, rng)), v);
  EXPECT_EQ(g.value(h.presence).size(), 2u);
  EXPECT_EQ(g.value(h.px).size(), 9u);
  EXPECT_EQ(g.value(h.py).size(), 10u);
  EXPECT_EQ(g.value(h.rx).size(), 9u);
  EXPECT_EQ(g.value(h.ry).size(), 10u);
}

TEST(Decoder, CraftedBiasesSelectCell) {
  FawnParams p;
  p.at("heads.px.b")[3] = 2.0;
  p.at("heads.py.b")[7] = 2.0;
  p.at("heads.presence.b")[0] = 1.0;
  Graph g;
  const ParamVars v = bind_params(g, p);
  Rng rng(11);
  const SceneEstimate est = read_estimate(g, decoder_forward(g, g.leaf(random_normal({kFusedDim}, rng)), v));
  EXPECT_EQ(est.person_cell(), (Cell{3, 7}));
  EXPECT_TRUE(est.person_present());
  EXPECT_FALSE(est.robot_present());
  EXPECT_EQ(est.decisions(), (SceneLabel{Cell{3, 7}, std::nullopt}));
}

// ---------------------------------------------------------------- full model

TEST(FawnForward, DeterministicAndCorrectlySized) {
  Rng rng(12);
  const FawnParams p = init_params(rng);
  const CsiSample s = random_sample(rng, both_present());
  const SceneEstimate a = fawn_forward(s, p);
  const SceneEstimate b = fawn_forward(s, p);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.px.size(), 9u);
  EXPECT_EQ(a.py.size(), 10u);
  EXPECT_EQ(a.rx.size(), 9u);
  EXPECT_EQ(a.ry.size(), 10u);
}

TEST(FawnForward, FiniteUnderInputScaling) {
  Rng rng(13);
  const FawnParams p = init_params(rng);
  const CsiSample base = random_sample(rng, both_present());
  for (double scale_factor : {1e-3, 1e-2, 0.1, 1.0, 10.0, 100.0, 1e3}) {
    CsiSample s = base;
    for (double& v : s.csi_5g.data()) v *= scale_factor;
    for (double& v : s.csi_wifi.data()) v *= scale_factor;
    const SceneEstimate est = fawn_forward(s, p);
    for (double v : est.presence) EXPECT_TRUE(std::isfinite(v));
    for (const auto* head : {&est.px, &est.py, &est.rx, &est.ry}) {
      for (double v : *head) EXPECT_TRUE(std::isfinite(v)) << scale_factor;
    }
    EXPECT_TRUE(std::isfinite(fawn_loss(est, s.label)));
  }
}

// ---------------------------------------------------------------- loss

SceneEstimate zero_estimate() {
  SceneEstimate e;
  e.px.assign(9, 0.0);
  e.py.assign(10, 0.0);
  e.rx.assign(9, 0.0);
  e.ry.assign(10, 0.0);
  return e;
}

TEST(FawnLoss, EmptySceneConfidentAbsent) {
  SceneEstimate e = zero_estimate();
  e.presence = {-30.0, -30.0};
  EXPECT_NEAR(fawn_loss(e, SceneLabel{}), 0.0, 1e-12);
}

TEST(FawnLoss, EmptySceneZeroLogitsMasksPositions) {
  EXPECT_NEAR(fawn_loss(zero_estimate(), SceneLabel{}), 2.0 * std::numbers::ln2, 1e-12);
}

TEST(FawnLoss, PersonOnlyZeroLogits) {
  const double expected = 2.0 * std::numbers::ln2 + std::log(9.0) + std::log(10.0);
  EXPECT_NEAR(fawn_loss(zero_estimate(), SceneLabel{Cell{4, 4}, std::nullopt}), expected, 1e-12);
  EXPECT_NEAR(expected, 5.886, 5e-4);
}

TEST(FawnLoss, CellOutsideGridIsIndexError) {
  EXPECT_THROW(fawn_loss(zero_estimate(), SceneLabel{Cell{9, 0}, std::nullopt}), IndexError);
  EXPECT_THROW(fawn_loss(zero_estimate(), SceneLabel{std::nullopt, Cell{0, 10}}), IndexError);
}

TEST(FawnLoss, NonNegativeOnRandomLogits) {
  Rng rng(14);
  for (int trial = 0; trial < 200; ++trial) {
    SceneEstimate e = zero_estimate();
    e.presence = {5 * rng.normal(), 5 * rng.normal()};
    for (auto* head : {&e.px, &e.py, &e.rx, &e.ry}) {
      for (double& v : *head) v = 5 * rng.normal();
    }
    SceneLabel l;
    if (rng.bernoulli(0.5)) l.person = Cell{std::uint8_t(rng.below(9)), std::uint8_t(rng.below(10))};
    if (rng.bernoulli(0.5)) l.robot = Cell{std::uint8_t(rng.below(9)), std::uint8_t(rng.below(10))};
    EXPECT_GE(fawn_loss(e, l), 0.0);
  }
}

TEST(FawnLoss, ApproachesZeroOnlyWhenConfidentAndCorrect) {
  SceneEstimate e = zero_estimate();
  e.presence = {40.0, -40.0};
  e.px[2] = 60.0;
  e.py[5] = 60.0;
  const SceneLabel right{Cell{2, 5}, std::nullopt};
  EXPECT_LT(fawn_loss(e, right), 1e-15);
  EXPECT_GT(fawn_loss(e, SceneLabel{Cell{2, 6}, std::nullopt}), 10.0);
  EXPECT_GT(fawn_loss(e, SceneLabel{Cell{2, 5}, Cell{0, 0}}), 10.0);
}

// Sampled central differences on every parameter tensor of the full network.
TEST(FawnLoss, ParameterGradientsMatchFiniteDifferences) {
  Rng rng(15);
  const FawnParams params = init_params(rng);
  const CsiSample sample = random_sample(rng, both_present());

  Graph g;
  const ParamVars vars = bind_params(g, params);
  const HeadVars h = fawn_forward(g, g.constant(sample.csi_5g), g.constant(sample.csi_wifi), vars);
  g.backward(fawn_loss(g, h, sample.label));

  for (std::size_t i = 0; i < params.size(); ++i) {
    std::vector<std::size_t> idx;
    const std::size_t n = params[i].size();
    for (std::size_t k = 0; k < std::min<std::size_t>(n, 4); ++k) idx.push_back(rng.below(n));
    auto f = [&](const Tensor& probe) {
      FawnParams p = params;
      p[i] = probe;
      return fawn_loss(fawn_forward(sample, p), sample.label);
    };
    const std::vector<double> fd = finite_diff_grad_at(f, params[i], idx, 1e-5);
    std::vector<double> analytic;
    for (std::size_t k : idx) analytic.push_back(g.grad(vars[i])[k]);
    EXPECT_LT(gradient_rel_error(analytic, fd), 1e-4) << params.name(i);
  }
}

}  // namespace
}  // namespace fawn
