#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "ffseg/alignment.hpp"
#include "ffseg/dga_weights.hpp"
#include "test_support.hpp"

namespace ffseg {
namespace {

using testing::GroundTruthState;
using testing::ProblemOf;
using testing::SmallSpec;

TEST(AggregateConfidence, Examples) {
  const ImageGrid g{3, 1};
  SoftMask s(g, std::vector<double>{1.0, 0.0, 1.0});
  ConfidenceMap c(g, std::vector<double>{0.0, 5.0, 2.0});
  const ScoreMap f = AggregateConfidence(s, c);
  EXPECT_DOUBLE_EQ(f[0], 0.5);
  EXPECT_DOUBLE_EQ(f[1], 0.5);
  EXPECT_NEAR(f[2], 0.8807970779778823, 1e-15);
  EXPECT_THROW(AggregateConfidence(SoftMask({2, 1}, 1.0), c), StructuralError);
}

TEST(DynamicAdjust, ZeroAlphaIsIdentity) {
  CounterRng rng(1, 1);
  for (int i = 0; i < 100; ++i) {
    const double f = rng.Uniform();
    EXPECT_EQ(DynamicAdjustValue(f, 0.0, 0.0), f);
  }
}

TEST(DynamicAdjust, MatchedAndUnmatchedValues) {
  // 0.625 / 1.125 and 0.275 / 1.225, as exact fractions 5/9 and 11/49.
  EXPECT_NEAR(DynamicAdjustValue(0.5, 0.5, 0.0), 5.0 / 9.0, 1e-15);
  EXPECT_NEAR(DynamicAdjustValue(0.5, -0.9, 0.0), 11.0 / 49.0, 1e-15);

  DgaConfig config;
  config.epsilon = 0.0;
  const ImageGrid g{2, 1};
  MatchMap phi(g, std::vector<std::uint8_t>{1, 0});
  const ScoreMap a = DynamicAdjust(ScoreMap(g, 0.5), phi, config);
  EXPECT_NEAR(a[0], 5.0 / 9.0, 1e-15);
  EXPECT_NEAR(a[1], 11.0 / 49.0, 1e-15);
}

TEST(DynamicAdjust, SignFollowsAlpha) {
  CounterRng rng(2, 1);
  for (int i = 0; i < 1000; ++i) {
    const double f = rng.Uniform(1e-6, 1.0 - 1e-6);
    double alpha = rng.Uniform(-1.0, 1.0);
    if (alpha == 0.0) alpha = 0.5;
    const double a = DynamicAdjustValue(f, alpha, 0.0);
    EXPECT_EQ(a > f, alpha > 0.0) << "f=" << f << " alpha=" << alpha;
    EXPECT_NE(a, f);
  }
}

TEST(DynamicAdjust, RangeAndEndpoints) {
  CounterRng rng(3, 1);
  for (int i = 0; i < 2000; ++i) {
    const double f = rng.Uniform();
    const double alpha = rng.Uniform(-1.0, 1.0);
    const double eps = rng.Uniform(0.0, 0.1);
    const double a = DynamicAdjustValue(f, alpha, eps);
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, 1.0);
    EXPECT_EQ(DynamicAdjustValue(0.0, alpha, eps), 0.0);
    EXPECT_NEAR(DynamicAdjustValue(1.0, alpha, eps), 1.0 / (1.0 + eps), 1e-15);
  }
}

TEST(DynamicAdjust, ClampKeepsLogitFinite) {
  DgaConfig config;
  const ImageGrid g{2, 1};
  const ScoreMap a = DynamicAdjust(ScoreMap(g, std::vector<double>{0.0, 1.0}), MatchMap(g, 1), config);
  EXPECT_DOUBLE_EQ(a[0], config.clamp_margin);
  EXPECT_DOUBLE_EQ(a[1], 1.0 - config.clamp_margin);
}

TEST(Logit, InvertsSigmoid) {
  for (double x = -20.0; x <= 20.0; x += 0.01) {
    const long double lx = x;
    EXPECT_LT(std::abs(static_cast<double>(Logit(Sigmoid(lx)) - lx)), 1e-9) << x;
  }
  for (double x = -16.0; x <= 16.0; x += 0.01) EXPECT_LT(std::abs(Logit(Sigmoid(x)) - x), 1e-9) << x;
  // Reachable range after the default clamp margin.
  EXPECT_LT(std::abs(Logit(1.0 - 1e-6) - std::log((1.0 - 1e-6) / 1e-6)), 1e-9);
  EXPECT_DOUBLE_EQ(Logit(0.5), 0.0);
}

TEST(RecoverWeights, Examples) {
  DgaConfig config;
  const ImageGrid g{3, 1};
  const ScoreMap a(g, std::vector<double>{0.5, 1.0 / (1.0 + std::exp(-1.0)), 11.0 / 49.0});
  const WeightMap w = RecoverWeights(a, config);
  EXPECT_DOUBLE_EQ(w[0], 0.0);
  EXPECT_NEAR(w[1], 1.0, 1e-9);
  EXPECT_NEAR(std::log(a[2] / (1.0 - a[2])), -1.2396908869280152, 1e-12);
  EXPECT_EQ(w[2], 0.0);

  config.weight_floor = -100.0;
  EXPECT_NEAR(RecoverWeights(a, config)[2], -1.2396908869280152, 1e-12);
}

TEST(RecoverWeights, FloorHoldsOnRandomPipelines) {
  CounterRng rng(4, 1);
  const ImageGrid g{12, 8};
  for (double floor : {0.0, 0.3, -1.0}) {
    DgaConfig config;
    config.weight_floor = floor;
    for (int trial = 0; trial < 20; ++trial) {
      SoftMask s(g);
      ConfidenceMap c(g);
      for (std::size_t i = 0; i < g.size(); ++i) {
        s[i] = rng.Uniform();
        c[i] = rng.Uniform(0.0, 30.0);
      }
      const WeightMap w = SlotWeights(s, c, testing::RandomMask(g, 0.5, rng), config);
      for (double x : w) {
        EXPECT_TRUE(std::isfinite(x));
        EXPECT_GE(x, floor);
      }
    }
  }
}

TEST(GaWeights, AreTheConfidences) {
  CounterRng rng(5, 1);
  ConfidenceMap c({7, 5});
  for (double& v : c.values()) v = rng.Uniform(0.0, 10.0);
  const WeightMap w = GaWeights(c);
  EXPECT_EQ(w.values(), c.values());
  EXPECT_EQ(GaWeights(ConfidenceMap({3, 3}, 1.0)).values(), std::vector<double>(9, 1.0));

  DgaConfig ga;
  ga.mode = AlignMode::kGlobalAlignment;
  EXPECT_EQ(SlotWeights(SoftMask({7, 5}, 0.3), c, MatchMap({7, 5}, 0), ga).values(), c.values());
}

TEST(AltAdjust, FixedPointsAndRange) {
  for (double p : {0.1, 1.0, 5.0, 10.0, 50.0}) {
    EXPECT_NEAR(AltAdjustValue(0.5, {AdjustFunction::kArctan, p}), 0.5, 1e-15);
    EXPECT_NEAR(AltAdjustValue(0.5, {AdjustFunction::kSigmoid, p}), 0.5, 1e-15);
    EXPECT_NEAR(AltAdjustValue(1.0, {AdjustFunction::kLog, p}), 1.0, 1e-15);
    EXPECT_NEAR(AltAdjustValue(0.0, {AdjustFunction::kLog, p}), 0.0, 1e-15);
    for (double x = 0.0; x <= 1.0; x += 0.05) {
      for (auto kind : {AdjustFunction::kArctan, AdjustFunction::kSigmoid, AdjustFunction::kLog}) {
        const double a = AltAdjustValue(x, {kind, p});
        EXPECT_GE(a, 0.0);
        EXPECT_LE(a, 1.0);
      }
    }
  }
  EXPECT_NEAR(AltAdjustValue(0.8, {AdjustFunction::kArctan, 10.0}), std::atan(3.0) / std::numbers::pi + 0.5, 1e-15);
  EXPECT_NEAR(AltAdjustValue(0.8, {AdjustFunction::kSigmoid, 10.0}), 1.0 / (1.0 + std::exp(-3.0)), 1e-15);
  EXPECT_NEAR(AltAdjustValue(0.5, {AdjustFunction::kLog, 3.0}), std::log(2.5) / std::log(4.0), 1e-15);
}

TEST(AdjustFunction, ParseAndPrint) {
  EXPECT_EQ(AdjustFunction::Parse("dga").kind, AdjustFunction::kDynamic);
  const AdjustFunction a = AdjustFunction::Parse("arctan:10");
  EXPECT_EQ(a.kind, AdjustFunction::kArctan);
  EXPECT_DOUBLE_EQ(a.param, 10.0);
  EXPECT_EQ(AdjustFunction::Parse(a.ToString()), a);
  EXPECT_THROW(AdjustFunction::Parse("tanh:2"), InputError);
  EXPECT_THROW(AdjustFunction::Parse("log"), InputError);
  EXPECT_THROW(AdjustFunction::Parse("sigmoid:-1"), InputError);
}

TEST(DgaConfig, ValidationAndConfigKeys) {
  DgaConfig c;
  c.iterations = 0;
  EXPECT_THROW(c.Validate(), InputError);
  c = DgaConfig{};
  c.alpha_p = 1.5;
  EXPECT_THROW(c.Validate(), InputError);

  const DgaConfig parsed = DgaConfig::FromConfig(KeyValueConfig::Parse(
      "alpha_p = 0.3\nalpha_n = 0.7\nepsilon = 1e-5\niterations = 42\nlr = 0.02\nmode = GA\nadjust_fn = log:4\nw_min = 0.1\n"));
  EXPECT_DOUBLE_EQ(parsed.alpha_p, 0.3);
  EXPECT_DOUBLE_EQ(parsed.alpha_n, 0.7);
  EXPECT_DOUBLE_EQ(parsed.epsilon, 1e-5);
  EXPECT_EQ(parsed.iterations, 42);
  EXPECT_DOUBLE_EQ(parsed.learning_rate, 0.02);
  EXPECT_EQ(parsed.mode, AlignMode::kGlobalAlignment);
  EXPECT_EQ(parsed.adjust.kind, AdjustFunction::kLog);
  EXPECT_DOUBLE_EQ(parsed.weight_floor, 0.1);
  KeyValueConfig out;
  parsed.WriteConfig(out);
  const DgaConfig again = DgaConfig::FromConfig(out);
  EXPECT_EQ(again.Name(), parsed.Name());
  EXPECT_EQ(again.iterations, 42);
}

// One-edge, one-pixel problem with a hand-set residual.
TEST(DgaLoss, SinglePixelResidual) {
  const ImageGrid g{1, 1};
  PairwiseObservation obs;
  obs.edge = {0, 1};
  obs.pointmap_first = Pointmap(g, Vec3(-3, 0, 1));
  obs.pointmap_second = Pointmap(g, Vec3(0, 0, 1));
  obs.confidence_first = obs.confidence_second = ConfidenceMap(g, 1.0);
  obs.match_first = obs.match_second = MatchMap(g, 1);
  EdgeWeights w{WeightMap(g, 2.0), WeightMap(g, 0.0)};
  const CameraIntrinsics k{1, 1, 0, 0};
  auto problem = MakeProblem(g, ViewGraph{2, {{0, 1}}}, {k, k}, {obs}, {w});
  AlignmentState state(problem, false);  // identity poses, depth 1 -> chi = (0, 0, 1)
  EXPECT_NEAR(DgaLoss(state), 6.0, 1e-8);
}

TEST(DgaLoss, ZeroWeightsGiveZeroLoss) {
  const GroundTruthScene gt = GenerateScene(SmallSpec(), 1);
  const ViewGraph graph = BuildGraph(gt.n_views(), CompleteGraph{});
  const auto obs = SimulatePairwise(gt, graph, NoiseSpec{}, 1);
  std::vector<EdgeWeights> zero(obs.size(), EdgeWeights{WeightMap(gt.grid(), 0.0), WeightMap(gt.grid(), 0.0)});
  AlignmentState state(MakeProblem(gt.grid(), graph, testing::IntrinsicsOf(gt), obs, zero), false);
  testing::Perturb(state, 0.3, 4);
  EXPECT_EQ(DgaLoss(state), 0.0);
}

TEST(DgaLoss, VanishesAtGroundTruth) {
  const GroundTruthScene gt = GenerateScene(SmallSpec(), 2);
  const ViewGraph graph = BuildGraph(gt.n_views(), CompleteGraph{});
  const auto obs = SimulatePairwise(gt, graph, NoiseSpec{}, 2);
  for (AlignMode mode : {AlignMode::kGlobalAlignment, AlignMode::kDynamicGlobalAlignment}) {
    DgaConfig config;
    config.mode = mode;
    const AlignmentState state = GroundTruthState(ProblemOf(gt, graph, obs, config), gt);
    EXPECT_LT(DgaLoss(state), 1e-8);
  }
}

TEST(DgaLoss, InvariantUnderGlobalRigidMotion) {
  const GroundTruthScene gt = GenerateScene(SmallSpec(), 3);
  const ViewGraph graph = BuildGraph(gt.n_views(), CompleteGraph{});
  NoiseSpec noise;
  noise.sigma_object = 0.01;
  noise.sigma_background = 0.05;
  const auto obs = SimulatePairwise(gt, graph, noise, 3);
  AlignmentState state = GroundTruthState(ProblemOf(gt, graph, obs, DgaConfig{}), gt);
  testing::Perturb(state, 0.01, 5);
  const double before = DgaLoss(state);

  // World change x' = G x: view poses become P G^-1 and edge poses G P_e.
  const RigidPose g = RigidPose::FromAxisAngle(Vec3(0.3, -0.2, 0.5), Vec3(1.0, -2.0, 0.5));
  AlignmentState moved = state;
  for (int v = 0; v < state.n_views(); ++v) {
    ViewTransform vt = state.View(v);
    vt.pose = vt.pose * g.Inverse();
    moved.SetView(v, vt);
  }
  for (int e = 0; e < state.n_edges(); ++e) {
    EdgeParams p = state.EdgeAt(e);
    p.pose = RigidPose{g.rotation * p.pose.rotation, g.rotation * p.pose.translation + std::exp(-p.log_scale) * g.translation};
    moved.SetEdge(e, p);
  }
  EXPECT_LT(std::abs(DgaLoss(moved) - before), 1e-8 * std::max(1.0, before));
}

double CentralDifference(AlignmentState state, std::size_t j, double h) {
  const double x = state.params()[j];
  state.params()[j] = x + h;
  const double up = DgaLoss(state);
  state.params()[j] = x - h;
  const double down = DgaLoss(state);
  return (up - down) / (2.0 * h);
}

TEST(DgaGradient, MatchesCentralDifferences) {
  const GroundTruthScene gt = GenerateScene(SmallSpec(16, 12, 3), 4);
  const ViewGraph graph = BuildGraph(3, CompleteGraph{});
  NoiseSpec noise;
  noise.sigma_object = 0.01;
  noise.sigma_background = 0.1;
  noise.pose_jitter_rotation = 0.01;
  noise.pose_jitter_translation = 0.01;
  const auto obs = SimulatePairwise(gt, graph, noise, 4);
  for (bool focal : {false, true}) {
    AlignmentState state = GroundTruthState(ProblemOf(gt, graph, obs, DgaConfig{}), gt, focal);
    testing::Perturb(state, 0.05, 6);
    std::vector<double> grad;
    DgaLossAndGradient(state, grad);
    CounterRng rng(6, focal ? 2 : 1);
    for (int k = 0; k < 40; ++k) {
      std::size_t j = rng.Below(state.params().size());
      if (k < 3 * state.n_views()) j = state.ViewOffset(k / 3) + static_cast<std::size_t>(k % 3) * 2;
      if (!focal && j < state.EdgeOffset(0) &&
          (j - state.ViewOffset(static_cast<int>(j / (AlignmentState::kViewHeader + gt.grid().size())))) == 6) {
        EXPECT_EQ(grad[j], 0.0);
        continue;
      }
      const double numeric = CentralDifference(state, j, 1e-5);
      const double denom = std::max({std::abs(numeric), std::abs(grad[j]), 1e-6});
      EXPECT_LT(std::abs(grad[j] - numeric) / denom, 1e-4) << state.BlockName(j) << " analytic " << grad[j] << " numeric " << numeric;
    }
  }
}

TEST(ComputeEdgeWeights, MissingSoftMaskIsStructural) {
  const GroundTruthScene gt = GenerateScene(SmallSpec(), 5);
  const auto obs = SimulatePairwise(gt, BuildGraph(gt.n_views(), CompleteGraph{}), NoiseSpec{}, 5);
  std::vector<SoftMask> soft = testing::SoftMasksOf(gt);
  soft.pop_back();
  EXPECT_THROW(ComputeEdgeWeights(obs, soft, DgaConfig{}), StructuralError);
}

}  // namespace
}  // namespace ffseg
