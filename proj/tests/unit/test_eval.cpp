#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ffseg/eval.hpp"
#include "test_support.hpp"

namespace ffseg {
namespace {

using testing::SmallSpec;

ViewTransform PinholeAt(const ImageGrid& grid, double depth = 1.0) {
  return {{10.0, 10.0, (grid.width - 1) / 2.0, (grid.height - 1) / 2.0}, RigidPose::Identity(), DepthMap(grid, depth)};
}

TEST(ProjectPoints, Examples) {
  const ImageGrid grid{9, 7};
  const ViewTransform vt = PinholeAt(grid);
  EXPECT_EQ(Popcount(ProjectPoints({}, vt, grid, 1.0)), 0u);

  const BinaryMask one = ProjectPoints({Vec3(0, 0, 1)}, vt, grid, 0.0);
  EXPECT_EQ(Popcount(one), 1u);
  EXPECT_EQ(one(4, 3), 1);

  // Radius 1 around an exact pixel centre: only the centre is strictly inside.
  EXPECT_EQ(Popcount(ProjectPoints({Vec3(0, 0, 1)}, vt, grid, 1.0)), 1u);
  // Radius 1.5: the 3x3 block.
  EXPECT_EQ(Popcount(ProjectPoints({Vec3(0, 0, 1)}, vt, grid, 1.5)), 9u);

  EXPECT_EQ(Popcount(ProjectPoints({Vec3(0, 0, -1)}, vt, grid, 1.0)), 0u);
  EXPECT_EQ(Popcount(ProjectPoints({Vec3(100, 0, 1)}, vt, grid, 1.0)), 0u);
  EXPECT_THROW(ProjectPoints({}, vt, grid, -1.0), InputError);
}

TEST(ProjectPoints, PrincipalPointShiftTranslatesMask) {
  const ImageGrid grid{20, 16};
  ViewTransform vt = PinholeAt(grid);
  CounterRng rng(4, 4);
  std::vector<Vec3> points;
  for (int k = 0; k < 30; ++k) points.emplace_back(rng.Uniform(-0.5, 0.5), rng.Uniform(-0.4, 0.4), rng.Uniform(0.9, 1.1));
  const BinaryMask base = ProjectPoints(points, vt, grid, 1.2);
  vt.intrinsics.cx += 2.0;
  vt.intrinsics.cy -= 1.0;
  const BinaryMask shifted = ProjectPoints(points, vt, grid, 1.2);
  for (int y = 1; y < grid.height; ++y) {
    for (int x = 0; x + 2 < grid.width; ++x) EXPECT_EQ(base(x, y), shifted(x + 2, y - 1)) << x << "," << y;
  }
}

TEST(ProjectPoints, OwnSamplesReproduceTheMask) {
  const GroundTruthScene gt = GenerateScene(SmallSpec(32, 24, 3), 11);
  for (std::size_t id = 0; id < gt.object_points.size(); ++id) {
    std::vector<Vec3> pts;
    for (const ObjectSample& s : gt.object_points[id]) {
      if (s.view == 1) pts.push_back(s.position);
    }
    const BinaryMask m = ProjectPoints(pts, gt.views[1].transform, gt.grid(), 0.0);
    EXPECT_TRUE(m == gt.views[1].object_masks[id]);
  }
}

TEST(ProjectSurface, GroundTruthSelfProjectionCoversTheObject) {
  const GroundTruthScene gt = GenerateScene(SmallSpec(64, 48, 5), 2);
  std::vector<ViewTransform> views;
  for (const GroundTruthView& v : gt.views) views.push_back(v.transform);
  for (std::size_t id = 0; id < gt.objects.size(); ++id) {
    std::vector<BinaryMask> masks;
    for (const GroundTruthView& v : gt.views) masks.push_back(v.object_masks[id]);
    const BinaryMask& target = gt.views[2].object_masks[id];
    if (Popcount(target) == 0) continue;
    EXPECT_GE(MiouMacc(ProjectSurface({masks[2]}, {views[2]}, views[2]), target).iou, 0.99);
    EXPECT_GE(MiouMacc(ProjectSurface(masks, views, views[2]), target).iou, 0.99) << "object " << id;
  }
}

TEST(MiouMacc, Examples) {
  const ImageGrid grid{4, 3};
  BinaryMask a(grid, 0);
  BinaryMask b(grid, 0);
  EXPECT_EQ(MiouMacc(a, b).iou, 1.0);
  EXPECT_EQ(MiouMacc(a, b).accuracy, 1.0);

  a(0, 0) = a(1, 0) = 1;
  b(1, 0) = b(2, 0) = 1;
  EXPECT_DOUBLE_EQ(MiouMacc(a, b).iou, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(MiouMacc(a, b).accuracy, 10.0 / 12.0);
  EXPECT_EQ(MiouMacc(a, a).iou, 1.0);

  BinaryMask c(grid, 0);
  c(3, 2) = 1;
  EXPECT_EQ(MiouMacc(a, c).iou, 0.0);
  EXPECT_DOUBLE_EQ(MiouMacc(a, c).accuracy, (12.0 - 2.0 - 1.0) / 12.0);

  EXPECT_THROW(MiouMacc(a, BinaryMask({3, 4}, 0)), StructuralError);
}

TEST(MiouMacc, SymmetricAndBounded) {
  CounterRng rng(9, 9);
  const ImageGrid grid{11, 7};
  for (int trial = 0; trial < 200; ++trial) {
    const BinaryMask a = testing::RandomMask(grid, rng.Uniform(), rng);
    const BinaryMask b = testing::RandomMask(grid, rng.Uniform(), rng);
    const MaskScore ab = MiouMacc(a, b);
    const MaskScore ba = MiouMacc(b, a);
    EXPECT_EQ(ab.iou, ba.iou);
    EXPECT_EQ(ab.accuracy, ba.accuracy);
    EXPECT_GE(ab.iou, 0.0);
    EXPECT_LE(ab.iou, 1.0);
    EXPECT_GE(ab.accuracy, 0.0);
    EXPECT_LE(ab.accuracy, 1.0);
  }
}

TEST(ObjectRmse, GroundTruthAndGaugeMotionsAreExact) {
  const GroundTruthScene gt = GenerateScene(SmallSpec(32, 24, 3), 5);
  std::vector<ViewTransform> views;
  for (const GroundTruthView& v : gt.views) views.push_back(v.transform);
  for (int id = 0; id < 2; ++id) EXPECT_LT(ObjectRmse(views, gt, id), 1e-9);

  // Same scene after a rigid motion and a uniform scale.
  const RigidPose g = RigidPose::FromAxisAngle(Vec3(0.3, -0.2, 0.5), Vec3(1.0, -2.0, 0.5));
  const double s = 2.5;
  std::vector<ViewTransform> moved = views;
  for (ViewTransform& vt : moved) {
    RigidPose p = vt.pose * g.Inverse();
    p.translation *= s;
    vt.pose = p;
    for (std::size_t i = 0; i < vt.depth.size(); ++i) vt.depth[i] *= s;
  }
  for (int id = 0; id < 2; ++id) EXPECT_LT(ObjectRmse(moved, gt, id), 1e-9);

  views.pop_back();
  EXPECT_THROW(ObjectRmse(views, gt, 0), StructuralError);
}

TEST(SimilarityRmse, RecoversIsotropicNoiseLevel) {
  CounterRng rng(12, 12);
  const double sigma = 0.01;
  std::vector<Vec3> ref;
  std::vector<Vec3> est;
  const RigidPose g = RigidPose::FromAxisAngle(Vec3(0.1, 0.7, -0.4), Vec3(3, 1, 2));
  for (int k = 0; k < 10000; ++k) {
    const Vec3 p(rng.Uniform(-1, 1), rng.Uniform(-1, 1), rng.Uniform(-1, 1));
    ref.push_back(p);
    est.push_back(0.5 * g.Apply(p + Vec3(rng.Normal(0, sigma), rng.Normal(0, sigma), rng.Normal(0, sigma))));
  }
  EXPECT_NEAR(SimilarityRmse(est, ref), std::sqrt(3.0) * sigma, 0.1 * std::sqrt(3.0) * sigma);
}

TEST(SimilarityRmse, TooFewPointsIsInsufficientData) {
  EXPECT_THROW(SimilarityRmse({Vec3(0, 0, 0), Vec3(1, 0, 0)}, {Vec3(0, 0, 0), Vec3(1, 0, 0)}), InsufficientDataError);
}

TEST(CutMask, RemovesAHalfPlaneFraction) {
  const ImageGrid grid{20, 20};
  BinaryMask m(grid, 1);
  EXPECT_TRUE(CutMask(m, 0.0, 1, 1) == m);
  const BinaryMask cut = CutMask(m, 0.25, 1, 1);
  EXPECT_EQ(Popcount(cut), 300u);
  for (std::size_t i = 0; i < cut.size(); ++i) EXPECT_LE(cut[i], m[i]);
  EXPECT_TRUE(CutMask(m, 0.25, 1, 1) == cut);
  EXPECT_THROW(CutMask(m, 1.0, 1, 1), InputError);
  EXPECT_THROW(CutMask(m, -0.1, 1, 1), InputError);
}

TEST(CentroidPrompt, SnapsIntoTheMask) {
  const ImageGrid grid{10, 10};
  EXPECT_FALSE(CentroidPrompt(BinaryMask(grid, 0)).has_value());
  BinaryMask block(grid, 0);
  for (int y = 2; y <= 4; ++y) {
    for (int x = 5; x <= 7; ++x) block(x, y) = 1;
  }
  EXPECT_EQ(*CentroidPrompt(block), (PixelCoord{6, 3}));

  // Ring: the centroid is outside, the prompt must be inside.
  BinaryMask ring(grid, 0);
  for (int k = 0; k < 10; ++k) ring(k, 0) = ring(k, 9) = ring(0, k) = ring(9, k) = 1;
  const PixelCoord p = *CentroidPrompt(ring);
  EXPECT_EQ(ring(p.x, p.y), 1);
}

ExperimentConfig TinyExperiment() {
  ExperimentConfig c;
  c.scene = SmallSpec(24, 18, 3);
  c.seeds = {1, 2};
  DgaConfig dga;
  dga.iterations = 30;
  c.variants.push_back({"DGA", dga});
  dga.mode = AlignMode::kGlobalAlignment;
  c.variants.push_back({"GA", dga});
  return c;
}

TEST(RunExperiment, DeterministicAndComplete) {
  const ExperimentConfig c = TinyExperiment();
  const ExperimentReport a = RunExperiment(c);
  const ExperimentReport b = RunExperiment(c);
  ASSERT_EQ(a.cells.size(), 4u);
  for (std::size_t k = 0; k < a.cells.size(); ++k) {
    EXPECT_TRUE(a.cells[k].ok) << a.cells[k].error;
    EXPECT_EQ(a.cells[k].miou, b.cells[k].miou);
    EXPECT_EQ(a.cells[k].object_rmse, b.cells[k].object_rmse);
    EXPECT_EQ(a.cells[k].final_loss, b.cells[k].final_loss);
  }
  EXPECT_EQ(a.Select("DGA", 3).size(), 2u);
  EXPECT_TRUE(std::isnan(a.Median("DGA", 4, &ExperimentCell::miou)));
}

TEST(RunExperiment, ZeroNoiseIsNearlyPerfect) {
  ExperimentConfig c = TinyExperiment();
  c.scene = SmallSpec(32, 24, 3);
  c.seeds = {3};
  for (ExperimentVariant& v : c.variants) v.config.iterations = DgaConfig{}.iterations;
  const ExperimentReport r = RunExperiment(c);
  for (const ExperimentCell& cell : r.cells) {
    ASSERT_TRUE(cell.ok) << cell.error;
    EXPECT_GE(cell.miou, 0.99) << cell.variant;
    EXPECT_LT(cell.object_rmse, 1e-3) << cell.variant;
  }
}

TEST(ExperimentConfig, ValidationAndConfigRoundTrip) {
  ExperimentConfig c = TinyExperiment();
  c.view_counts = {3, 4};
  c.mask_miss_fraction = 0.2;
  c.projection = ProjectionMethod::kSplat;
  KeyValueConfig kv;
  c.WriteConfig(kv);
  const ExperimentConfig back = ExperimentConfig::FromConfig(kv);
  EXPECT_EQ(back.seeds, c.seeds);
  EXPECT_EQ(back.view_counts, c.view_counts);
  ASSERT_EQ(back.variants.size(), 2u);
  EXPECT_EQ(back.variants[1].config.mode, AlignMode::kGlobalAlignment);
  EXPECT_EQ(back.projection, ProjectionMethod::kSplat);
  EXPECT_DOUBLE_EQ(back.mask_miss_fraction, 0.2);

  ExperimentConfig bad = TinyExperiment();
  bad.seeds.clear();
  EXPECT_THROW(bad.Validate(), InputError);
  bad = TinyExperiment();
  bad.variants.push_back(bad.variants.front());
  EXPECT_THROW(bad.Validate(), InputError);
  bad = TinyExperiment();
  bad.reference_view = 3;
  EXPECT_THROW(bad.Validate(), InputError);
  bad = TinyExperiment();
  bad.view_counts = {1};
  EXPECT_THROW(bad.Validate(), InputError);
}

TEST(WriteReportCsv, HeaderAndEscaping) {
  ExperimentReport r;
  ExperimentCell cell;
  cell.variant = "DGA";
  cell.seed = 4;
  cell.n_views = 3;
  cell.error = "a,b\nc";
  r.cells.push_back(cell);
  std::ostringstream out;
  WriteReportCsv(r, out);
  std::istringstream in(out.str());
  std::string header;
  std::string row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header, "variant,seed,n_views,ok,miou,macc,object_rmse,final_loss,wall_ms,n_objects,error");
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), 10);
  EXPECT_EQ(row.rfind("DGA,4,3,0,", 0), 0u);
}

TEST(ClutteredNoise, Preset) {
  const NoiseSpec n = ClutteredNoise(0.004);
  EXPECT_DOUBLE_EQ(n.sigma_object, 0.004);
  EXPECT_DOUBLE_EQ(n.sigma_background, 0.04);
  EXPECT_NO_THROW(n.Validate());
}

}  // namespace
}  // namespace ffseg
