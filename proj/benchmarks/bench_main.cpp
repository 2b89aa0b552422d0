#include <benchmark/benchmark.h>

#include "ffseg/alignment.hpp"
#include "ffseg/bundle.hpp"
#include "ffseg/eval.hpp"
#include "ffseg/service.hpp"

namespace ffseg {
namespace {

struct Scene {
  GroundTruthScene gt;
  ViewGraph graph;
  std::vector<PairwiseObservation> obs;
  MaskCache cache;
  std::vector<SoftMask> soft;
  std::vector<CameraIntrinsics> intrinsics;
};

Scene MakeScene(int width, int n_views) {
  Scene s;
  SceneSpec spec;
  spec.grid = {width, width * 3 / 4};
  spec.n_views = n_views;
  s.gt = GenerateScene(spec, 1);
  s.graph = BuildGraph(n_views, CompleteGraph{});
  s.obs = SimulatePairwise(s.gt, s.graph, ClutteredNoise(), 1);
  ObjectMasksPerView masks(static_cast<std::size_t>(n_views));
  for (int v = 0; v < n_views; ++v) {
    const auto& om = s.gt.views[static_cast<std::size_t>(v)].object_masks;
    for (std::size_t id = 0; id < om.size(); ++id) {
      if (Popcount(om[id]) > 0) masks[static_cast<std::size_t>(v)].emplace_back(static_cast<int>(id), om[id]);
    }
  }
  s.cache = BuildMaskCache(spec.grid, masks, {});
  for (int v = 0; v < n_views; ++v) {
    s.soft.push_back(s.cache.view(v).soft_mask);
    s.intrinsics.push_back(s.gt.views[static_cast<std::size_t>(v)].transform.intrinsics);
  }
  return s;
}

void BM_LossAndGradient(benchmark::State& state) {
  const Scene s = MakeScene(static_cast<int>(state.range(0)), 5);
  const DgaConfig config;
  const auto problem = MakeProblem(s.gt.grid(), s.graph, s.intrinsics, s.obs, ComputeEdgeWeights(s.obs, s.soft, config));
  const AlignmentState st = InitializeState(problem, config);
  std::vector<double> grad;
  for (auto _ : state) benchmark::DoNotOptimize(DgaLossAndGradient(st, grad));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(s.obs.size() * 2 * s.gt.grid().size()));
}
BENCHMARK(BM_LossAndGradient)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_Segment(benchmark::State& state) {
  const Scene s = MakeScene(static_cast<int>(state.range(0)), 5);
  AlignedScene aligned;
  for (const GroundTruthView& v : s.gt.views) aligned.views.push_back(v.transform);
  const auto prompt = CentroidPrompt(s.gt.views[2].object_masks[0]);
  for (auto _ : state) benchmark::DoNotOptimize(Segment({2, {*prompt}, {}}, s.cache, aligned));
}
BENCHMARK(BM_Segment)->Arg(64)->Arg(96)->Unit(benchmark::kMicrosecond);

void BM_RleRoundTrip(benchmark::State& state) {
  const Scene s = MakeScene(96, 2);
  const BinaryMask& m = s.gt.views[0].object_masks[0];
  for (auto _ : state) benchmark::DoNotOptimize(DecodeRle(EncodeRle(m)));
}
BENCHMARK(BM_RleRoundTrip);

void BM_BundleEncode(benchmark::State& state) {
  const Scene s = MakeScene(64, 5);
  const Bundle b = MakeBundle(s.gt, s.obs, {});
  for (auto _ : state) benchmark::DoNotOptimize(EncodeBundle(b));
}
BENCHMARK(BM_BundleEncode)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace ffseg

BENCHMARK_MAIN();
