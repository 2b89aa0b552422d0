#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>

#include "ffseg/alignment.hpp"
#include "ffseg/registration.hpp"

namespace ffseg {
namespace {

constexpr std::size_t kFitSamples = 800;

// Pixel indices with the highest confidence (ties by index), at most `count`.
std::vector<std::size_t> MostConfident(const ConfidenceMap& conf, std::size_t count) {
  std::vector<std::size_t> idx(conf.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  count = std::min(count, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(count), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      return conf[a] != conf[b] ? conf[a] > conf[b] : a < b;
                    });
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

double MeanConfidence(const PairwiseObservation& obs) {
  double sum = 0.0;
  for (int slot = 0; slot < 2; ++slot) {
    for (double c : obs.confidence(slot)) sum += c;
  }
  return sum / (2.0 * static_cast<double>(obs.confidence_first.size()));
}

double PositiveOr(double value, double fallback) {
  return std::isfinite(value) && value > 1e-6 ? value : fallback;
}

double MedianPositive(std::vector<double> values) {
  std::erase_if(values, [](double v) { return !(std::isfinite(v) && v > 1e-6); });
  if (values.empty()) return 1.0;
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>(values.size() / 2);
  std::nth_element(values.begin(), mid, values.end());
  return *mid;
}

DepthMap DepthsFromCameraPoints(const std::vector<Vec3>& camera_points, const ImageGrid& grid) {
  std::vector<double> z(camera_points.size());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = camera_points[i].z();
  const double fallback = MedianPositive(z);
  DepthMap depth(grid);
  for (std::size_t i = 0; i < z.size(); ++i) depth[i] = PositiveOr(z[i], fallback);
  return depth;
}

}  // namespace

AlignmentState InitializeState(std::shared_ptr<const AlignmentProblem> problem,
                               const DgaConfig& config) {
  problem->Validate();
  AlignmentState state(problem, config.optimize_focal);
  const ImageGrid grid = problem->grid;
  const ViewGraph& graph = problem->graph;
  const int n_views = graph.n_views;
  const int n_edges = static_cast<int>(graph.edges.size());

  // Maximum spanning tree by mean edge confidence (Prim from the best edge).
  std::vector<int> order(static_cast<std::size_t>(n_edges));
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> edge_conf(static_cast<std::size_t>(n_edges));
  for (int e = 0; e < n_edges; ++e) {
    edge_conf[static_cast<std::size_t>(e)] = MeanConfidence(problem->observations[static_cast<std::size_t>(e)]);
  }
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return edge_conf[static_cast<std::size_t>(a)] > edge_conf[static_cast<std::size_t>(b)];
  });

  std::vector<bool> placed(static_cast<std::size_t>(n_views), false);
  std::vector<ViewTransform> views(static_cast<std::size_t>(n_views));
  std::vector<Pointmap> world(static_cast<std::size_t>(n_views));

  const auto intrinsics = [&](int v) { return problem->intrinsics[static_cast<std::size_t>(v)]; };

  {
    const int top = order.front();
    const PairwiseObservation& obs = problem->observations[static_cast<std::size_t>(top)];
    const int root = obs.edge.first;
    ViewTransform& vt = views[static_cast<std::size_t>(root)];
    vt.intrinsics = intrinsics(root);
    vt.pose = RigidPose::Identity();
    vt.depth = DepthsFromCameraPoints(obs.pointmap_first.values(), grid);
    world[static_cast<std::size_t>(root)] = WorldPointmap(vt);
    placed[static_cast<std::size_t>(root)] = true;
  }

  for (int added = 1; added < n_views; ++added) {
    // Highest-confidence edge joining a placed view to an unplaced one.
    int chosen = -1;
    for (int e : order) {
      const Edge& edge = graph.edges[static_cast<std::size_t>(e)];
      if (placed[static_cast<std::size_t>(edge.first)] != placed[static_cast<std::size_t>(edge.second)]) {
        chosen = e;
        break;
      }
    }
    if (chosen < 0) throw StructuralError("view graph is not connected");
    const PairwiseObservation& obs = problem->observations[static_cast<std::size_t>(chosen)];
    const int parent_slot = placed[static_cast<std::size_t>(obs.edge.first)] ? 0 : 1;
    const int child_slot = 1 - parent_slot;
    const int parent = obs.view(parent_slot);
    const int child = obs.view(child_slot);

    // Edge frame -> world, anchored on the parent's current world points.
    const auto idx = MostConfident(obs.confidence(parent_slot), kFitSamples);
    std::vector<Vec3> src;
    std::vector<Vec3> dst;
    for (std::size_t i : idx) {
      src.push_back(obs.pointmap(parent_slot)[i]);
      dst.push_back(world[static_cast<std::size_t>(parent)][i]);
    }
    const Similarity to_world = FitSimilarity(src, dst);

    ViewTransform& vt = views[static_cast<std::size_t>(child)];
    vt.intrinsics = intrinsics(child);
    const Pointmap& child_points = obs.pointmap(child_slot);
    if (child_slot == 0) {
      // The edge frame is the child's camera frame (up to scale).
      vt.pose = {to_world.rotation.transpose(), -to_world.rotation.transpose() * to_world.translation};
      std::vector<Vec3> cam(child_points.size());
      for (std::size_t i = 0; i < cam.size(); ++i) cam[i] = to_world.scale * child_points[i];
      vt.depth = DepthsFromCameraPoints(cam, grid);
    } else {
      const auto cidx = MostConfident(obs.confidence(child_slot), kFitSamples);
      std::vector<Vec3> pts;
      std::vector<Eigen::Vector2d> rays;
      const CameraIntrinsics k = intrinsics(child);
      for (std::size_t i : cidx) {
        const int x = static_cast<int>(i % static_cast<std::size_t>(grid.width));
        const int y = static_cast<int>(i / static_cast<std::size_t>(grid.width));
        pts.push_back(to_world.Apply(child_points[i]));
        rays.emplace_back((x - k.cx) / k.fx, (y - k.cy) / k.fy);
      }
      vt.pose = SolvePnP(pts, rays);
      std::vector<Vec3> cam(child_points.size());
      for (std::size_t i = 0; i < cam.size(); ++i) cam[i] = vt.pose.Apply(to_world.Apply(child_points[i]));
      vt.depth = DepthsFromCameraPoints(cam, grid);
    }
    world[static_cast<std::size_t>(child)] = WorldPointmap(vt);
    placed[static_cast<std::size_t>(child)] = true;
  }

  // Per-edge pose and scale from a similarity fit of both pointmaps.
  std::vector<EdgeParams> edges(static_cast<std::size_t>(n_edges));
  double mean_log_scale = 0.0;
  for (int e = 0; e < n_edges; ++e) {
    const PairwiseObservation& obs = problem->observations[static_cast<std::size_t>(e)];
    std::vector<Vec3> src;
    std::vector<Vec3> dst;
    for (int slot = 0; slot < 2; ++slot) {
      const int v = obs.view(slot);
      for (std::size_t i : MostConfident(obs.confidence(slot), kFitSamples / 2)) {
        src.push_back(obs.pointmap(slot)[i]);
        dst.push_back(world[static_cast<std::size_t>(v)][i]);
      }
    }
    const Similarity fit = FitSimilarity(src, dst);
    edges[static_cast<std::size_t>(e)] = {{fit.rotation, fit.translation / fit.scale}, std::log(fit.scale)};
    mean_log_scale += std::log(fit.scale);
  }
  mean_log_scale /= std::max(n_edges, 1);

  // Rescale the world so that the log-scales have zero mean.
  const double k = std::exp(-mean_log_scale);
  for (int v = 0; v < n_views; ++v) {
    ViewTransform vt = views[static_cast<std::size_t>(v)];
    vt.pose.translation *= k;
    for (std::size_t i = 0; i < vt.depth.size(); ++i) vt.depth[i] *= k;
    state.SetView(v, vt);
  }
  for (int e = 0; e < n_edges; ++e) {
    EdgeParams p = edges[static_cast<std::size_t>(e)];
    p.log_scale -= mean_log_scale;
    state.SetEdge(e, p);
  }
  state.RecenterLogScales();
  return state;
}

}  // namespace ffseg
