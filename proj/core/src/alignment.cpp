#include "ffseg/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace ffseg {

void AlignmentProblem::Validate() const {
  graph.Validate();
  if (static_cast<int>(intrinsics.size()) != graph.n_views) {
    throw StructuralError("need one intrinsics entry per view");
  }
  if (observations.size() != graph.edges.size() || weights.size() != graph.edges.size()) {
    throw StructuralError("observations and weights must be parallel to the graph edges");
  }
  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    if (!(observations[e].edge == graph.edges[e])) {
      throw StructuralError("observation " + std::to_string(e) + " is for a different edge");
    }
    observations[e].Validate(grid);
    for (const WeightMap& w : weights[e]) {
      if (w.grid() != grid) throw StructuralError("weight map grid mismatch on edge " + std::to_string(e));
    }
  }
  for (const CameraIntrinsics& k : intrinsics) k.Validate();
}

std::shared_ptr<const AlignmentProblem> MakeProblem(
    const ImageGrid& grid, const ViewGraph& graph,
    const std::vector<CameraIntrinsics>& intrinsics,
    std::vector<PairwiseObservation> observations, std::vector<EdgeWeights> weights) {
  auto problem = std::make_shared<AlignmentProblem>();
  problem->grid = grid;
  problem->graph = graph;
  problem->intrinsics = intrinsics;
  problem->observations = std::move(observations);
  problem->weights = std::move(weights);
  problem->Validate();
  return problem;
}

AlignmentState::AlignmentState(std::shared_ptr<const AlignmentProblem> problem,
                               bool optimize_focal)
    : problem_(std::move(problem)), optimize_focal_(optimize_focal) {
  const std::size_t n = static_cast<std::size_t>(problem_->graph.n_views) *
                            (kViewHeader + problem_->grid.size()) +
                        problem_->graph.edges.size() * kEdgeBlock;
  params_.assign(n, 0.0);
}

std::size_t AlignmentState::ViewOffset(int v) const {
  return static_cast<std::size_t>(v) * (kViewHeader + problem_->grid.size());
}

std::size_t AlignmentState::EdgeOffset(int e) const {
  return ViewOffset(n_views()) + static_cast<std::size_t>(e) * kEdgeBlock;
}

CameraIntrinsics AlignmentState::Intrinsics(int v) const {
  CameraIntrinsics k = problem_->intrinsics[static_cast<std::size_t>(v)];
  if (!optimize_focal_) return k;
  const double scale = std::exp(params_[ViewOffset(v) + 6]);
  k.fx *= scale;
  k.fy *= scale;
  return k;
}

ViewTransform AlignmentState::View(int v) const {
  const std::size_t o = ViewOffset(v);
  ViewTransform vt;
  vt.intrinsics = Intrinsics(v);
  vt.pose = RigidPose::FromAxisAngle(Vec3(params_[o], params_[o + 1], params_[o + 2]),
                                     Vec3(params_[o + 3], params_[o + 4], params_[o + 5]));
  vt.depth = DepthMap(problem_->grid);
  for (std::size_t i = 0; i < problem_->grid.size(); ++i) {
    vt.depth[i] = std::exp(params_[o + kViewHeader + i]);
  }
  return vt;
}

EdgeParams AlignmentState::EdgeAt(int e) const {
  const std::size_t o = EdgeOffset(e);
  return {RigidPose::FromAxisAngle(Vec3(params_[o], params_[o + 1], params_[o + 2]),
                                   Vec3(params_[o + 3], params_[o + 4], params_[o + 5])),
          params_[o + 6]};
}

void AlignmentState::SetView(int v, const ViewTransform& vt) {
  if (vt.grid() != problem_->grid) throw StructuralError("view transform grid mismatch");
  const std::size_t o = ViewOffset(v);
  const Vec3 w = LogSO3(vt.pose.rotation);
  for (int k = 0; k < 3; ++k) {
    params_[o + static_cast<std::size_t>(k)] = w[k];
    params_[o + 3 + static_cast<std::size_t>(k)] = vt.pose.translation[k];
  }
  params_[o + 6] = std::log(vt.intrinsics.fx / problem_->intrinsics[static_cast<std::size_t>(v)].fx);
  for (std::size_t i = 0; i < problem_->grid.size(); ++i) {
    params_[o + kViewHeader + i] = std::log(vt.depth[i]);
  }
}

void AlignmentState::SetEdge(int e, const EdgeParams& edge) {
  const std::size_t o = EdgeOffset(e);
  const Vec3 w = LogSO3(edge.pose.rotation);
  for (int k = 0; k < 3; ++k) {
    params_[o + static_cast<std::size_t>(k)] = w[k];
    params_[o + 3 + static_cast<std::size_t>(k)] = edge.pose.translation[k];
  }
  params_[o + 6] = edge.log_scale;
}

double AlignmentState::LogScaleSum() const {
  double sum = 0.0;
  for (int e = 0; e < n_edges(); ++e) sum += params_[EdgeOffset(e) + 6];
  return sum;
}

void AlignmentState::RecenterLogScales() {
  if (n_edges() == 0) return;
  const double mean = LogScaleSum() / n_edges();
  for (int e = 0; e < n_edges(); ++e) params_[EdgeOffset(e) + 6] -= mean;
}

std::string AlignmentState::BlockName(std::size_t index) const {
  const std::size_t edges_start = ViewOffset(n_views());
  if (index < edges_start) {
    const std::size_t per_view = kViewHeader + problem_->grid.size();
    const std::size_t v = index / per_view;
    const std::size_t local = index % per_view;
    const char* part = local < 3 ? "rotation" : local < 6 ? "translation" : local == 6 ? "log-focal" : "log-depth";
    return "view " + std::to_string(v) + " " + part;
  }
  const std::size_t e = (index - edges_start) / kEdgeBlock;
  const std::size_t local = (index - edges_start) % kEdgeBlock;
  const char* part = local < 3 ? "rotation" : local < 6 ? "translation" : "log-scale";
  return "edge " + std::to_string(e) + " " + part;
}

namespace {

Vec3 Block3(std::span<const double> p, std::size_t o) { return {p[o], p[o + 1], p[o + 2]}; }

template <bool kWithGradient>
double Evaluate(const AlignmentState& state, std::vector<double>* gradient) {
  const AlignmentProblem& problem = state.problem();
  const std::span<const double> p = state.params();
  const ImageGrid grid = problem.grid;
  const std::size_t n_pixels = grid.size();
  const int n_views = state.n_views();
  if constexpr (kWithGradient) gradient->assign(p.size(), 0.0);

  struct ViewCache {
    Mat3 rotation;
    Vec3 translation;
    CameraIntrinsics k;
    Vec3 rotation_acc = Vec3::Zero();
  };
  std::vector<ViewCache> views(static_cast<std::size_t>(n_views));
  for (int v = 0; v < n_views; ++v) {
    const std::size_t o = state.ViewOffset(v);
    ViewCache& c = views[static_cast<std::size_t>(v)];
    c.rotation = ExpSO3(Block3(p, o));
    c.translation = Block3(p, o + 3);
    c.k = state.Intrinsics(v);
  }

  double loss = 0.0;
  for (int e = 0; e < state.n_edges(); ++e) {
    const std::size_t eo = state.EdgeOffset(e);
    const Vec3 edge_w = Block3(p, eo);
    const Mat3 re = ExpSO3(edge_w);
    const Vec3 te = Block3(p, eo + 3);
    const double sigma = std::exp(p[eo + 6]);
    const PairwiseObservation& obs = problem.observations[static_cast<std::size_t>(e)];
    Vec3 edge_rot_acc = Vec3::Zero();
    Vec3 grad_te = Vec3::Zero();
    double grad_s = 0.0;

    for (int slot = 0; slot < 2; ++slot) {
      const int v = obs.view(slot);
      ViewCache& vc = views[static_cast<std::size_t>(v)];
      const std::size_t vo = state.ViewOffset(v);
      const WeightMap& weights = problem.weights[static_cast<std::size_t>(e)][static_cast<std::size_t>(slot)];
      const Pointmap& x_obs = obs.pointmap(slot);
      const Mat3 rvt = vc.rotation.transpose();
      Vec3 grad_tv = Vec3::Zero();
      double grad_focal = 0.0;
      for (std::size_t i = 0; i < n_pixels; ++i) {
        const double w = weights[i];
        if (w == 0.0) continue;
        const int x = static_cast<int>(i % static_cast<std::size_t>(grid.width));
        const int y = static_cast<int>(i / static_cast<std::size_t>(grid.width));
        const double rx = (x - vc.k.cx) / vc.k.fx;
        const double ry = (y - vc.k.cy) / vc.k.fy;
        const double depth = std::exp(p[vo + AlignmentState::kViewHeader + i]);
        const Vec3 cam(rx * depth, ry * depth, depth);
        const Vec3 q = cam - vc.translation;
        const Vec3 chi = rvt * q;
        const Vec3& xi = x_obs[i];
        const Vec3 y_pt = sigma * (re * xi + te);
        const Vec3 r = chi - y_pt;
        const double norm = std::sqrt(r.squaredNorm() + kNormSmoothing * kNormSmoothing);
        loss += w * (norm - kNormSmoothing);
        if constexpr (kWithGradient) {
          const Vec3 g = (w / norm) * r;
          const Vec3 a = vc.rotation * g;
          grad_tv -= a;
          vc.rotation_acc += a.cross(q);
          (*gradient)[vo + AlignmentState::kViewHeader + i] += a.dot(cam);
          grad_focal -= depth * (a.x() * rx + a.y() * ry);
          grad_s -= g.dot(y_pt);
          grad_te -= sigma * g;
          edge_rot_acc += (re.transpose() * g).cross(xi);
        }
      }
      if constexpr (kWithGradient) {
        for (int k = 0; k < 3; ++k) (*gradient)[vo + 3 + static_cast<std::size_t>(k)] += grad_tv[k];
        if (state.optimize_focal()) (*gradient)[vo + 6] += grad_focal;
      }
    }
    if constexpr (kWithGradient) {
      const Vec3 grad_we = sigma * (RightJacobianSO3(edge_w).transpose() * edge_rot_acc);
      for (int k = 0; k < 3; ++k) {
        (*gradient)[eo + static_cast<std::size_t>(k)] = grad_we[k];
        (*gradient)[eo + 3 + static_cast<std::size_t>(k)] = grad_te[k];
      }
      (*gradient)[eo + 6] = grad_s;
    }
  }
  if constexpr (kWithGradient) {
    for (int v = 0; v < n_views; ++v) {
      const std::size_t vo = state.ViewOffset(v);
      const Vec3 w = Block3(p, vo);
      const Vec3 g = RightJacobianSO3(-w).transpose() * views[static_cast<std::size_t>(v)].rotation_acc;
      for (int k = 0; k < 3; ++k) (*gradient)[vo + static_cast<std::size_t>(k)] = g[k];
    }
  }
  return loss;
}

}  // namespace

double DgaLoss(const AlignmentState& state) { return Evaluate<false>(state, nullptr); }

double DgaLossAndGradient(const AlignmentState& state, std::vector<double>& gradient) {
  return Evaluate<true>(state, &gradient);
}

AlignedScene Optimize(AlignmentState state, const DgaConfig& config,
                      const OptimizeObserver& observer) {
  config.Validate();
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.9;
  constexpr double kAdamEps = 1e-12;
  std::span<double> x = state.params();
  std::vector<double> grad;
  std::vector<double> m(x.size(), 0.0);
  std::vector<double> s(x.size(), 0.0);
  AlignedScene out;
  out.loss_history.reserve(static_cast<std::size_t>(config.iterations));

  double b1 = 1.0;
  double b2 = 1.0;
  for (int it = 0; it < config.iterations; ++it) {
    for (std::size_t j = 0; j < x.size(); ++j) {
      if (!std::isfinite(x[j])) {
        const std::string block = state.BlockName(j);
        throw OptimizationError(it, block, "non-finite parameter in " + block + " at iteration " + std::to_string(it));
      }
    }
    const double loss = DgaLossAndGradient(state, grad);
    if (!std::isfinite(loss)) {
      throw OptimizationError(it, "objective", "non-finite loss at iteration " + std::to_string(it));
    }
    for (std::size_t j = 0; j < grad.size(); ++j) {
      if (!std::isfinite(grad[j])) {
        const std::string block = state.BlockName(j);
        throw OptimizationError(it, block, "non-finite gradient in " + block + " at iteration " +
                                               std::to_string(it));
      }
    }
    out.loss_history.push_back(loss);
    if (observer.on_iteration) observer.on_iteration(it, loss);

    const double progress = config.iterations > 1
                                ? static_cast<double>(it) / (config.iterations - 1)
                                : 1.0;
    const double lr = config.final_learning_rate +
                      0.5 * (config.learning_rate - config.final_learning_rate) *
                          (1.0 + std::cos(std::numbers::pi * progress));
    b1 *= kBeta1;
    b2 *= kBeta2;
    for (std::size_t j = 0; j < x.size(); ++j) {
      m[j] = kBeta1 * m[j] + (1.0 - kBeta1) * grad[j];
      s[j] = kBeta2 * s[j] + (1.0 - kBeta2) * grad[j] * grad[j];
      const double m_hat = m[j] / (1.0 - b1);
      const double s_hat = s[j] / (1.0 - b2);
      x[j] -= lr * m_hat / (std::sqrt(s_hat) + kAdamEps);
    }
    state.RecenterLogScales();
  }

  for (int v = 0; v < state.n_views(); ++v) out.views.push_back(state.View(v));
  for (int e = 0; e < state.n_edges(); ++e) out.edges.push_back(state.EdgeAt(e));
  out.final_loss = DgaLoss(state);
  return out;
}

AlignedScene AlignScene(const ImageGrid& grid, const ViewGraph& graph,
                        const std::vector<CameraIntrinsics>& intrinsics,
                        const std::vector<PairwiseObservation>& observations,
                        const std::vector<SoftMask>& soft_masks, const DgaConfig& config) {
  auto weights = ComputeEdgeWeights(observations, soft_masks, config);
  auto problem = MakeProblem(grid, graph, intrinsics, observations, std::move(weights));
  return Optimize(InitializeState(problem, config), config);
}

}  // namespace ffseg
