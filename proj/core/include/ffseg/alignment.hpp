#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ffseg/dga_weights.hpp"
#include "ffseg/scene_model.hpp"
#include "ffseg/synth.hpp"

namespace ffseg {

/// Immutable inputs of one alignment run. Weights are frozen per (edge, slot).
struct AlignmentProblem {
  ImageGrid grid;
  ViewGraph graph;
  std::vector<CameraIntrinsics> intrinsics;  // per view, fixed unless focal is free
  std::vector<PairwiseObservation> observations;  // parallel to graph.edges
  std::vector<EdgeWeights> weights;               // parallel to graph.edges

  void Validate() const;
};

/// Smoothing of the residual norm: sqrt(|r|^2 + eta^2) - eta.
inline constexpr double kNormSmoothing = 1e-9;

/// Optimisation variables in one flat vector. Per view:
/// [axis-angle(3), translation(3), log-focal(1), log-depth(W*H)];
/// then per edge: [axis-angle(3), translation(3), log-scale(1)].
class AlignmentState {
 public:
  static constexpr std::size_t kViewHeader = 7;
  static constexpr std::size_t kEdgeBlock = 7;

  AlignmentState(std::shared_ptr<const AlignmentProblem> problem, bool optimize_focal);

  const AlignmentProblem& problem() const { return *problem_; }
  const std::shared_ptr<const AlignmentProblem>& shared_problem() const { return problem_; }
  bool optimize_focal() const { return optimize_focal_; }

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  std::size_t ViewOffset(int v) const;
  std::size_t EdgeOffset(int e) const;
  int n_views() const { return problem_->graph.n_views; }
  int n_edges() const { return static_cast<int>(problem_->graph.edges.size()); }

  ViewTransform View(int v) const;
  EdgeParams EdgeAt(int e) const;
  CameraIntrinsics Intrinsics(int v) const;
  void SetView(int v, const ViewTransform& vt);
  void SetEdge(int e, const EdgeParams& params);

  /// Shifts log-scales to mean zero (prod sigma_e = 1).
  void RecenterLogScales();
  double LogScaleSum() const;

  /// Human-readable block owning a flat parameter index, e.g. "view 2 log-depth".
  std::string BlockName(std::size_t index) const;

 private:
  std::shared_ptr<const AlignmentProblem> problem_;
  bool optimize_focal_;
  std::vector<double> params_;
};

/// Weighted alignment objective:
/// sum_e sum_{v in e} sum_i W_i |chi_i^v - sigma_e P_e X_i^{v,e}| with the
/// world points chi reconstructed from each view's transform.
double DgaLoss(const AlignmentState& state);

/// Objective and its analytic gradient (gradient resized to params().size();
/// entries for a fixed focal stay zero).
double DgaLossAndGradient(const AlignmentState& state, std::vector<double>& gradient);

struct AlignedScene {
  std::vector<ViewTransform> views;
  std::vector<EdgeParams> edges;
  double final_loss = 0.0;
  std::vector<double> loss_history;

  int n_views() const { return static_cast<int>(views.size()); }
  friend bool operator==(const AlignedScene&, const AlignedScene&) = default;
};

/// Deterministic start: maximum-confidence spanning tree, root at identity,
/// children placed through similarity fits (and PnP when the child is the
/// second view of its tree edge), then per-edge similarity fits and
/// log-scale recentering.
AlignmentState InitializeState(std::shared_ptr<const AlignmentProblem> problem,
                               const DgaConfig& config);

struct OptimizeObserver {
  /// Called after each step with (iteration, loss before the step).
  std::function<void(int, double)> on_iteration;
};

/// Adam on all variable blocks with a cosine learning-rate decay; log-scales
/// are recentred after every step.
AlignedScene Optimize(AlignmentState state, const DgaConfig& config,
                      const OptimizeObserver& observer = {});

/// Convenience: weights + init + optimise.
AlignedScene AlignScene(const ImageGrid& grid, const ViewGraph& graph,
                        const std::vector<CameraIntrinsics>& intrinsics,
                        const std::vector<PairwiseObservation>& observations,
                        const std::vector<SoftMask>& soft_masks, const DgaConfig& config);

std::shared_ptr<const AlignmentProblem> MakeProblem(
    const ImageGrid& grid, const ViewGraph& graph,
    const std::vector<CameraIntrinsics>& intrinsics,
    std::vector<PairwiseObservation> observations, std::vector<EdgeWeights> weights);

}  // namespace ffseg
