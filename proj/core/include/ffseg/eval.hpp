#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ffseg/alignment.hpp"
#include "ffseg/mask_cache.hpp"
#include "ffseg/mgm.hpp"
#include "ffseg/synth.hpp"

namespace ffseg {

/// Splat projection: every point in front of the camera sets its nearest
/// pixel plus all pixels whose centres lie strictly within `splat_radius` of
/// the sub-pixel projection.
BinaryMask ProjectPoints(const std::vector<Vec3>& points, const ViewTransform& vt, const ImageGrid& grid,
                         double splat_radius);

/// Surface projection of a segmentation: each 2x2 block of selected pixels in
/// a source view is lifted, projected into `target` as two triangles and
/// filled (pixel centres inside or on an edge). Blocks with a 3D edge longer
/// than `max_edge_ratio` times the median lattice spacing are skipped. Points
/// projecting within 1e-6 px of a pixel centre set that pixel.
BinaryMask ProjectSurface(const std::vector<BinaryMask>& masks, const std::vector<ViewTransform>& views,
                          const ViewTransform& target, double max_edge_ratio = 4.0);

struct MaskScore {
  double iou = 1.0;
  double accuracy = 1.0;
};

/// IoU (1 when both masks are empty) and overall pixel accuracy.
MaskScore MiouMacc(const BinaryMask& pred, const BinaryMask& gt);

/// RMSE between paired point sets after the least-squares similarity fit.
double SimilarityRmse(const std::vector<Vec3>& estimate, const std::vector<Vec3>& reference);

/// Lifts the object's ground-truth masks through `views` and compares with the
/// ground-truth surface points after a similarity fit.
double ObjectRmse(const std::vector<ViewTransform>& views, const GroundTruthScene& gt, int object_id);

/// Removes about `fraction` of the mask: the pixels furthest along a random
/// direction drawn from (seed, stream).
BinaryMask CutMask(const BinaryMask& mask, double fraction, std::uint64_t seed, std::uint64_t stream);

/// Mask centroid snapped to the nearest pixel inside the mask.
std::optional<PixelCoord> CentroidPrompt(const BinaryMask& mask);

enum class ProjectionMethod { kSurface, kSplat };

struct ExperimentVariant {
  std::string name;
  DgaConfig config;
};

struct ExperimentConfig {
  SceneSpec scene;
  NoiseSpec noise;
  SoftenParams soften;
  std::vector<std::uint64_t> seeds;
  /// Empty: use scene.n_views only.
  std::vector<int> view_counts;
  std::vector<ExperimentVariant> variants;
  /// Negative: the middle view.
  int reference_view = -1;
  /// Fraction of each cached object mask cut away along a random half-plane,
  /// standing in for partial 2D segmentations. Scoring still uses the full
  /// ground-truth masks.
  double mask_miss_fraction = 0.0;
  ProjectionMethod projection = ProjectionMethod::kSurface;
  double splat_radius = 1.0;
  GraphStrategy graph = CompleteGraph{};

  void Validate() const;
  /// Keys: scene/noise keys, seeds, view_counts, variants (comma list of
  /// "GA", "DGA" or adjust functions like "arctan:10"), reference_view,
  /// projection (surface|splat), splat_radius, graph_window, soft_background,
  /// soft_radius, mask_miss_fraction, plus DGA keys applied to every variant.
  static ExperimentConfig FromConfig(const KeyValueConfig& config);
  void WriteConfig(KeyValueConfig& config) const;
};

struct ExperimentCell {
  std::string variant;
  std::uint64_t seed = 0;
  int n_views = 0;
  bool ok = false;
  std::string error;
  double miou = 0.0;
  double macc = 0.0;
  double object_rmse = 0.0;
  double final_loss = 0.0;
  double wall_ms = 0.0;
  int n_objects_scored = 0;
};

struct ExperimentReport {
  std::vector<ExperimentCell> cells;

  std::vector<const ExperimentCell*> Select(const std::string& variant, int n_views) const;
  /// Aggregates over the successful cells of (variant, n_views); NaN if none.
  double Median(const std::string& variant, int n_views, double ExperimentCell::*metric) const;
  double Mean(const std::string& variant, int n_views, double ExperimentCell::*metric) const;
};

/// Per seed and view count: generate, simulate, cache GT masks, align with
/// every variant, segment each object visible in the reference view from its
/// centroid prompt and score the projection against its GT mask.
ExperimentReport RunExperiment(const ExperimentConfig& config);

/// Columns: variant,seed,n_views,ok,miou,macc,object_rmse,final_loss,wall_ms,n_objects,error
void WriteReportCsv(const ExperimentReport& report, std::ostream& out);
void WriteReportSummary(const ExperimentReport& report, std::ostream& out);

/// Preset used by the GA/DGA comparison: noisy background (10x object noise),
/// per-prediction clutter displacement and confidence that tracks the noise.
NoiseSpec ClutteredNoise(double sigma_object = 0.003);

}  // namespace ffseg
