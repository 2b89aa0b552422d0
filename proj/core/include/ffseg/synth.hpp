#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ffseg/config.hpp"
#include "ffseg/scene_model.hpp"

namespace ffseg {

enum class ShapeKind { kSphere, kBox };

/// Sphere: `extent.x()` is the radius. Box: axis-aligned, `extent` holds the
/// half-sizes.
struct ObjectShape {
  ShapeKind kind = ShapeKind::kSphere;
  Vec3 center = Vec3::Zero();
  Vec3 extent = Vec3::Constant(0.3);

  /// Radius of a sphere enclosing the shape.
  double BoundingRadius() const;
};

enum class BackgroundKind { kPlane, kClutter };

/// Cameras sit on a horizontal arc around the origin, all looking at it.
struct CameraRing {
  double radius = 3.0;
  double height = 0.8;
  double span = 1.0;  // radians covered by the arc
};

struct SceneSpec {
  ImageGrid grid{64, 48};
  int n_views = 5;
  int n_objects = 2;
  /// Explicit shapes; when empty, n_objects shapes are laid out along x.
  std::vector<ObjectShape> objects;
  BackgroundKind background = BackgroundKind::kClutter;
  int n_clutter = 400;
  double clutter_min_radius = 0.25;
  double clutter_max_radius = 0.5;
  /// Enclosing dome (every ray terminates on it).
  double dome_radius = 7.0;
  /// Focal length in pixels as a multiple of the grid width.
  double focal_scale = 0.9;
  CameraRing ring;

  /// Objects actually used (explicit list or the default layout).
  std::vector<ObjectShape> ResolvedObjects() const;
  void Validate() const;

  static SceneSpec FromConfig(const KeyValueConfig& config);
  void WriteConfig(KeyValueConfig& config) const;
};

/// What the first ray hit at a pixel.
struct SurfaceLabel {
  enum Kind : std::uint8_t { kObject, kClutter, kPlane, kDome };
  Kind kind = kDome;
  int index = 0;  // object id or clutter index

  friend bool operator==(const SurfaceLabel&, const SurfaceLabel&) = default;
};

struct ClutterBlob {
  Vec3 center;
  double radius;
};

struct GroundTruthView {
  ViewTransform transform;
  Pointmap world_points;
  /// One mask per object id (index = id), possibly empty.
  std::vector<BinaryMask> object_masks;
  std::vector<SurfaceLabel> labels;
  RgbImage image;
};

struct ObjectSample {
  Vec3 position;
  int view;
  int x;
  int y;
};

struct GroundTruthScene {
  SceneSpec spec;
  std::vector<ObjectShape> objects;
  std::vector<ClutterBlob> clutter;
  std::vector<GroundTruthView> views;
  /// Per object id: every visible surface sample across views.
  std::vector<std::vector<ObjectSample>> object_points;

  int n_views() const { return static_cast<int>(views.size()); }
  const ImageGrid& grid() const { return spec.grid; }
};

GroundTruthScene GenerateScene(const SceneSpec& spec, std::uint64_t seed);

struct NoiseSpec {
  double sigma_object = 0.0;
  double sigma_background = 0.0;
  double pose_jitter_rotation = 0.0;     // radians
  double pose_jitter_translation = 0.0;  // scene units
  double confidence_base = 3.0;          // c0
  double confidence_scale = 0.02;        // noise magnitude for a 1/e drop
  double match_dropout = 0.0;
  /// Background inconsistency: fraction of clutter blobs displaced in each
  /// edge prediction and the displacement length.
  double clutter_shift_fraction = 0.0;
  double clutter_shift = 0.0;

  void Validate() const;
  static NoiseSpec FromConfig(const KeyValueConfig& config);
  void WriteConfig(KeyValueConfig& config) const;
};

/// Network-style prediction for one view pair: both pointmaps are expressed
/// in the camera frame of the first view of the edge.
struct PairwiseObservation {
  Edge edge;
  Pointmap pointmap_first;
  Pointmap pointmap_second;
  ConfidenceMap confidence_first;
  ConfidenceMap confidence_second;
  MatchMap match_first;
  MatchMap match_second;

  const Pointmap& pointmap(int slot) const { return slot == 0 ? pointmap_first : pointmap_second; }
  const ConfidenceMap& confidence(int slot) const {
    return slot == 0 ? confidence_first : confidence_second;
  }
  const MatchMap& match(int slot) const { return slot == 0 ? match_first : match_second; }
  int view(int slot) const { return slot == 0 ? edge.first : edge.second; }

  void Validate(const ImageGrid& grid) const;
  friend bool operator==(const PairwiseObservation&, const PairwiseObservation&) = default;
};

std::vector<PairwiseObservation> SimulatePairwise(const GroundTruthScene& gt,
                                                  const ViewGraph& graph,
                                                  const NoiseSpec& noise,
                                                  std::uint64_t seed);

/// Matching radius used for the match maps: half the median distance between
/// lattice-adjacent ground-truth object samples.
double MatchRadius(const GroundTruthScene& gt);

/// World points behind one view's pointmap in one edge prediction: the
/// ground truth with a random subset of clutter blobs displaced. Subset and
/// displacement are drawn per edge and shared by both views of the edge.
Pointmap EffectiveWorldPoints(const GroundTruthScene& gt, const NoiseSpec& noise,
                              std::uint64_t seed, std::size_t edge_index, int view);

/// Co-visibility test used for match maps: project `p` into `view` and
/// compare with the bilinearly interpolated point of `view_points` there.
bool IsCovisible(const Vec3& p, const ViewTransform& view,
                 const Pointmap& view_points, double radius);

}  // namespace ffseg
