#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "ffseg/errors.hpp"
#include "ffseg/geometry.hpp"

namespace ffseg {

/// Pixel dimensions shared by every per-pixel map of a scene. Maps are
/// flattened row-major, index = y * width + x.
struct ImageGrid {
  int width = 0;
  int height = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
           static_cast<std::size_t>(x);
  }
  bool contains(int x, int y) const {
    return x >= 0 && y >= 0 && x < width && y < height;
  }
  bool valid() const { return width >= 1 && height >= 1; }

  friend bool operator==(const ImageGrid&, const ImageGrid&) = default;
};

namespace map_tags {
struct Point {};
struct Confidence {};
struct Soft {};
struct Depth {};
struct Binary {};
struct Score {};
struct Weight {};
}  // namespace map_tags

/// Dense per-pixel map over an ImageGrid. The tag keeps semantically different
/// maps (confidence vs. soft mask vs. depth) from being mixed up.
template <typename T, typename Tag>
class PixelMap {
 public:
  using value_type = T;

  PixelMap() = default;
  explicit PixelMap(ImageGrid grid, T fill = T{})
      : grid_(grid), values_(grid.size(), fill) {
    if (!grid.valid()) throw std::domain_error("image grid must be at least 1x1");
  }
  PixelMap(ImageGrid grid, std::vector<T> values)
      : grid_(grid), values_(std::move(values)) {
    if (!grid.valid()) throw std::domain_error("image grid must be at least 1x1");
    if (values_.size() != grid.size()) {
      throw StructuralError("per-pixel map has " +
                            std::to_string(values_.size()) +
                            " entries, grid needs " +
                            std::to_string(grid.size()));
    }
  }

  const ImageGrid& grid() const { return grid_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  const T& operator[](std::size_t i) const { return values_[i]; }
  T& operator[](std::size_t i) { return values_[i]; }
  const T& operator()(int x, int y) const { return values_[grid_.index(x, y)]; }
  T& operator()(int x, int y) { return values_[grid_.index(x, y)]; }

  const std::vector<T>& values() const { return values_; }
  std::vector<T>& values() { return values_; }

  auto begin() const { return values_.begin(); }
  auto end() const { return values_.end(); }

  friend bool operator==(const PixelMap&, const PixelMap&) = default;

 private:
  ImageGrid grid_;
  std::vector<T> values_;
};

using Pointmap = PixelMap<Vec3, map_tags::Point>;
using ConfidenceMap = PixelMap<double, map_tags::Confidence>;
using SoftMask = PixelMap<double, map_tags::Soft>;
using DepthMap = PixelMap<double, map_tags::Depth>;
/// Binary per-pixel mask (0 or 1).
using BinaryMask = PixelMap<std::uint8_t, map_tags::Binary>;
/// Per-pixel cross-view match indicator.
using MatchMap = BinaryMask;

std::size_t Popcount(const BinaryMask& mask);

/// Throws DataError when a map breaks its value invariant.
void Validate(const Pointmap& map);
void Validate(const ConfidenceMap& map);
void Validate(const SoftMask& map);
void Validate(const DepthMap& map);
void Validate(const BinaryMask& map);

/// 8-bit RGB image used for display and point colouring only.
struct RgbImage {
  ImageGrid grid;
  std::vector<std::uint8_t> rgb;  // 3 * grid.size()

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  Mat3 Matrix() const;
  Mat3 InverseMatrix() const;
  void Validate() const;

  friend bool operator==(const CameraIntrinsics&,
                         const CameraIntrinsics&) = default;
};

/// Rigid transform x -> R x + t. View poses map world to camera.
struct RigidPose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidPose Identity() { return {}; }
  static RigidPose FromAxisAngle(const Vec3& omega, const Vec3& t);

  Vec3 Apply(const Vec3& p) const { return rotation * p + translation; }
  /// R^T (p - t).
  Vec3 ApplyInverse(const Vec3& p) const {
    return rotation.transpose() * (p - translation);
  }
  RigidPose Inverse() const;
  /// (this * other)(p) = this(other(p)).
  RigidPose operator*(const RigidPose& other) const;

  /// Throws DataError unless R^T R = I and det R = +1 within tolerance.
  void Validate(double tolerance = 1e-9) const;

  friend bool operator==(const RigidPose&, const RigidPose&) = default;
};

struct ViewTransform {
  CameraIntrinsics intrinsics;
  RigidPose pose;  // world -> camera
  DepthMap depth;

  const ImageGrid& grid() const { return depth.grid(); }
  void Validate() const;

  friend bool operator==(const ViewTransform&, const ViewTransform&) = default;
};

/// Back-projection of integer pixel (x, y) with the view's depth:
/// P^-1 K^-1 (x D, y D, D)^T. Pixel centres sit at integer coordinates.
Vec3 PixelToWorld(int x, int y, const ViewTransform& vt);

/// Same as PixelToWorld but with an explicit depth value, no bounds check.
Vec3 BackProject(double x, double y, double depth,
                 const CameraIntrinsics& intrinsics, const RigidPose& pose);

struct PixelProjection {
  double x = 0.0;
  double y = 0.0;
  double depth = 0.0;  // camera-frame z
};

/// Projects a world point; throws BehindCameraError when z <= 1e-12.
PixelProjection WorldToPixel(const Vec3& p, const ViewTransform& vt);
PixelProjection WorldToPixel(const Vec3& p, const CameraIntrinsics& intrinsics,
                             const RigidPose& pose);

/// World pointmap of a whole view (PixelToWorld on every pixel).
Pointmap WorldPointmap(const ViewTransform& vt);

struct Edge {
  int first = 0;
  int second = 0;

  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

struct ViewGraph {
  int n_views = 0;
  std::vector<Edge> edges;

  /// Throws StructuralError on bad indices, self loops, duplicates or a
  /// disconnected graph.
  void Validate() const;
  bool IsConnected() const;
};

struct CompleteGraph {};
struct WindowGraph {
  int k = 1;
};
using GraphStrategy = std::variant<CompleteGraph, WindowGraph>;

ViewGraph BuildGraph(int n_views, const GraphStrategy& strategy);

/// Per-edge pairwise pose P_e and log scale s_e (sigma_e = exp(s_e)).
struct EdgeParams {
  RigidPose pose;
  double log_scale = 0.0;

  double scale() const;
  friend bool operator==(const EdgeParams&, const EdgeParams&) = default;
};

}  // namespace ffseg
