#include "ffseg/scene_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <set>

#include <Eigen/LU>

namespace ffseg {

std::size_t Popcount(const BinaryMask& mask) {
  return static_cast<std::size_t>(
      std::count_if(mask.begin(), mask.end(), [](std::uint8_t v) { return v != 0; }));
}

namespace {

template <typename Pred>
void CheckAll(const std::vector<double>& values, Pred ok, const char* what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!ok(values[i])) {
      throw DataError(std::string(what) + " violated at pixel index " +
                      std::to_string(i) + " (value " +
                      std::to_string(values[i]) + ")");
    }
  }
}

}  // namespace

void Validate(const Pointmap& map) {
  for (std::size_t i = 0; i < map.size(); ++i) {
    if (!map[i].allFinite()) {
      throw DataError("non-finite pointmap entry at pixel index " +
                      std::to_string(i));
    }
  }
}

void Validate(const ConfidenceMap& map) {
  CheckAll(map.values(), [](double v) { return std::isfinite(v) && v >= 0.0; },
           "confidence >= 0");
}

void Validate(const SoftMask& map) {
  CheckAll(map.values(), [](double v) { return v >= 0.0 && v <= 1.0; },
           "soft mask in [0,1]");
}

void Validate(const DepthMap& map) {
  CheckAll(map.values(), [](double v) { return std::isfinite(v) && v > 0.0; },
           "depth > 0");
}

void Validate(const BinaryMask& map) {
  for (std::size_t i = 0; i < map.size(); ++i) {
    if (map[i] > 1) {
      throw DataError("binary mask value " + std::to_string(map[i]) +
                      " at pixel index " + std::to_string(i));
    }
  }
}

Mat3 CameraIntrinsics::Matrix() const {
  Mat3 k;
  k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

Mat3 CameraIntrinsics::InverseMatrix() const {
  Mat3 k;
  k << 1.0 / fx, 0.0, -cx / fx, 0.0, 1.0 / fy, -cy / fy, 0.0, 0.0, 1.0;
  return k;
}

void CameraIntrinsics::Validate() const {
  if (!(fx > 0.0) || !(fy > 0.0) || !std::isfinite(fx) || !std::isfinite(fy) ||
      !std::isfinite(cx) || !std::isfinite(cy)) {
    throw DataError("camera intrinsics need finite fx > 0, fy > 0");
  }
}

RigidPose RigidPose::FromAxisAngle(const Vec3& omega, const Vec3& t) {
  return {ExpSO3(omega), t};
}

RigidPose RigidPose::Inverse() const {
  const Mat3 rt = rotation.transpose();
  return {rt, -rt * translation};
}

RigidPose RigidPose::operator*(const RigidPose& other) const {
  return {rotation * other.rotation, rotation * other.translation + translation};
}

void RigidPose::Validate(double tolerance) const {
  if (!rotation.allFinite() || !translation.allFinite()) {
    throw DataError("rigid pose has non-finite entries");
  }
  const double ortho =
      (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  const double det = rotation.determinant();
  if (ortho > tolerance || std::abs(det - 1.0) > tolerance) {
    throw DataError("rotation is not orthonormal with det +1 (orthogonality error " +
                    std::to_string(ortho) + ", det " + std::to_string(det) + ")");
  }
}

void ViewTransform::Validate() const {
  intrinsics.Validate();
  pose.Validate();
  ffseg::Validate(depth);
}

Vec3 BackProject(double x, double y, double depth,
                 const CameraIntrinsics& intrinsics, const RigidPose& pose) {
  const Vec3 camera((x - intrinsics.cx) / intrinsics.fx * depth,
                    (y - intrinsics.cy) / intrinsics.fy * depth, depth);
  return pose.ApplyInverse(camera);
}

Vec3 PixelToWorld(int x, int y, const ViewTransform& vt) {
  const ImageGrid& grid = vt.grid();
  if (!grid.contains(x, y)) {
    throw std::domain_error("pixel (" + std::to_string(x) + ", " +
                            std::to_string(y) + ") outside " +
                            std::to_string(grid.width) + "x" +
                            std::to_string(grid.height) + " grid");
  }
  const double d = vt.depth(x, y);
  if (!std::isfinite(d)) {
    throw DataError("non-finite depth at pixel (" + std::to_string(x) + ", " +
                    std::to_string(y) + ")");
  }
  return BackProject(x, y, d, vt.intrinsics, vt.pose);
}

PixelProjection WorldToPixel(const Vec3& p, const CameraIntrinsics& intrinsics,
                             const RigidPose& pose) {
  const Vec3 q = pose.Apply(p);
  if (!(q.z() > 1e-12)) {
    throw BehindCameraError("point is behind the camera (z = " +
                            std::to_string(q.z()) + ")");
  }
  return {intrinsics.fx * q.x() / q.z() + intrinsics.cx,
          intrinsics.fy * q.y() / q.z() + intrinsics.cy, q.z()};
}

PixelProjection WorldToPixel(const Vec3& p, const ViewTransform& vt) {
  return WorldToPixel(p, vt.intrinsics, vt.pose);
}

Pointmap WorldPointmap(const ViewTransform& vt) {
  Pointmap out(vt.grid());
  for (int y = 0; y < vt.grid().height; ++y) {
    for (int x = 0; x < vt.grid().width; ++x) {
      out(x, y) = PixelToWorld(x, y, vt);
    }
  }
  return out;
}

bool ViewGraph::IsConnected() const {
  if (n_views <= 0) return false;
  std::vector<std::vector<int>> adjacency(static_cast<std::size_t>(n_views));
  for (const Edge& e : edges) {
    adjacency[static_cast<std::size_t>(e.first)].push_back(e.second);
    adjacency[static_cast<std::size_t>(e.second)].push_back(e.first);
  }
  std::vector<bool> seen(static_cast<std::size_t>(n_views), false);
  std::queue<int> frontier;
  frontier.push(0);
  seen[0] = true;
  int visited = 1;
  while (!frontier.empty()) {
    const int v = frontier.front();
    frontier.pop();
    for (int w : adjacency[static_cast<std::size_t>(v)]) {
      if (!seen[static_cast<std::size_t>(w)]) {
        seen[static_cast<std::size_t>(w)] = true;
        ++visited;
        frontier.push(w);
      }
    }
  }
  return visited == n_views;
}

void ViewGraph::Validate() const {
  if (n_views < 1) throw StructuralError("view graph has no views");
  std::set<std::pair<int, int>> seen;
  for (const Edge& e : edges) {
    if (e.first < 0 || e.second < 0 || e.first >= n_views ||
        e.second >= n_views) {
      throw StructuralError("edge (" + std::to_string(e.first) + ", " +
                            std::to_string(e.second) + ") references a missing view");
    }
    if (e.first == e.second) {
      throw StructuralError("self loop on view " + std::to_string(e.first));
    }
    if (!seen.emplace(e.first, e.second).second) {
      throw StructuralError("duplicate edge (" + std::to_string(e.first) + ", " +
                            std::to_string(e.second) + ")");
    }
  }
  if (!IsConnected()) throw StructuralError("view graph is not connected");
}

ViewGraph BuildGraph(int n_views, const GraphStrategy& strategy) {
  if (n_views < 2) {
    throw std::domain_error("a view graph needs at least 2 views, got " +
                            std::to_string(n_views));
  }
  ViewGraph graph{n_views, {}};
  if (const auto* window = std::get_if<WindowGraph>(&strategy)) {
    if (window->k < 1) throw std::domain_error("window size must be >= 1");
    for (int i = 0; i < n_views; ++i) {
      for (int j = 1; j <= window->k && i + j < n_views; ++j) {
        graph.edges.push_back({i, i + j});
      }
    }
  } else {
    for (int i = 0; i < n_views; ++i) {
      for (int j = i + 1; j < n_views; ++j) graph.edges.push_back({i, j});
    }
  }
  graph.Validate();
  return graph;
}

double EdgeParams::scale() const { return std::exp(log_scale); }

}  // namespace ffseg
