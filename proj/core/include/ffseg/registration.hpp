#pragma once

#include <span>
#include <vector>

#include "ffseg/scene_model.hpp"

namespace ffseg {

/// x -> scale * R x + t.
struct Similarity {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 Apply(const Vec3& p) const { return scale * (rotation * p) + translation; }
};

/// Closed-form least-squares similarity (or rigid, when with_scale is false)
/// mapping src onto dst. Throws InsufficientDataError for fewer than 3
/// points or a degenerate (collinear) configuration.
Similarity FitSimilarity(std::span<const Vec3> src, std::span<const Vec3> dst,
                         bool with_scale = true);

/// Camera pose (world -> camera) from world points and their normalised
/// image rays ((x - cx) / fx, (y - cy) / fy): linear DLT followed by
/// Gauss-Newton refinement of the reprojection error.
RigidPose SolvePnP(std::span<const Vec3> world, std::span<const Eigen::Vector2d> rays);

}  // namespace ffseg
