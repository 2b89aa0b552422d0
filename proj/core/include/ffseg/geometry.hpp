#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace ffseg {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Cross-product (hat) matrix of v.
Mat3 Skew(const Vec3& v);

/// Rotation matrix for an axis-angle vector (Rodrigues), stable near zero.
Mat3 ExpSO3(const Vec3& omega);

/// Axis-angle vector of a rotation matrix; inverse of ExpSO3 for angles < pi.
Vec3 LogSO3(const Mat3& rotation);

/// Right Jacobian of SO(3): ExpSO3(w + d) ~= ExpSO3(w) * ExpSO3(Jr(w) d).
Mat3 RightJacobianSO3(const Vec3& omega);

/// Nearest rotation (Frobenius) to an arbitrary 3x3 matrix.
Mat3 ProjectToSO3(const Mat3& m);

}  // namespace ffseg
