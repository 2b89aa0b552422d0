#include "ffseg/registration.hpp"

#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>
#include <Eigen/SVD>

#include "ffseg/errors.hpp"

namespace ffseg {

Similarity FitSimilarity(std::span<const Vec3> src, std::span<const Vec3> dst, bool with_scale) {
  if (src.size() != dst.size()) throw StructuralError("similarity fit needs paired point sets");
  const Eigen::Index n = static_cast<Eigen::Index>(src.size());
  if (n < 3) {
    throw InsufficientDataError("similarity fit needs at least 3 points, got " + std::to_string(n));
  }
  Eigen::Matrix3Xd a(3, n);
  Eigen::Matrix3Xd b(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    a.col(i) = src[static_cast<std::size_t>(i)];
    b.col(i) = dst[static_cast<std::size_t>(i)];
  }
  const Eigen::Matrix3Xd centered = a.colwise() - a.rowwise().mean();
  const Eigen::JacobiSVD<Eigen::Matrix3Xd> svd(centered);
  const auto sv = svd.singularValues();
  if (!(sv(1) > 1e-12 * std::max(sv(0), 1e-300))) {
    throw InsufficientDataError("similarity fit points are degenerate (collinear or coincident)");
  }
  const Eigen::Matrix4d t = Eigen::umeyama(a, b, with_scale);
  Similarity out;
  const Mat3 sr = t.topLeftCorner<3, 3>();
  out.scale = with_scale ? std::cbrt(sr.determinant()) : 1.0;
  out.rotation = sr / out.scale;
  out.translation = t.topRightCorner<3, 1>();
  return out;
}

RigidPose SolvePnP(std::span<const Vec3> world, std::span<const Eigen::Vector2d> rays) {
  if (world.size() != rays.size()) throw StructuralError("PnP needs paired points and rays");
  const std::size_t n = world.size();
  if (n < 6) throw InsufficientDataError("PnP needs at least 6 correspondences");

  // Normalise the world points for conditioning.
  Vec3 mean = Vec3::Zero();
  for (const Vec3& p : world) mean += p;
  mean /= static_cast<double>(n);
  double spread = 0.0;
  for (const Vec3& p : world) spread += (p - mean).norm();
  spread = spread / static_cast<double>(n);
  if (!(spread > 1e-12)) throw InsufficientDataError("PnP points are coincident");
  const double norm_scale = std::sqrt(3.0) / spread;

  Eigen::Matrix<double, 12, 12> ata = Eigen::Matrix<double, 12, 12>::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 wn = (world[i] - mean) * norm_scale;
    const Eigen::Vector4d wh = wn.homogeneous();
    Eigen::Matrix<double, 2, 12> rows = Eigen::Matrix<double, 2, 12>::Zero();
    rows.block<1, 4>(0, 0) = -wh.transpose();
    rows.block<1, 4>(0, 8) = rays[i].x() * wh.transpose();
    rows.block<1, 4>(1, 4) = -wh.transpose();
    rows.block<1, 4>(1, 8) = rays[i].y() * wh.transpose();
    ata.noalias() += rows.transpose() * rows;
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 12, 12>> eig(ata);
  const Eigen::Matrix<double, 12, 1> sol = eig.eigenvectors().col(0);
  Eigen::Matrix<double, 3, 4> proj;
  for (int r = 0; r < 3; ++r) proj.row(r) = sol.segment<4>(4 * r).transpose();
  if (proj.leftCols<3>().determinant() < 0.0) proj = -proj;
  const Eigen::JacobiSVD<Mat3> svd(proj.leftCols<3>(), Eigen::ComputeFullU | Eigen::ComputeFullV);
  const double lambda = svd.singularValues().mean();
  RigidPose pose;
  pose.rotation = ProjectToSO3(svd.matrixU() * svd.matrixV().transpose());
  // Undo the normalisation: camera = R (w - mean) * s + t_n, up to scale s.
  const Vec3 t_norm = proj.col(3) / lambda;
  pose.translation = t_norm / norm_scale - pose.rotation * mean;

  // Gauss-Newton on the normalised reprojection error, left-perturbing R.
  for (int iter = 0; iter < 10; ++iter) {
    Eigen::Matrix<double, 6, 6> h = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();
    for (std::size_t i = 0; i < n; ++i) {
      const Vec3 rw = pose.rotation * world[i];
      const Vec3 q = rw + pose.translation;
      if (!(q.z() > 1e-9)) continue;
      const double iz = 1.0 / q.z();
      const Eigen::Vector2d r(q.x() * iz - rays[i].x(), q.y() * iz - rays[i].y());
      Eigen::Matrix<double, 2, 3> dpi;
      dpi << iz, 0.0, -q.x() * iz * iz, 0.0, iz, -q.y() * iz * iz;
      Eigen::Matrix<double, 3, 6> dq;
      dq.leftCols<3>() = -Skew(rw);
      dq.rightCols<3>() = Mat3::Identity();
      const Eigen::Matrix<double, 2, 6> j = dpi * dq;
      h.noalias() += j.transpose() * j;
      g.noalias() += j.transpose() * r;
    }
    const Eigen::Matrix<double, 6, 1> delta = h.ldlt().solve(-g);
    if (!delta.allFinite()) break;
    const Mat3 dr = ExpSO3(delta.head<3>());
    pose.rotation = dr * pose.rotation;
    pose.translation += delta.tail<3>();
    if (delta.norm() < 1e-12) break;
  }
  pose.rotation = ProjectToSO3(pose.rotation);
  return pose;
}

}  // namespace ffseg
