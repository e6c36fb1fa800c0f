#include "markersfm/geometry.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "markersfm/errors.hpp"

namespace markersfm {

namespace {

constexpr double kSmallAngle = 1e-5;
constexpr double kBranchGuard = 1e-6;

}  // namespace

Mat4 Pose::matrix() const
{
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

Pose Pose::from_matrix(const Mat4 &m)
{
  return {m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>()};
}

Pose Pose::from_quaternion(const Eigen::Quaterniond &q, const Vec3 &t)
{
  return {q.normalized().toRotationMatrix(), t};
}

Vec6 Twist::vector() const
{
  Vec6 v;
  v << rho, phi;
  return v;
}

Twist Twist::from_vector(const Vec6 &v)
{
  return {v.head<3>(), v.tail<3>()};
}

Mat3 skew(const Vec3 &v)
{
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

Rotation exp_so3(const Vec3 &phi)
{
  const double theta2 = phi.squaredNorm();
  const double theta = std::sqrt(theta2);
  const Mat3 k = skew(phi);
  double a, b;
  if (theta < kSmallAngle) {
    a = 1.0 - theta2 / 6.0;
    b = 0.5 - theta2 / 24.0;
  } else {
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / theta2;
  }
  return Mat3::Identity() + a * k + b * k * k;
}

Vec3 log_so3(const Rotation &r)
{
  const Vec3 vee(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));  // 2 sin(theta) axis
  const double sin_theta = 0.5 * vee.norm();
  const double cos_theta = 0.5 * (r.trace() - 1.0);
  const double theta = std::atan2(sin_theta, cos_theta);

  if (theta > std::numbers::pi - kBranchGuard)
    throw BranchAmbiguityError("log_so3: rotation angle too close to pi");

  if (theta < kSmallAngle)
    return 0.5 * vee * (1.0 + theta * theta / 6.0);

  if (theta < std::numbers::pi - 1e-2)
    return 0.5 * theta / std::sin(theta) * vee;

  // Near pi sin(theta) loses precision; recover the axis from the symmetric part.
  const Mat3 sym = 0.5 * (r + r.transpose());
  const Mat3 aat = (sym - cos_theta * Mat3::Identity()) / (1.0 - cos_theta);
  int col;
  aat.diagonal().maxCoeff(&col);
  Vec3 axis = aat.col(col) / std::sqrt(aat(col, col));
  if (axis.dot(vee) < 0.0)
    axis = -axis;
  return theta * axis.normalized();
}

Mat3 left_jacobian_so3(const Vec3 &phi)
{
  const double theta2 = phi.squaredNorm();
  const double theta = std::sqrt(theta2);
  const Mat3 k = skew(phi);
  double a, b;
  if (theta < kSmallAngle) {
    a = 0.5 - theta2 / 24.0;
    b = 1.0 / 6.0 - theta2 / 120.0;
  } else {
    a = (1.0 - std::cos(theta)) / theta2;
    b = (theta - std::sin(theta)) / (theta2 * theta);
  }
  return Mat3::Identity() + a * k + b * k * k;
}

Mat3 left_jacobian_so3_inverse(const Vec3 &phi)
{
  const double theta2 = phi.squaredNorm();
  const double theta = std::sqrt(theta2);
  const Mat3 k = skew(phi);
  double b;
  if (theta < kSmallAngle) {
    b = 1.0 / 12.0 + theta2 / 720.0;
  } else {
    const double half = 0.5 * theta;
    b = (1.0 - half * std::cos(half) / std::sin(half)) / theta2;
  }
  return Mat3::Identity() - 0.5 * k + b * k * k;
}

Pose exp_twist(const Twist &xi)
{
  return {exp_so3(xi.phi), left_jacobian_so3(xi.phi) * xi.rho};
}

Twist log_pose(const Pose &t)
{
  const Vec3 phi = log_so3(t.rotation);
  return {left_jacobian_so3_inverse(phi) * t.translation, phi};
}

Pose compose(const Pose &a, const Pose &b)
{
  return {a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

Pose inverse(const Pose &t)
{
  const Rotation rt = t.rotation.transpose();
  Vec3 inv_t = -(rt * t.translation);
  inv_t.array() += 0.0;  // -0 -> +0: inverse(identity) is bit-exact identity
  return {rt, inv_t};
}

Pose perturb_left(const Pose &t, const Twist &dxi)
{
  return compose(exp_twist(dxi), t);
}

double rotation_distance(const Rotation &r1, const Rotation &r2)
{
  const Mat3 d = r1.transpose() * r2;
  const Vec3 vee(d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1));
  return std::atan2(0.5 * vee.norm(), 0.5 * (d.trace() - 1.0));
}

Rotation project_to_rotation(const Mat3 &m)
{
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0)
    d(2, 2) = -1.0;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

Pose align_umeyama(std::span<const Vec3> src, std::span<const Vec3> dst)
{
  if (src.size() != dst.size())
    throw DegenerateAlignmentError("align_umeyama: correspondence count mismatch");
  if (src.size() < 3)
    throw DegenerateAlignmentError("align_umeyama: need at least 3 correspondences");

  const double n = static_cast<double>(src.size());
  Vec3 mu_src = Vec3::Zero(), mu_dst = Vec3::Zero();
  for (size_t i = 0; i < src.size(); ++i) {
    mu_src += src[i];
    mu_dst += dst[i];
  }
  mu_src /= n;
  mu_dst /= n;

  Mat3 cross = Mat3::Zero();
  Mat3 scatter = Mat3::Zero();
  for (size_t i = 0; i < src.size(); ++i) {
    const Vec3 a = src[i] - mu_src;
    cross += (dst[i] - mu_dst) * a.transpose();
    scatter += a * a.transpose();
  }

  // Rank check on the source spread: collinear points leave a free rotation.
  Eigen::SelfAdjointEigenSolver<Mat3> spread(scatter);
  const Vec3 ev = spread.eigenvalues();  // ascending
  if (ev(2) <= 0.0 || ev(1) <= 1e-12 * ev(2))
    throw DegenerateAlignmentError("align_umeyama: points are collinear or coincident");

  Eigen::JacobiSVD<Mat3> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 s = Mat3::Identity();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0)
    s(2, 2) = -1.0;
  const Rotation r = svd.matrixU() * s * svd.matrixV().transpose();
  return {r, mu_dst - r * mu_src};
}

}  // namespace markersfm
