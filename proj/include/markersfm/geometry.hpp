#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace markersfm {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// Orthonormal 3x3 matrix with det = +1. Kept as a plain Eigen matrix; the
/// invariant is maintained by every producer in this module.
using Rotation = Mat3;

/**
 * Rigid transform with target-from-source semantics:
 *
 *   X_target = rotation * X_source + translation
 *
 * Names in the rest of the code spell the direction out, e.g.
 * `world_from_marker` maps marker coordinates into the world frame.
 */
struct Pose
{
  Rotation rotation = Rotation::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return {}; }

  Vec3 operator()(const Vec3 &x) const { return rotation * x + translation; }

  Mat4 matrix() const;
  static Pose from_matrix(const Mat4 &m);

  /// Quaternion view; used at TUM/JSON boundaries only.
  Eigen::Quaterniond quaternion() const { return Eigen::Quaterniond(rotation); }
  static Pose from_quaternion(const Eigen::Quaterniond &q, const Vec3 &t);
};

/// Tangent vector ordered [rho; phi]: translation part first, rotation second.
struct Twist
{
  Vec3 rho = Vec3::Zero();
  Vec3 phi = Vec3::Zero();

  Vec6 vector() const;
  static Twist from_vector(const Vec6 &v);
};

Mat3 skew(const Vec3 &v);

Rotation exp_so3(const Vec3 &phi);
/// Principal-branch rotation vector. Throws BranchAmbiguityError when the
/// angle is within 1e-6 of pi.
Vec3 log_so3(const Rotation &r);

/// Left Jacobian of SO(3); maps rho to the translation of exp_twist.
Mat3 left_jacobian_so3(const Vec3 &phi);
Mat3 left_jacobian_so3_inverse(const Vec3 &phi);

Pose exp_twist(const Twist &xi);
Twist log_pose(const Pose &t);

/// (a o b)(x) = a(b(x))
Pose compose(const Pose &a, const Pose &b);
Pose inverse(const Pose &t);

inline Pose operator*(const Pose &a, const Pose &b) { return compose(a, b); }

/// exp(dxi^) * T. The update rule for every pose variable in the optimizer.
Pose perturb_left(const Pose &t, const Twist &dxi);

/// Geodesic angle of r1^T r2, in [0, pi].
double rotation_distance(const Rotation &r1, const Rotation &r2);

/// Re-orthonormalize a nearly-orthonormal matrix (closest rotation in
/// Frobenius norm).
Rotation project_to_rotation(const Mat3 &m);

/// Rigid (no scale) least-squares alignment: returns T minimizing
/// sum |dst_i - T(src_i)|^2. Requires >= 3 non-collinear points; throws
/// DegenerateAlignmentError otherwise.
Pose align_umeyama(std::span<const Vec3> src, std::span<const Vec3> dst);

}  // namespace markersfm
