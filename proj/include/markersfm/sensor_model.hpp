#pragma once

#include <vector>

#include <Eigen/Core>

#include "markersfm/geometry.hpp"

namespace markersfm {

using Mat23 = Eigen::Matrix<double, 2, 3>;

/// Points closer than this to the camera plane are treated as behind it.
inline constexpr double kMinDepth = 1e-4;

struct Intrinsics
{
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  /// fx, fy > 0 and the principal point inside the image.
  bool valid() const;

  /// Square pixels with the principal point centred and a horizontal field of
  /// view of `hfov_rad`.
  static Intrinsics from_hfov(int width, int height, double hfov_rad);
};

/// Ideal pinhole projection. Throws BehindCameraError when z <= kMinDepth.
Vec2 project(const Intrinsics &k, const Vec3 &x_cam);

/// d project / d x_cam (2x3). The corner residual is measurement minus
/// projection, so its derivative carries the opposite sign.
Mat23 projection_jacobian(const Intrinsics &k, const Vec3 &x_cam);

/// Inverse projection of a pixel to the normalized image plane (z = 1).
Vec2 normalize_pixel(const Intrinsics &k, const Vec2 &px);

bool in_frustum(const Intrinsics &k, const Vec3 &x_cam, double margin_px);

struct RigCamera
{
  Intrinsics intrinsics;
  Pose group_from_camera;  ///< extrinsic: camera coordinates into the group frame
};

/// Rigidly mounted cameras sharing one pose variable per station.
struct CameraRig
{
  std::vector<RigCamera> cameras;

  size_t size() const { return cameras.size(); }
};

/// Inverse of the stored extrinsic. Throws std::out_of_range for a bad index.
Pose camera_from_group(const CameraRig &rig, size_t k);

}  // namespace markersfm
