#include "markersfm/sensor_model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "markersfm/errors.hpp"

namespace markersfm {

bool Intrinsics::valid() const
{
  return fx > 0.0 && fy > 0.0 && cx > 0.0 && cx < width && cy > 0.0 && cy < height;
}

Intrinsics Intrinsics::from_hfov(int width, int height, double hfov_rad)
{
  const double f = 0.5 * width / std::tan(0.5 * hfov_rad);
  return {f, f, 0.5 * width, 0.5 * height, width, height};
}

Vec2 project(const Intrinsics &k, const Vec3 &x_cam)
{
  if (!(x_cam.z() > kMinDepth))
    throw BehindCameraError("project: point at depth " + std::to_string(x_cam.z()));
  const double inv_z = 1.0 / x_cam.z();
  return {k.fx * x_cam.x() * inv_z + k.cx, k.fy * x_cam.y() * inv_z + k.cy};
}

Mat23 projection_jacobian(const Intrinsics &k, const Vec3 &x_cam)
{
  if (!(x_cam.z() > kMinDepth))
    throw BehindCameraError("projection_jacobian: point at depth " + std::to_string(x_cam.z()));
  const double inv_z = 1.0 / x_cam.z();
  const double inv_z2 = inv_z * inv_z;
  Mat23 j;
  j << k.fx * inv_z, 0.0, -k.fx * x_cam.x() * inv_z2,
       0.0, k.fy * inv_z, -k.fy * x_cam.y() * inv_z2;
  return j;
}

Vec2 normalize_pixel(const Intrinsics &k, const Vec2 &px)
{
  return {(px.x() - k.cx) / k.fx, (px.y() - k.cy) / k.fy};
}

bool in_frustum(const Intrinsics &k, const Vec3 &x_cam, double margin_px)
{
  if (!(x_cam.z() > kMinDepth))
    return false;
  const Vec2 px = project(k, x_cam);
  return px.x() >= margin_px && px.x() <= k.width - margin_px &&
         px.y() >= margin_px && px.y() <= k.height - margin_px;
}

Pose camera_from_group(const CameraRig &rig, size_t k)
{
  if (k >= rig.cameras.size())
    throw std::out_of_range("camera_from_group: camera index " + std::to_string(k) +
                            " >= " + std::to_string(rig.cameras.size()));
  return inverse(rig.cameras[k].group_from_camera);
}

}  // namespace markersfm
