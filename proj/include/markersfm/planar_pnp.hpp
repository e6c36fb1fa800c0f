#pragma once

#include "markersfm/geometry.hpp"
#include "markersfm/scene_data.hpp"
#include "markersfm/sensor_model.hpp"

namespace markersfm {

struct PnpSolution
{
  Pose camera_from_marker;
  double reproj_error = 0.0;  ///< RMS over the 4 corners, pixels
};

/// Both local minima of a planar square pose problem.
struct PnpResult
{
  PnpSolution best;
  PnpSolution alternate;
  double ambiguity_angle = 0.0;  ///< rotation_distance(best, alternate), radians
};

/// Plane-to-image homography: template (x, y) -> normalized image
/// coordinates, with H(2,2) = 1. Hartley-normalized DLT on the 4 points.
/// Throws DegenerateQuadError for area < 1 px^2 or a self-intersecting quad.
Mat3 homography_from_corners(const Corners2d &corners_px, const MarkerTemplate &tmpl,
                             const Intrinsics &k);

/// Two candidate poses from the first-order homography decomposition at the
/// template centre, each polished with refine_pose, sorted by error.
PnpResult solve_planar_pnp(const Corners2d &corners_px, const MarkerTemplate &tmpl,
                           const Intrinsics &k);

struct RefineSettings
{
  int max_iters = 50;
  double step_tol = 1e-10;
};

/// Damped Gauss-Newton on the 8 corner residuals, parametrized by left
/// perturbation of camera_from_marker. Error is non-increasing across
/// iterations. Throws DivergenceError after 5 consecutive rejected steps
/// that fail to reach the step tolerance, or when no corner stays in front.
PnpSolution refine_pose(const Pose &initial, const Corners2d &corners_px,
                        const MarkerTemplate &tmpl, const Intrinsics &k,
                        const RefineSettings &settings = {});

/// RMS pixel error of a pose; infinity when a corner is behind the camera.
double reprojection_rms(const Pose &camera_from_marker, const Corners2d &corners_px,
                        const MarkerTemplate &tmpl, const Intrinsics &k);

}  // namespace markersfm
