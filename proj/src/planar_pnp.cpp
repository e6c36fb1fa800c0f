#include "markersfm/planar_pnp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/SVD>

#include "markersfm/errors.hpp"

namespace markersfm {

namespace {

using Mat86 = Eigen::Matrix<double, 8, 6>;
using Vec8 = Eigen::Matrix<double, 8, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

constexpr double kMinQuadArea = 1.0;  // px^2

double cross2(const Vec2 &a, const Vec2 &b) { return a.x() * b.y() - a.y() * b.x(); }

void check_quad(const Corners2d &c)
{
  if (std::abs(quad_signed_area(c)) < kMinQuadArea)
    throw DegenerateQuadError("quad area below 1 px^2");
  int positive = 0, negative = 0;
  for (size_t i = 0; i < 4; ++i) {
    const double z = cross2(c[(i + 1) % 4] - c[i], c[(i + 2) % 4] - c[(i + 1) % 4]);
    positive += z > 0.0;
    negative += z < 0.0;
  }
  if (positive != 4 && negative != 4)
    throw DegenerateQuadError("quad is self-intersecting or not convex");
}

/// Similarity that moves the centroid to the origin with mean distance sqrt(2).
Mat3 hartley_normalizer(const std::array<Vec2, 4> &pts)
{
  Vec2 mean = Vec2::Zero();
  for (const auto &p : pts)
    mean += p;
  mean /= 4.0;
  double dist = 0.0;
  for (const auto &p : pts)
    dist += (p - mean).norm();
  dist /= 4.0;
  const double s = std::sqrt(2.0) / dist;
  Mat3 t;
  t << s, 0.0, -s * mean.x(),
       0.0, s, -s * mean.y(),
       0.0, 0.0, 1.0;
  return t;
}

Vec2 apply_h(const Mat3 &h, const Vec2 &p)
{
  const Vec3 q = h * p.homogeneous();
  return q.hnormalized();
}

/// Two rotations consistent with the homography's first-order behaviour at the
/// template origin: J = d(normalized image)/d(plane xy), v = image of the origin.
std::array<Rotation, 2> ippe_rotations(const Eigen::Matrix2d &jac, const Vec2 &v)
{
  const Vec3 ray = Vec3(v.x(), v.y(), 1.0).normalized();
  const Rotation rv = Eigen::Quaterniond::FromTwoVectors(Vec3::UnitZ(), ray).toRotationMatrix();

  // [I | -v] * rv has a zero third column; its first two columns form b.
  Eigen::Matrix<double, 2, 3> proj;
  proj << 1.0, 0.0, -v.x(), 0.0, 1.0, -v.y();
  const Eigen::Matrix2d b = (proj * rv).leftCols<2>();
  const Eigen::Matrix2d a = b.inverse() * jac;

  // a = (1/depth) * top-left 2x2 block of a rotation; its largest singular value is 1/depth.
  Eigen::JacobiSVD<Eigen::Matrix2d> svd(a);
  const double gamma = svd.singularValues()(0);
  if (!(gamma > std::numeric_limits<float>::epsilon()))
    throw DegenerateQuadError("homography decomposition: vanishing scale");
  const Eigen::Matrix2d r22 = a / gamma;

  const double b0 = std::sqrt(std::max(0.0, 1.0 - r22.col(0).squaredNorm()));
  double b1 = std::sqrt(std::max(0.0, 1.0 - r22.col(1).squaredNorm()));
  if (r22.col(0).dot(r22.col(1)) > 0.0)
    b1 = -b1;  // keep the completed columns orthogonal

  std::array<Rotation, 2> out;
  for (int sign = 0; sign < 2; ++sign) {
    const double s = sign == 0 ? 1.0 : -1.0;
    const Vec3 c0(r22(0, 0), r22(1, 0), s * b0);
    const Vec3 c1(r22(0, 1), r22(1, 1), s * b1);
    Mat3 local;
    local.col(0) = c0;
    local.col(1) = c1;
    local.col(2) = c0.cross(c1);
    out[sign] = project_to_rotation(rv * local);
  }
  return out;
}

/// Linear least-squares translation given the rotation, from
/// (R P + t) x u = 0 written per corner.
Vec3 translation_for(const Rotation &r, const std::array<Vec2, 4> &normalized,
                     const MarkerTemplate &tmpl)
{
  Eigen::Matrix<double, 8, 3> a;
  Vec8 rhs;
  for (int i = 0; i < 4; ++i) {
    const Vec3 rp = r * tmpl.corners[i];
    const Vec2 &u = normalized[i];
    a.row(2 * i) << 1.0, 0.0, -u.x();
    a.row(2 * i + 1) << 0.0, 1.0, -u.y();
    rhs(2 * i) = u.x() * rp.z() - rp.x();
    rhs(2 * i + 1) = u.y() * rp.z() - rp.y();
  }
  return (a.transpose() * a).ldlt().solve(a.transpose() * rhs);
}

double sum_sq_error(const Pose &pose, const Corners2d &px, const MarkerTemplate &tmpl,
                    const Intrinsics &k)
{
  double sum = 0.0;
  for (int i = 0; i < 4; ++i) {
    const Vec3 xc = pose(tmpl.corners[i]);
    if (!(xc.z() > kMinDepth))
      return std::numeric_limits<double>::infinity();
    sum += (px[i] - project(k, xc)).squaredNorm();
  }
  return sum;
}

}  // namespace

double reprojection_rms(const Pose &camera_from_marker, const Corners2d &corners_px,
                        const MarkerTemplate &tmpl, const Intrinsics &k)
{
  return std::sqrt(sum_sq_error(camera_from_marker, corners_px, tmpl, k) / 4.0);
}

Mat3 homography_from_corners(const Corners2d &corners_px, const MarkerTemplate &tmpl,
                             const Intrinsics &k)
{
  check_quad(corners_px);

  std::array<Vec2, 4> src, dst;
  for (int i = 0; i < 4; ++i) {
    src[i] = tmpl.corners[i].head<2>();
    dst[i] = normalize_pixel(k, corners_px[i]);
  }
  const Mat3 ts = hartley_normalizer(src);
  const Mat3 td = hartley_normalizer(dst);

  Eigen::Matrix<double, 8, 9> a;
  for (int i = 0; i < 4; ++i) {
    const Vec2 p = apply_h(ts, src[i]);
    const Vec2 q = apply_h(td, dst[i]);
    a.row(2 * i) << -p.x(), -p.y(), -1.0, 0.0, 0.0, 0.0, q.x() * p.x(), q.x() * p.y(), q.x();
    a.row(2 * i + 1) << 0.0, 0.0, 0.0, -p.x(), -p.y(), -1.0, q.y() * p.x(), q.y() * p.y(), q.y();
  }
  Eigen::JacobiSVD<Eigen::Matrix<double, 8, 9>> svd(a, Eigen::ComputeFullV);
  const Eigen::Matrix<double, 9, 1> h = svd.matrixV().col(8);
  Mat3 hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);

  Mat3 hm = td.inverse() * hn * ts;
  if (std::abs(hm(2, 2)) < 1e-12)
    throw DegenerateQuadError("homography is singular");
  hm /= hm(2, 2);
  return hm;
}

PnpSolution refine_pose(const Pose &initial, const Corners2d &corners_px,
                        const MarkerTemplate &tmpl, const Intrinsics &k,
                        const RefineSettings &settings)
{
  Pose pose = initial;
  double cost = sum_sq_error(pose, corners_px, tmpl, k);
  if (!std::isfinite(cost))
    throw DivergenceError("refine_pose: initial pose puts a corner behind the camera");

  double lambda = 1e-4;
  int rejected = 0;
  for (int iter = 0; iter < settings.max_iters; ++iter) {
    Mat86 jac;
    Vec8 r;
    for (int i = 0; i < 4; ++i) {
      const Vec3 xc = pose(tmpl.corners[i]);
      r.segment<2>(2 * i) = corners_px[i] - project(k, xc);
      Eigen::Matrix<double, 3, 6> dx;
      dx << Mat3::Identity(), -skew(xc);
      jac.middleRows<2>(2 * i) = -projection_jacobian(k, xc) * dx;
    }
    const Mat6 h = jac.transpose() * jac;
    const Vec6 g = jac.transpose() * r;
    Mat6 damped = h;
    damped.diagonal() += lambda * h.diagonal();
    const Vec6 step = damped.ldlt().solve(-g);
    if (!step.allFinite() || step.norm() < settings.step_tol)
      break;

    const Pose candidate = perturb_left(pose, Twist::from_vector(step));
    const double new_cost = sum_sq_error(candidate, corners_px, tmpl, k);
    if (new_cost <= cost) {
      pose = candidate;
      cost = new_cost;
      lambda = std::max(lambda * 0.1, 1e-12);
      rejected = 0;
    } else {
      // A rejection at roundoff level is convergence, not divergence.
      if (new_cost - cost <= 1e-10 * cost + 1e-24)
        break;
      lambda *= 10.0;
      if (++rejected >= 5)
        throw DivergenceError("refine_pose: error grew for 5 consecutive iterations");
    }
  }
  return {pose, std::sqrt(cost / 4.0)};
}

PnpResult solve_planar_pnp(const Corners2d &corners_px, const MarkerTemplate &tmpl,
                           const Intrinsics &k)
{
  const Mat3 h = homography_from_corners(corners_px, tmpl, k);

  // Template centroid is the origin; differentiate the homography there.
  const Vec2 v(h(0, 2), h(1, 2));
  Eigen::Matrix2d jac;
  jac << h(0, 0) - h(2, 0) * h(0, 2), h(0, 1) - h(2, 1) * h(0, 2),
         h(1, 0) - h(2, 0) * h(1, 2), h(1, 1) - h(2, 1) * h(1, 2);

  std::array<Vec2, 4> normalized;
  for (int i = 0; i < 4; ++i)
    normalized[i] = normalize_pixel(k, corners_px[i]);

  std::vector<PnpSolution> candidates;
  for (const Rotation &r : ippe_rotations(jac, v)) {
    const Pose seed{r, translation_for(r, normalized, tmpl)};
    if (!(seed.translation.z() > kMinDepth))
      continue;
    std::optional<PnpSolution> sol;
    try {
      sol = refine_pose(seed, corners_px, tmpl, k);
    } catch (const DivergenceError &) {
      const double rms = reprojection_rms(seed, corners_px, tmpl, k);
      if (std::isfinite(rms))
        sol = PnpSolution{seed, rms};
    }
    if (sol && sol->camera_from_marker.translation.z() > kMinDepth)
      candidates.push_back(*sol);
  }
  if (candidates.empty())
    throw NoPositiveDepthError("solve_planar_pnp: no candidate with positive depth");
  if (candidates.size() == 1)
    candidates.push_back(candidates.front());

  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const PnpSolution &a, const PnpSolution &b) {
                     return a.reproj_error < b.reproj_error;
                   });
  PnpResult out{candidates[0], candidates[1], 0.0};
  out.ambiguity_angle = rotation_distance(out.best.camera_from_marker.rotation,
                                          out.alternate.camera_from_marker.rotation);
  return out;
}

}  // namespace markersfm
