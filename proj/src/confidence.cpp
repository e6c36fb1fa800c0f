#include "markersfm/confidence.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace markersfm {

bool WeightParams::valid() const
{
  return d_max > 0.0 && theta_max > 0.0 && epsilon > 0.0 &&
         (ambiguity_sign == 1 || ambiguity_sign == -1);
}

std::optional<WeightParams> WeightParams::preset(const std::string &name)
{
  WeightParams p;
  if (name == "L")
    return p;
  if (name == "L_d") {
    p.lambda1 = 1.0;
    return p;
  }
  if (name == "L_dtheta") {
    p.lambda1 = 1.0;
    p.lambda2 = 5.0;
    return p;
  }
  if (name == "L_all") {
    p.lambda1 = 1.0;
    p.lambda2 = 5.0;
    p.lambda3 = 0.1;
    return p;
  }
  return std::nullopt;
}

ObservationStats observation_stats(const PnpResult &pnp, const MarkerTemplate &tmpl)
{
  Vec3 centroid = Vec3::Zero();
  for (const auto &c : tmpl.corners)
    centroid += c;
  centroid /= 4.0;

  const Pose &pose = pnp.best.camera_from_marker;
  const Vec3 center_cam = pose(centroid);
  const Vec3 normal_cam = pose.rotation.col(2);

  ObservationStats s;
  s.distance = center_cam.norm();
  if (s.distance > 0.0) {
    const double c = std::clamp(std::abs(normal_cam.dot(center_cam / s.distance)), 0.0, 1.0);
    s.incidence = std::acos(c);
  }
  s.ambiguity_angle = pnp.ambiguity_angle;
  return s;
}

double weight(const ObservationStats &stats, const WeightParams &p)
{
  const double dn = stats.distance / p.d_max;
  const double tn = stats.incidence / p.theta_max;
  const double a = stats.ambiguity_angle;
  const double similarity = std::exp(-(a * a) / (2.0 * p.epsilon * p.epsilon));
  return std::exp(-p.lambda1 * dn * dn - p.lambda2 * tn * tn +
                  p.ambiguity_sign * p.lambda3 * similarity);
}

Eigen::Matrix2d information_matrix(double w)
{
  if (!(w > 0.0))
    throw std::invalid_argument("information_matrix: weight must be positive");
  return w * Eigen::Matrix2d::Identity();
}

}  // namespace markersfm
