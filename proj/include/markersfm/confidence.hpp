#pragma once

#include <optional>
#include <string>

#include <Eigen/Core>

#include "markersfm/planar_pnp.hpp"

namespace markersfm {

/// Hyper-parameters of the per-observation weight
///
///   w = exp(-l1 (d/d_max)^2 - l2 (theta/theta_max)^2 + sign * l3 * exp(-a^2 / (2 eps^2)))
///
/// where d is the camera-to-marker-centre distance, theta the incidence angle
/// and a the angle between the two planar pose candidates. With
/// ambiguity_sign = -1 a near-duplicate candidate pair (ambiguous pose) lowers
/// the weight; +1 reproduces the formula with the opposite effect.
struct WeightParams
{
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double lambda3 = 0.0;
  double epsilon = 0.1;          ///< radians
  double d_max = 15.0;           ///< meters
  double theta_max = 1.5707963267948966;  ///< radians (90 deg)
  int ambiguity_sign = -1;

  bool valid() const;

  /// Presets: "L" (0,0,0), "L_d" (1,0,0), "L_dtheta" (1,5,0), "L_all" (1,5,0.1).
  static std::optional<WeightParams> preset(const std::string &name);
};

struct ObservationStats
{
  double distance = 0.0;         ///< meters
  double incidence = 0.0;        ///< radians, [0, pi/2]
  double ambiguity_angle = 0.0;  ///< radians, [0, pi]
};

/// Distance to the marker centre, angle between the marker normal and the
/// viewing ray (folded into [0, pi/2]), and the candidate separation.
ObservationStats observation_stats(const PnpResult &pnp, const MarkerTemplate &tmpl);

double weight(const ObservationStats &stats, const WeightParams &p);

/// w * I2. Throws std::invalid_argument for w <= 0.
Eigen::Matrix2d information_matrix(double w);

}  // namespace markersfm
