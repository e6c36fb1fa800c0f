#pragma once

#include <compare>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "markersfm/geometry.hpp"
#include "markersfm/sensor_model.hpp"

namespace markersfm {

using Mat26 = Eigen::Matrix<double, 2, 6>;

enum class VariableKind { MarkerPose, GroupPose };

struct VariableId
{
  VariableKind kind = VariableKind::MarkerPose;
  int index = 0;

  static VariableId marker(int id) { return {VariableKind::MarkerPose, id}; }
  static VariableId group(int station) { return {VariableKind::GroupPose, station}; }

  auto operator<=>(const VariableId &) const = default;
  std::string str() const;
};

/// A pose variable. Estimates are stored as frame_from_world (group_from_world
/// or marker_from_world) and updated by left perturbation exp(dxi) * T, which
/// for markers is a perturbation of the inverted pose in the projection chain.
struct Variable
{
  Pose estimate;
  bool fixed = false;
};

/// One (station, camera, marker, corner) reprojection term:
///
///   chi = measurement - project(K, camera_from_group * group_from_world
///                                    * inverse(marker_from_world) * marker_corner)
struct CornerFactor
{
  VariableId group_var;
  VariableId marker_var;
  int camera_index = 0;
  int corner_index = 0;
  Vec2 measurement = Vec2::Zero();
  double weight = 1.0;  ///< information matrix is weight * I2
  Vec3 marker_corner = Vec3::Zero();
  Intrinsics intrinsics;
  Pose camera_from_group;
};

class FactorGraph
{
public:
  explicit FactorGraph(double robust_delta = 2.0) : robust_delta_(robust_delta) {}

  /// Throws std::invalid_argument if the id already exists.
  void add_variable(VariableId id, const Pose &estimate, bool fixed = false);
  bool has_variable(VariableId id) const { return variables_.count(id) != 0; }
  const Variable &variable(VariableId id) const;
  const Pose &estimate(VariableId id) const { return variable(id).estimate; }
  void set_estimate(VariableId id, const Pose &estimate);
  void set_fixed(VariableId id, bool fixed);

  /// Throws std::invalid_argument for unknown variables, weight <= 0 or a
  /// corner index outside 0..3.
  void add_factor(const CornerFactor &factor);

  const std::map<VariableId, Variable> &variables() const { return variables_; }
  const std::vector<CornerFactor> &factors() const { return factors_; }

  double robust_delta() const { return robust_delta_; }
  void set_robust_delta(double delta) { robust_delta_ = delta; }

private:
  friend class GraphSolver;

  std::map<VariableId, Variable> variables_;
  std::vector<CornerFactor> factors_;
  double robust_delta_;
};

/// Throws BehindCameraError when the corner is not in front of the camera.
Vec2 residual(const CornerFactor &f, const Pose &group_from_world, const Pose &marker_from_world);

/// d chi / d dxi for marker_from_world <- exp(dxi) * marker_from_world, columns [rho; phi].
Mat26 jacobian_marker(const CornerFactor &f, const Pose &group_from_world,
                      const Pose &marker_from_world);

/// d chi / d dxi for group_from_world <- exp(dxi) * group_from_world, columns [rho; phi].
Mat26 jacobian_group(const CornerFactor &f, const Pose &group_from_world,
                     const Pose &marker_from_world);

/// IRLS weight of the Huber kernel: 1 inside delta, delta / |r| outside.
double robust_weight(double residual_norm, double delta);

/// Huber penalty of a squared (whitened) residual norm s:
/// s for s <= delta^2, 2 delta sqrt(s) - delta^2 beyond.
double huber(double squared_norm, double delta);

/// Sum over factors of huber(w * |chi|^2, delta). Factors behind the camera
/// contribute nothing.
double total_cost(const FactorGraph &graph);

struct SolveSettings
{
  int max_iters = 100;
  double rel_cost_tol = 1e-9;
  double step_tol = 1e-10;
  double initial_damping = 1e-4;
};

enum class Termination { CostConverged, StepConverged, ZeroCost, MaxIterations, DampingExhausted };

std::string to_string(Termination t);

struct SolveReport
{
  int iterations = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  bool converged = false;
  Termination termination = Termination::MaxIterations;
  long dropped_factors = 0;      ///< behind-camera evaluations skipped, summed over iterations
  long marker_jacobians = 0;     ///< evaluations of jacobian_marker
  long group_jacobians = 0;      ///< evaluations of jacobian_group
};

/// Levenberg-Marquardt with Marquardt (diagonal) damping over all free
/// variables; fixed variables are never written. Throws RankDeficiencyError
/// when the undamped normal equations are singular, naming the variables on
/// the null pivots, and std::invalid_argument when nothing is free.
SolveReport solve(FactorGraph &graph, const SolveSettings &settings = {});

}  // namespace markersfm
