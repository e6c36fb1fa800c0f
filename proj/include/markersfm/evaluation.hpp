#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "markersfm/geometry.hpp"
#include "markersfm/scene_data.hpp"

namespace markersfm {

struct ItemError
{
  double key = 0.0;          ///< timestamp or marker id
  double rotation_deg = 0.0;
  double translation_m = 0.0;
};

/// Absolute error after rigid alignment of the estimate onto ground truth.
struct AteResult
{
  double rotation_rmse = 0.0;     ///< degrees
  double translation_rmse = 0.0;  ///< meters
  std::vector<ItemError> items;
  Pose alignment;                 ///< gt_from_est
  std::vector<double> missing;    ///< gt keys without an estimate
};

/// Timestamps match within 1e-5 s. Throws InsufficientMatchesError below 3
/// matches.
AteResult ate_trajectory(const Trajectory &est, const Trajectory &gt);

/// Alignment from marker centres. Throws InsufficientMatchesError below 3
/// common ids.
AteResult ate_marker_map(const MarkerMap &est, const MarkerMap &gt);

nlohmann::json ate_to_json(const AteResult &r);

/// One threshold per line: "<metric> < <value>" with metric one of
/// marker_rot, marker_trans, camera_rot, camera_trans, or rot / trans for
/// both. Rotations in degrees, translations in meters. Blank lines and '#'
/// comments are skipped. Throws ParseError.
struct Assertion
{
  std::string metric;
  double bound = 0.0;
  int line = 0;
};

std::vector<Assertion> read_assertions(const std::filesystem::path &path);

}  // namespace markersfm
