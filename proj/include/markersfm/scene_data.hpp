#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "markersfm/geometry.hpp"
#include "markersfm/sensor_model.hpp"

namespace markersfm {

struct MarkerSpec
{
  int id = 0;
  double side_length = 0.0;  ///< full side, meters

  double half_side() const { return 0.5 * side_length; }

  bool operator==(const MarkerSpec &) const = default;
};

/// Corners in the marker frame, ordered TL, TR, BR, BL:
/// (-s, s, 0), (s, s, 0), (s, -s, 0), (-s, -s, 0) with s the half side.
/// The marker z-axis is the outward normal of the printed face.
struct MarkerTemplate
{
  std::array<Vec3, 4> corners;
};

MarkerTemplate marker_corners(const MarkerSpec &spec);
MarkerTemplate marker_corners(double side_length);

/// id -> MarkerSpec with unique ids.
class MarkerRegistry
{
public:
  /// Throws DuplicateIdError for a repeated id, std::invalid_argument for a
  /// non-positive side or negative id.
  void add(const MarkerSpec &spec);

  bool contains(int id) const { return specs_.count(id) != 0; }
  const MarkerSpec &at(int id) const;
  size_t size() const { return specs_.size(); }
  bool empty() const { return specs_.empty(); }

  auto begin() const { return specs_.begin(); }
  auto end() const { return specs_.end(); }

  bool operator==(const MarkerRegistry &) const = default;

private:
  std::map<int, MarkerSpec> specs_;
};

using Corners2d = std::array<Vec2, 4>;

struct Detection
{
  int station = 0;
  int camera = 0;
  int marker_id = 0;
  Corners2d corners_px;  ///< same TL, TR, BR, BL order as MarkerTemplate
};

/// All detections of one capture instant of the rig, in input order.
struct Station
{
  int index = 0;
  double timestamp = 0.0;
  std::vector<Detection> detections;
};

struct Dataset
{
  CameraRig rig;
  MarkerRegistry markers;
  std::vector<Station> stations;  ///< order of first appearance in the input
};

struct MarkerMapEntry
{
  Pose world_from_marker;
  double side_length = 0.0;
};

struct MarkerMap
{
  std::map<int, MarkerMapEntry> entries;

  bool contains(int id) const { return entries.count(id) != 0; }
  size_t size() const { return entries.size(); }
};

struct TrajectoryEntry
{
  double timestamp = 0.0;
  Pose world_from_group;
};

/// Timestamps strictly increasing.
struct Trajectory
{
  std::vector<TrajectoryEntry> poses;

  size_t size() const { return poses.size(); }
};

/// True iff the quad is convex and winds clockwise on screen (image y axis
/// pointing down), which is how TL, TR, BR, BL appear for a marker facing the
/// camera.
bool corners_wind_clockwise(const Corners2d &corners);

/// Signed shoelace area in px^2; positive for the clockwise-on-screen order.
double quad_signed_area(const Corners2d &corners);

// ---------------------------------------------------------------------------
// File formats
//
//   rig.json         {"cameras": [{"intrinsics": {fx, fy, cx, cy, width, height},
//                                  "group_from_camera": {"q": [qx,qy,qz,qw], "t": [x,y,z]}}]}
//   markers.json     {"<id>": side_length_m, ...}
//   detections.jsonl one object per line:
//                    {"station": j, "camera": k, "marker_id": l,
//                     "corners": [x0,y0, x1,y1, x2,y2, x3,y3], "timestamp": t}
//                    "timestamp" is optional and defaults to the station index.
//   map.json         {"markers": [{"id", "side_length_m", "q": [...], "t": [...]}]}
//                    poses are world_from_marker
//   *.tum            "timestamp tx ty tz qx qy qz qw", world_from_group
// ---------------------------------------------------------------------------

struct DatasetPaths
{
  std::filesystem::path detections;
  std::filesystem::path rig;
  std::filesystem::path markers;
};

CameraRig read_rig(const std::filesystem::path &path);
void write_rig(const CameraRig &rig, const std::filesystem::path &path);

MarkerRegistry read_markers(const std::filesystem::path &path);
void write_markers(const MarkerRegistry &markers, const std::filesystem::path &path);

/// Parses and validates detections against a rig and registry.
std::vector<Station> read_detections(const std::filesystem::path &path, const CameraRig &rig,
                                     const MarkerRegistry &markers);
void write_detections(std::span<const Station> stations, const std::filesystem::path &path);

Dataset load_dataset(const DatasetPaths &paths);
void save_dataset(const Dataset &dataset, const DatasetPaths &paths);

void write_tum(const Trajectory &traj, const std::filesystem::path &path);
Trajectory read_tum(const std::filesystem::path &path);

void write_map(const MarkerMap &map, const std::filesystem::path &path);
/// Throws DuplicateIdError on a repeated id.
MarkerMap read_map(const std::filesystem::path &path);

struct PlyPoints
{
  std::vector<Vec3> corners;  ///< 4 per marker, template order
  std::vector<Vec3> centers;  ///< 1 per marker
};

PlyPoints export_ply(const MarkerMap &map);
/// ASCII PLY: corner vertices first, then centers.
void write_ply(const MarkerMap &map, const std::filesystem::path &path);

}  // namespace markersfm
