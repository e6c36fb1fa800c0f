#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "markersfm/geometry.hpp"
#include "markersfm/scene_data.hpp"
#include "markersfm/sensor_model.hpp"

namespace markersfm::sim {

/// Room boundary planes. Markers are attached with their z-axis along the
/// inward normal; on walls the marker y-axis points up.
enum class Surface { Floor, Ceiling, WallXMin, WallXMax, WallYMin, WallYMax };

struct MarkerPlacement
{
  int id = 0;
  Surface surface = Surface::Floor;
  Vec2 position = Vec2::Zero();  ///< in-plane coordinates, see surface_point()
  double roll = 0.0;             ///< rotation about the marker normal, radians
  double side_length = 0.2;
};

struct AutoPlacement
{
  int count = 0;
  std::vector<double> sizes{0.2};  ///< side lengths drawn uniformly from this set
  std::uint64_t seed = 0;
  bool walls_only = true;
  double z_min = 0.3;       ///< height band for wall markers
  double z_max = 1e9;
  double clearance = 0.05;  ///< minimum gap between markers and to plane edges
  bool random_roll = true;
};

struct SceneSpec
{
  Vec3 room = Vec3(4.0, 4.0, 3.0);  ///< x, y, z extents; the room spans [0, room]
  std::vector<MarkerPlacement> placements;
  std::optional<AutoPlacement> auto_mode;
};

struct Scene
{
  Vec3 room = Vec3::Zero();
  MarkerRegistry registry;
  MarkerMap ground_truth;  ///< world_from_marker
};

/// Rotation world_from_marker of an unrolled marker on a surface.
Rotation surface_rotation(Surface s);
/// World point of in-plane coordinates (u, v) on a surface:
/// floor/ceiling (x, y); x-walls (y, z); y-walls (x, z).
Vec3 surface_point(Surface s, const Vec2 &uv, const Vec3 &room);

/// Separating-axis overlap test of two squares in a plane, each given by
/// centre, roll and side; `clearance` inflates both.
bool squares_overlap(const Vec2 &c1, double roll1, double side1, const Vec2 &c2, double roll2,
                     double side2, double clearance);

/// Deterministic for a given spec. Throws PlacementError when the automatic
/// mode cannot fit the requested count, std::invalid_argument for explicit
/// placements that leave the room or overlap.
Scene generate_scene(const SceneSpec &spec);

enum class LookAt {
  Identity,  ///< group rotation = identity
  Tangent,   ///< horizontal, along the path direction
  Center,    ///< horizontal, towards the room centre
  Outward,   ///< horizontal, away from the room centre
};

struct TrajectorySpec
{
  std::vector<Vec3> waypoints;
  bool closed = true;
  int station_count = 0;
  LookAt look_at = LookAt::Outward;
  double yaw_jitter = 0.0;    ///< uniform +/- radians
  double pitch_jitter = 0.0;  ///< uniform +/- radians
  /// Base pitch amplitude * sin(2 pi cycles i / station_count), radians.
  double pitch_amplitude = 0.0;
  double pitch_cycles = 0.0;
  double yaw_step = 0.0;  ///< added to the base yaw per station, radians
  std::uint64_t seed = 0;
  bool require_visibility = true;
  int max_retries = 64;
};

/// Group convention: camera-style axes (x right, y down, z forward).
Rotation look_rotation(double yaw, double pitch);

/// Ground-truth world_from_group poses with timestamps = station indices.
/// Throws VisibilityError when a station sees no marker after the retry
/// budget (only when require_visibility), std::invalid_argument for
/// waypoints outside the room.
Trajectory generate_trajectory(const TrajectorySpec &spec, const Scene &scene,
                               const CameraRig &rig);

struct NoiseSpec
{
  double pixel_sigma = 0.0;
  double dropout = 0.0;
  std::uint64_t seed = 0;
  double margin_px = 2.0;
  double facing_limit = 85.0 * 3.14159265358979323846 / 180.0;  ///< max incidence, radians
};

/// True iff all 4 corners are in the frustum with the margin and the marker
/// faces the camera within the facing limit.
bool marker_visible(const Pose &camera_from_world, const Intrinsics &k,
                    const MarkerMapEntry &marker, const NoiseSpec &noise);

/// Station j of the dataset is trajectory entry j. Stations without any
/// detection are omitted.
Dataset render_detections(const Scene &scene, const Trajectory &trajectory, const CameraRig &rig,
                          const NoiseSpec &noise);

enum class RigPreset { Mono, CG60, CG120, CG180 };

std::optional<RigPreset> rig_preset_from_string(const std::string &name);

/// Coincident centres, cameras yawed about the group's vertical (y) axis:
/// mono {0}, cg60 {-60, 0, 60}, cg120 {-120, 0, 120}, cg180 {0, 180} degrees.
CameraRig make_rig(RigPreset preset, const Intrinsics &k);

/// 1224 x 1024 with a 39.56 deg horizontal field of view.
Intrinsics default_intrinsics();

struct ScenarioSpec
{
  SceneSpec scene;
  TrajectorySpec trajectory;
};

/// Scenes sized after the reference datasets: room1, room2, corridor,
/// warehouse, pool, calib. Returns nullopt for an unknown name.
std::optional<ScenarioSpec> preset(const std::string &name, std::uint64_t seed);

/// Writes gt_traj.tum and gt_map.json into `dir`.
void export_ground_truth(const Scene &scene, const Trajectory &trajectory,
                         const std::filesystem::path &dir);

/// Each image of a rig dataset as its own single-camera station: station
/// j * N + k, timestamp j + k / N. Used to compare rigs against monocular
/// processing of the same images.
struct MonocularView
{
  Dataset dataset;
  Trajectory ground_truth;  ///< world_from_camera per image
};

MonocularView split_to_monocular(const Dataset &rig_dataset, const Trajectory &rig_ground_truth);

/// world_from_camera for every camera of every group pose, with the same
/// timestamp convention as split_to_monocular.
Trajectory expand_to_cameras(const Trajectory &groups, const CameraRig &rig);

}  // namespace markersfm::sim
