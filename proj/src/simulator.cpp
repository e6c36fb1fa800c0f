#include "markersfm/simulator.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "markersfm/errors.hpp"

namespace markersfm::sim {

namespace {

constexpr int kPlacementAttempts = 2000;

struct PlaneFrame
{
  Vec3 e_u;
  Vec3 e_v;
  Vec2 extent;
};

PlaneFrame plane_frame(Surface s, const Vec3 &room)
{
  const Vec3 ex = Vec3::UnitX(), ey = Vec3::UnitY(), ez = Vec3::UnitZ();
  switch (s) {
  case Surface::Floor:
  case Surface::Ceiling:
    return {ex, ey, Vec2(room.x(), room.y())};
  case Surface::WallXMin:
  case Surface::WallXMax:
    return {ey, ez, Vec2(room.y(), room.z())};
  case Surface::WallYMin:
  case Surface::WallYMax:
    return {ex, ez, Vec2(room.x(), room.z())};
  }
  throw std::invalid_argument("unknown surface");
}

bool is_wall(Surface s) { return s != Surface::Floor && s != Surface::Ceiling; }

// In-plane angle of the marker x-axis, measured in the (e_u, e_v) basis.
double in_plane_angle(Surface s, double roll, const Vec3 &room)
{
  const PlaneFrame f = plane_frame(s, room);
  const Vec3 x = surface_rotation(s) * exp_so3(Vec3(0, 0, roll)).col(0);
  return std::atan2(x.dot(f.e_v), x.dot(f.e_u));
}

// Half extent of a rotated square along the plane axes.
double half_extent(double side, double angle)
{
  return 0.5 * side * (std::abs(std::cos(angle)) + std::abs(std::sin(angle)));
}

struct Placed
{
  Surface surface;
  Vec2 uv;
  double angle;
  double side;
};

bool fits(const Placed &p, const std::vector<Placed> &placed, const Vec2 &lo, const Vec2 &hi,
          double clearance)
{
  const double e = half_extent(p.side, p.angle) + clearance;
  if (p.uv.x() - e < lo.x() || p.uv.x() + e > hi.x() || p.uv.y() - e < lo.y() ||
      p.uv.y() + e > hi.y())
    return false;
  for (const auto &q : placed)
    if (q.surface == p.surface &&
        squares_overlap(p.uv, p.angle, p.side, q.uv, q.angle, q.side, clearance))
      return false;
  return true;
}

Pose marker_pose(Surface s, const Vec2 &uv, double roll, const Vec3 &room)
{
  Pose pose;
  pose.rotation = surface_rotation(s) * exp_so3(Vec3(0, 0, roll));
  pose.translation = surface_point(s, uv, room);
  return pose;
}

struct Polyline
{
  std::vector<Vec3> points;
  std::vector<double> cumulative;  // arc length at each point

  double length() const { return cumulative.back(); }

  std::pair<Vec3, Vec3> at(double s) const
  {
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), s);
    size_t i = it == cumulative.begin() ? 0 : size_t(it - cumulative.begin()) - 1;
    i = std::min(i, points.size() - 2);
    const double seg = cumulative[i + 1] - cumulative[i];
    const Vec3 dir = (points[i + 1] - points[i]) / seg;
    return {points[i] + dir * (s - cumulative[i]), dir};
  }
};

Polyline make_polyline(const std::vector<Vec3> &waypoints, bool closed)
{
  Polyline p;
  for (const auto &w : waypoints)
    if (p.points.empty() || (w - p.points.back()).norm() > 1e-12)
      p.points.push_back(w);
  if (closed && p.points.size() > 1 && (p.points.front() - p.points.back()).norm() > 1e-12)
    p.points.push_back(p.points.front());
  if (p.points.size() < 2)
    throw std::invalid_argument("trajectory needs at least two distinct waypoints");
  p.cumulative.push_back(0.0);
  for (size_t i = 1; i < p.points.size(); ++i)
    p.cumulative.push_back(p.cumulative.back() + (p.points[i] - p.points[i - 1]).norm());
  return p;
}

bool station_sees_marker(const Pose &world_from_group, const Scene &scene, const CameraRig &rig)
{
  const NoiseSpec visibility;
  const Pose group_from_world = inverse(world_from_group);
  for (size_t k = 0; k < rig.size(); ++k) {
    const Pose camera_from_world = camera_from_group(rig, k) * group_from_world;
    for (const auto &[id, entry] : scene.ground_truth.entries)
      if (marker_visible(camera_from_world, rig.cameras[k].intrinsics, entry, visibility))
        return true;
  }
  return false;
}

std::vector<Vec3> rectangle_loop(const Vec3 &room, double inset_fraction, double height)
{
  const double ix = inset_fraction * room.x(), iy = inset_fraction * room.y();
  return {Vec3(ix, iy, height), Vec3(room.x() - ix, iy, height),
          Vec3(room.x() - ix, room.y() - iy, height), Vec3(ix, room.y() - iy, height)};
}

}  // namespace

Rotation surface_rotation(Surface s)
{
  Rotation r;
  switch (s) {
  case Surface::Floor:
    r = Rotation::Identity();
    break;
  case Surface::Ceiling:
    r << 1, 0, 0, 0, -1, 0, 0, 0, -1;
    break;
  case Surface::WallXMin:
    r.col(0) = Vec3::UnitY();
    r.col(1) = Vec3::UnitZ();
    r.col(2) = Vec3::UnitX();
    break;
  case Surface::WallXMax:
    r.col(0) = -Vec3::UnitY();
    r.col(1) = Vec3::UnitZ();
    r.col(2) = -Vec3::UnitX();
    break;
  case Surface::WallYMin:
    r.col(0) = -Vec3::UnitX();
    r.col(1) = Vec3::UnitZ();
    r.col(2) = Vec3::UnitY();
    break;
  case Surface::WallYMax:
    r.col(0) = Vec3::UnitX();
    r.col(1) = Vec3::UnitZ();
    r.col(2) = -Vec3::UnitY();
    break;
  }
  return r;
}

Vec3 surface_point(Surface s, const Vec2 &uv, const Vec3 &room)
{
  switch (s) {
  case Surface::Floor:
    return {uv.x(), uv.y(), 0.0};
  case Surface::Ceiling:
    return {uv.x(), uv.y(), room.z()};
  case Surface::WallXMin:
    return {0.0, uv.x(), uv.y()};
  case Surface::WallXMax:
    return {room.x(), uv.x(), uv.y()};
  case Surface::WallYMin:
    return {uv.x(), 0.0, uv.y()};
  case Surface::WallYMax:
    return {uv.x(), room.y(), uv.y()};
  }
  throw std::invalid_argument("unknown surface");
}

bool squares_overlap(const Vec2 &c1, double roll1, double side1, const Vec2 &c2, double roll2,
                     double side2, double clearance)
{
  const double h1 = 0.5 * side1 + 0.5 * clearance;
  const double h2 = 0.5 * side2 + 0.5 * clearance;
  const auto corners = [](const Vec2 &c, double a, double h) {
    const Vec2 u(std::cos(a), std::sin(a)), v(-std::sin(a), std::cos(a));
    return std::array<Vec2, 4>{c + h * (u + v), c + h * (-u + v), c + h * (-u - v),
                               c + h * (u - v)};
  };
  const auto p1 = corners(c1, roll1, h1);
  const auto p2 = corners(c2, roll2, h2);
  const std::array<Vec2, 4> axes{Vec2(std::cos(roll1), std::sin(roll1)),
                                 Vec2(-std::sin(roll1), std::cos(roll1)),
                                 Vec2(std::cos(roll2), std::sin(roll2)),
                                 Vec2(-std::sin(roll2), std::cos(roll2))};
  for (const auto &axis : axes) {
    double lo1 = 1e300, hi1 = -1e300, lo2 = 1e300, hi2 = -1e300;
    for (const auto &p : p1) {
      lo1 = std::min(lo1, p.dot(axis));
      hi1 = std::max(hi1, p.dot(axis));
    }
    for (const auto &p : p2) {
      lo2 = std::min(lo2, p.dot(axis));
      hi2 = std::max(hi2, p.dot(axis));
    }
    if (hi1 <= lo2 || hi2 <= lo1)
      return false;
  }
  return true;
}

Scene generate_scene(const SceneSpec &spec)
{
  if (!(spec.room.array() > 0.0).all())
    throw std::invalid_argument("room extents must be positive");

  Scene scene;
  scene.room = spec.room;
  std::vector<Placed> placed;

  int next_id = 0;
  for (const auto &p : spec.placements) {
    const double angle = in_plane_angle(p.surface, p.roll, spec.room);
    const Placed candidate{p.surface, p.position, angle, p.side_length};
    const Vec2 extent = plane_frame(p.surface, spec.room).extent;
    if (!fits(candidate, placed, Vec2::Zero(), extent, 0.0))
      throw std::invalid_argument("marker " + std::to_string(p.id) +
                                  " leaves its surface or overlaps another marker");
    scene.registry.add({p.id, p.side_length});
    scene.ground_truth.entries[p.id] = {marker_pose(p.surface, p.position, p.roll, spec.room),
                                        p.side_length};
    placed.push_back(candidate);
    next_id = std::max(next_id, p.id + 1);
  }

  if (!spec.auto_mode)
    return scene;

  const AutoPlacement &a = *spec.auto_mode;
  if (a.count < 0 || a.sizes.empty())
    throw std::invalid_argument("auto placement needs a count >= 0 and at least one size");
  std::vector<Surface> surfaces{Surface::WallXMin, Surface::WallXMax, Surface::WallYMin,
                                Surface::WallYMax};
  if (!a.walls_only) {
    surfaces.push_back(Surface::Floor);
    surfaces.push_back(Surface::Ceiling);
  }
  std::vector<Vec2> lo, hi;
  std::vector<double> areas;
  for (Surface s : surfaces) {
    const Vec2 extent = plane_frame(s, spec.room).extent;
    Vec2 l = Vec2::Zero(), h = extent;
    if (is_wall(s)) {
      l.y() = std::clamp(a.z_min, 0.0, extent.y());
      h.y() = std::clamp(a.z_max, l.y(), extent.y());
    }
    lo.push_back(l);
    hi.push_back(h);
    areas.push_back((h - l).prod());
  }

  std::mt19937_64 rng(a.seed);
  std::discrete_distribution<int> pick_surface(areas.begin(), areas.end());
  std::uniform_int_distribution<size_t> pick_size(0, a.sizes.size() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  for (int i = 0; i < a.count; ++i) {
    const double side = a.sizes[pick_size(rng)];
    bool ok = false;
    for (int attempt = 0; attempt < kPlacementAttempts && !ok; ++attempt) {
      const int si = pick_surface(rng);
      const Surface s = surfaces[size_t(si)];
      const Vec2 uv(lo[size_t(si)].x() + unit(rng) * (hi[size_t(si)] - lo[size_t(si)]).x(),
                    lo[size_t(si)].y() + unit(rng) * (hi[size_t(si)] - lo[size_t(si)]).y());
      const double roll = a.random_roll ? unit(rng) * 2.0 * std::numbers::pi : 0.0;
      const Placed candidate{s, uv, in_plane_angle(s, roll, spec.room), side};
      if (!fits(candidate, placed, lo[size_t(si)], hi[size_t(si)], a.clearance))
        continue;
      const int id = next_id++;
      scene.registry.add({id, side});
      scene.ground_truth.entries[id] = {marker_pose(s, uv, roll, spec.room), side};
      placed.push_back(candidate);
      ok = true;
    }
    if (!ok)
      throw PlacementError("placed " + std::to_string(i) + " of " + std::to_string(a.count) +
                           " markers; no overlap-free position within " +
                           std::to_string(kPlacementAttempts) + " attempts");
  }
  return scene;
}

Rotation look_rotation(double yaw, double pitch)
{
  const Vec3 forward(std::cos(pitch) * std::cos(yaw), std::cos(pitch) * std::sin(yaw),
                     std::sin(pitch));
  const Vec3 right(std::sin(yaw), -std::cos(yaw), 0.0);
  Rotation r;
  r.col(0) = right;
  r.col(1) = forward.cross(right);
  r.col(2) = forward;
  return r;
}

Trajectory generate_trajectory(const TrajectorySpec &spec, const Scene &scene,
                               const CameraRig &rig)
{
  if (spec.station_count <= 0)
    throw std::invalid_argument("station_count must be positive");
  for (const auto &w : spec.waypoints)
    if ((w.array() < 0.0).any() || (w.array() > scene.room.array()).any())
      throw std::invalid_argument("waypoint outside the room volume");

  const Polyline path = make_polyline(spec.waypoints, spec.closed);
  const int n = spec.station_count;
  const double step = spec.closed ? path.length() / n : (n > 1 ? path.length() / (n - 1) : 0.0);
  const Vec3 center = 0.5 * scene.room;

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> sym(-1.0, 1.0);
  const bool jittered = spec.yaw_jitter != 0.0 || spec.pitch_jitter != 0.0;

  Trajectory traj;
  for (int i = 0; i < n; ++i) {
    const auto [position, tangent] = path.at(std::min(i * step, path.length()));
    double base_yaw = std::atan2(tangent.y(), tangent.x());
    const Vec2 to_center = (center - position).head<2>();
    if (spec.look_at == LookAt::Center && to_center.norm() > 1e-9)
      base_yaw = std::atan2(to_center.y(), to_center.x());
    if (spec.look_at == LookAt::Outward && to_center.norm() > 1e-9)
      base_yaw = std::atan2(-to_center.y(), -to_center.x());

    base_yaw += spec.yaw_step * i;
    const double base_pitch =
        spec.pitch_amplitude * std::sin(2.0 * std::numbers::pi * spec.pitch_cycles * i / n);

    Pose pose;
    pose.translation = position;
    bool visible = false;
    for (int attempt = 0; attempt <= spec.max_retries && !visible; ++attempt) {
      const double yaw = base_yaw + spec.yaw_jitter * sym(rng);
      const double pitch = base_pitch + spec.pitch_jitter * sym(rng);
      pose.rotation = spec.look_at == LookAt::Identity ? Rotation::Identity()
                                                        : look_rotation(yaw, pitch);
      visible = !spec.require_visibility || station_sees_marker(pose, scene, rig);
      if (!jittered || spec.look_at == LookAt::Identity)
        break;
    }
    if (!visible)
      throw VisibilityError("station " + std::to_string(i) + " sees no marker after " +
                            std::to_string(spec.max_retries) + " retries");
    traj.poses.push_back({double(i), pose});
  }
  return traj;
}

bool marker_visible(const Pose &camera_from_world, const Intrinsics &k,
                    const MarkerMapEntry &marker, const NoiseSpec &noise)
{
  const Pose camera_from_marker = camera_from_world * marker.world_from_marker;
  for (const auto &c : marker_corners(marker.side_length).corners)
    if (!in_frustum(k, camera_from_marker(c), noise.margin_px))
      return false;
  // Ray from the marker centre to the camera centre, in camera coordinates.
  const Vec3 to_camera = -camera_from_marker.translation;
  const double cos_incidence =
      camera_from_marker.rotation.col(2).dot(to_camera) / to_camera.norm();
  return cos_incidence > std::cos(noise.facing_limit);
}

Dataset render_detections(const Scene &scene, const Trajectory &trajectory, const CameraRig &rig,
                          const NoiseSpec &noise)
{
  if (noise.pixel_sigma < 0.0 || noise.dropout < 0.0 || noise.dropout > 1.0)
    throw std::invalid_argument("noise parameters out of range");
  Dataset out;
  out.rig = rig;
  out.markers = scene.registry;

  std::mt19937_64 rng(noise.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  for (size_t j = 0; j < trajectory.size(); ++j) {
    Station station;
    station.index = int(j);
    station.timestamp = trajectory.poses[j].timestamp;
    const Pose group_from_world = inverse(trajectory.poses[j].world_from_group);
    for (size_t k = 0; k < rig.size(); ++k) {
      const Intrinsics &intr = rig.cameras[k].intrinsics;
      const Pose camera_from_world = camera_from_group(rig, k) * group_from_world;
      for (const auto &[id, entry] : scene.ground_truth.entries) {
        if (!marker_visible(camera_from_world, intr, entry, noise))
          continue;
        if (unit(rng) < noise.dropout)
          continue;
        const Pose camera_from_marker = camera_from_world * entry.world_from_marker;
        const MarkerTemplate tmpl = marker_corners(entry.side_length);
        Detection det{int(j), int(k), id, {}};
        for (int c = 0; c < 4; ++c) {
          det.corners_px[size_t(c)] = project(intr, camera_from_marker(tmpl.corners[size_t(c)]));
          det.corners_px[size_t(c)].x() += noise.pixel_sigma * gauss(rng);
          det.corners_px[size_t(c)].y() += noise.pixel_sigma * gauss(rng);
        }
        // A detector never reports a folded quad.
        if (!corners_wind_clockwise(det.corners_px))
          continue;
        station.detections.push_back(det);
      }
    }
    if (!station.detections.empty())
      out.stations.push_back(std::move(station));
  }
  return out;
}

std::optional<RigPreset> rig_preset_from_string(const std::string &name)
{
  if (name == "mono")
    return RigPreset::Mono;
  if (name == "cg60")
    return RigPreset::CG60;
  if (name == "cg120")
    return RigPreset::CG120;
  if (name == "cg180")
    return RigPreset::CG180;
  return std::nullopt;
}

CameraRig make_rig(RigPreset preset, const Intrinsics &k)
{
  std::vector<double> yaw_deg;
  switch (preset) {
  case RigPreset::Mono:
    yaw_deg = {0.0};
    break;
  case RigPreset::CG60:
    yaw_deg = {-60.0, 0.0, 60.0};
    break;
  case RigPreset::CG120:
    yaw_deg = {-120.0, 0.0, 120.0};
    break;
  case RigPreset::CG180:
    yaw_deg = {0.0, 180.0};
    break;
  }
  CameraRig rig;
  for (double y : yaw_deg) {
    Pose extrinsic;
    extrinsic.rotation = exp_so3(Vec3(0.0, y * std::numbers::pi / 180.0, 0.0));
    rig.cameras.push_back({k, extrinsic});
  }
  return rig;
}

Intrinsics default_intrinsics()
{
  return Intrinsics::from_hfov(1224, 1024, 39.56 * std::numbers::pi / 180.0);
}

std::optional<ScenarioSpec> preset(const std::string &name, std::uint64_t seed)
{
  struct Row
  {
    const char *name;
    int markers;
    bool mixed_sizes;
    Vec3 room;
    int stations;
  };
  static const std::array<Row, 6> rows{{
      {"room1", 60, false, Vec3(9.0, 7.0, 2.5), 65},
      {"room2", 100, false, Vec3(11.4, 8.2, 4.0), 92},
      {"corridor", 200, true, Vec3(23.0, 21.0, 2.0), 90},
      {"warehouse", 200, true, Vec3(20.6, 15.2, 2.0), 129},
      {"pool", 200, false, Vec3(53.7, 22.8, 5.0), 201},
      {"calib", 200, true, Vec3(10.0, 10.0, 10.0), 169},
  }};
  const auto it = std::find_if(rows.begin(), rows.end(),
                               [&](const Row &r) { return name == r.name; });
  if (it == rows.end())
    return std::nullopt;

  const bool calib = name == "calib";
  const double height = calib ? 0.5 * it->room.z() : std::min(1.5, 0.5 * it->room.z());

  ScenarioSpec s;
  s.scene.room = it->room;
  AutoPlacement a;
  a.count = it->markers;
  a.sizes = it->mixed_sizes ? std::vector<double>{0.1, 0.2, 0.4} : std::vector<double>{0.2};
  a.seed = seed;
  a.walls_only = !calib;
  a.z_min = calib ? 0.0 : std::max(0.2, height - 0.8);
  a.z_max = calib ? it->room.z() : std::min(it->room.z() - 0.2, height + 0.8);
  s.scene.auto_mode = a;

  s.trajectory.waypoints = rectangle_loop(it->room, 0.3, height);
  if (calib) {
    // Up and down around the room centre, sweeping the view over floor and ceiling.
    s.trajectory.waypoints[0].z() = 0.3 * it->room.z();
    s.trajectory.waypoints[2].z() = 0.7 * it->room.z();
    s.trajectory.pitch_amplitude = 1.0;
    s.trajectory.pitch_cycles = 9.0;
    s.trajectory.yaw_step = std::numbers::pi * (3.0 - std::sqrt(5.0));  // golden angle
  }
  s.trajectory.closed = true;
  s.trajectory.station_count = it->stations;
  s.trajectory.look_at = LookAt::Outward;
  s.trajectory.yaw_jitter = 0.2;
  s.trajectory.pitch_jitter = calib ? 0.2 : 0.05;
  s.trajectory.seed = seed + 1;
  return s;
}

void export_ground_truth(const Scene &scene, const Trajectory &trajectory,
                         const std::filesystem::path &dir)
{
  std::filesystem::create_directories(dir);
  write_tum(trajectory, dir / "gt_traj.tum");
  write_map(scene.ground_truth, dir / "gt_map.json");
}

MonocularView split_to_monocular(const Dataset &rig_dataset, const Trajectory &rig_ground_truth)
{
  const CameraRig &rig = rig_dataset.rig;
  if (rig.size() == 0)
    throw std::invalid_argument("rig has no cameras");
  for (const auto &c : rig.cameras) {
    const Intrinsics &a = c.intrinsics, &b = rig.cameras[0].intrinsics;
    if (a.fx != b.fx || a.fy != b.fy || a.cx != b.cx || a.cy != b.cy || a.width != b.width ||
        a.height != b.height)
      throw std::invalid_argument("monocular split needs identical intrinsics on all cameras");
  }
  const int n = int(rig.size());

  MonocularView out;
  out.dataset.rig.cameras.push_back({rig.cameras[0].intrinsics, Pose::identity()});
  out.dataset.markers = rig_dataset.markers;
  for (const auto &st : rig_dataset.stations) {
    std::vector<Station> per_camera(static_cast<size_t>(n));
    for (int k = 0; k < n; ++k) {
      per_camera[size_t(k)].index = st.index * n + k;
      per_camera[size_t(k)].timestamp = st.timestamp + double(k) / n;
    }
    for (const auto &d : st.detections) {
      Detection m = d;
      m.station = st.index * n + d.camera;
      m.camera = 0;
      per_camera[size_t(d.camera)].detections.push_back(m);
    }
    for (auto &s : per_camera)
      if (!s.detections.empty())
        out.dataset.stations.push_back(std::move(s));
  }
  out.ground_truth = expand_to_cameras(rig_ground_truth, rig);
  return out;
}

Trajectory expand_to_cameras(const Trajectory &groups, const CameraRig &rig)
{
  const int n = int(rig.size());
  Trajectory out;
  for (const auto &e : groups.poses)
    for (int k = 0; k < n; ++k)
      out.poses.push_back({e.timestamp + double(k) / n,
                           e.world_from_group * rig.cameras[size_t(k)].group_from_camera});
  return out;
}

}  // namespace markersfm::sim
