#include <doctest.h>

#include <cmath>
#include <map>
#include <numbers>
#include <sstream>
#include <tuple>

#include "markersfm/errors.hpp"
#include "markersfm/planar_pnp.hpp"
#include "markersfm/simulator.hpp"
#include "temp_dir.hpp"

using namespace markersfm;
using std::numbers::pi;

namespace {

struct Built
{
  sim::Scene scene;
  Trajectory gt;
  CameraRig rig;
};

Built build(const std::string &name, std::uint64_t seed, sim::RigPreset rig_preset)
{
  const auto spec = sim::preset(name, seed);
  REQUIRE(spec);
  Built b;
  b.rig = sim::make_rig(rig_preset, sim::default_intrinsics());
  b.scene = sim::generate_scene(spec->scene);
  b.gt = sim::generate_trajectory(spec->trajectory, b.scene, b.rig);
  return b;
}

Pose camera_from_world(const Built &b, int station, int camera)
{
  return camera_from_group(b.rig, size_t(camera)) *
         inverse(b.gt.poses[size_t(station)].world_from_group);
}

// Orientation of (a, b, c) in the plane.
double cross2(const Vec2 &a, const Vec2 &b, const Vec2 &c)
{
  return (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
}

bool segments_cross(const Vec2 &p1, const Vec2 &p2, const Vec2 &q1, const Vec2 &q2)
{
  return cross2(p1, p2, q1) * cross2(p1, p2, q2) < 0 && cross2(q1, q2, p1) * cross2(q1, q2, p2) < 0;
}

bool inside_convex(const std::array<Vec2, 4> &poly, const Vec2 &p)
{
  int pos = 0, neg = 0;
  for (int i = 0; i < 4; ++i) {
    const double c = cross2(poly[size_t(i)], poly[size_t((i + 1) % 4)], p);
    pos += c > 0;
    neg += c < 0;
  }
  return pos == 0 || neg == 0;
}

// Edge-intersection and containment test, independent of separating axes.
bool quads_intersect(const std::array<Vec2, 4> &a, const std::array<Vec2, 4> &b)
{
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      if (segments_cross(a[size_t(i)], a[size_t((i + 1) % 4)], b[size_t(j)], b[size_t((j + 1) % 4)]))
        return true;
  return inside_convex(a, b[0]) || inside_convex(b, a[0]);
}

}  // namespace

TEST_CASE("scene generation")
{
  SUBCASE("explicit floor marker")
  {
    sim::SceneSpec spec;
    spec.room = Vec3(4, 4, 3);
    spec.placements.push_back({7, sim::Surface::Floor, Vec2(2, 2), 0.0, 0.2});
    const sim::Scene s = sim::generate_scene(spec);
    REQUIRE(s.ground_truth.contains(7));
    const Pose &p = s.ground_truth.entries.at(7).world_from_marker;
    CHECK((p.translation - Vec3(2, 2, 0)).norm() < 1e-12);
    CHECK((p.rotation.col(2) - Vec3::UnitZ()).norm() < 1e-12);
    CHECK(s.registry.at(7).side_length == 0.2);
  }

  SUBCASE("inward normals")
  {
    const Vec3 room(4, 5, 3);
    const Vec3 centre = 0.5 * room;
    for (auto surf : {sim::Surface::Floor, sim::Surface::Ceiling, sim::Surface::WallXMin,
                      sim::Surface::WallXMax, sim::Surface::WallYMin, sim::Surface::WallYMax}) {
      const Vec3 p = sim::surface_point(surf, Vec2(1, 1), room);
      const Vec3 n = sim::surface_rotation(surf).col(2);
      CHECK(n.dot(centre - p) > 0);
      CHECK(sim::surface_rotation(surf).determinant() == doctest::Approx(1.0));
    }
  }

  SUBCASE("bad explicit placements")
  {
    sim::SceneSpec spec;
    spec.room = Vec3(4, 4, 3);
    spec.placements.push_back({1, sim::Surface::Floor, Vec2(2, 2), 0.0, 0.2});
    spec.placements.push_back({2, sim::Surface::Floor, Vec2(2.1, 2), 0.3, 0.2});
    CHECK_THROWS_AS(sim::generate_scene(spec), std::invalid_argument);
    spec.placements.pop_back();
    spec.placements.push_back({2, sim::Surface::Floor, Vec2(3.95, 2), 0.0, 0.2});
    CHECK_THROWS_AS(sim::generate_scene(spec), std::invalid_argument);
  }

  SUBCASE("deterministic")
  {
    const auto spec = sim::preset("room2", 3)->scene;
    const sim::Scene a = sim::generate_scene(spec), b = sim::generate_scene(spec);
    CHECK(a.registry == b.registry);
    for (const auto &[id, e] : a.ground_truth.entries)
      CHECK(e.world_from_marker.matrix() == b.ground_truth.entries.at(id).world_from_marker.matrix());
  }

  SUBCASE("sixty markers never overlap")
  {
    const sim::Scene s = sim::generate_scene(sim::preset("room1", 5)->scene);
    REQUIRE(s.registry.size() == 60);
    std::vector<std::pair<Pose, double>> markers;
    for (const auto &[id, e] : s.ground_truth.entries)
      markers.emplace_back(e.world_from_marker, e.side_length);
    int coplanar_pairs = 0;
    for (size_t i = 0; i < markers.size(); ++i)
      for (size_t j = i + 1; j < markers.size(); ++j) {
        const Pose &a = markers[i].first, &b = markers[j].first;
        const Vec3 n = a.rotation.col(2);
        if (n.dot(b.rotation.col(2)) < 1 - 1e-9 || std::abs(n.dot(b.translation - a.translation)) > 1e-9)
          continue;
        ++coplanar_pairs;
        // Both squares in the frame of the first.
        std::array<Vec2, 4> qa, qb;
        const auto ta = marker_corners(markers[i].second), tb = marker_corners(markers[j].second);
        const Pose a_from_b = inverse(a) * b;
        for (size_t c = 0; c < 4; ++c) {
          qa[c] = ta.corners[c].head<2>();
          qb[c] = a_from_b(tb.corners[c]).head<2>();
        }
        CHECK_FALSE(quads_intersect(qa, qb));
      }
    CHECK(coplanar_pairs > 0);
  }

  SUBCASE("impossible density")
  {
    sim::SceneSpec spec;
    spec.room = Vec3(1, 1, 1);
    sim::AutoPlacement a;
    a.count = 500;
    a.sizes = {0.4};
    spec.auto_mode = a;
    CHECK_THROWS_AS(sim::generate_scene(spec), PlacementError);
  }

  SUBCASE("separating axis predicate")
  {
    CHECK(sim::squares_overlap(Vec2(0, 0), 0.0, 1.0, Vec2(0.9, 0), 0.0, 1.0, 0.0));
    CHECK_FALSE(sim::squares_overlap(Vec2(0, 0), 0.0, 1.0, Vec2(1.1, 0), 0.0, 1.0, 0.0));
    CHECK(sim::squares_overlap(Vec2(0, 0), 0.0, 1.0, Vec2(1.1, 0), 0.0, 1.0, 0.2));
    // A diamond reaches sqrt(2)/2 along x.
    CHECK(sim::squares_overlap(Vec2(0, 0), pi / 4, 1.0, Vec2(1.15, 0), 0.0, 1.0, 0.0));
    CHECK_FALSE(sim::squares_overlap(Vec2(0, 0), pi / 4, 1.0, Vec2(1.25, 0), 0.0, 1.0, 0.0));
  }
}

TEST_CASE("trajectory generation")
{
  sim::SceneSpec scene_spec;
  scene_spec.room = Vec3(4, 4, 3);
  scene_spec.placements.push_back({1, sim::Surface::Floor, Vec2(2, 2), 0.0, 0.2});
  const sim::Scene scene = sim::generate_scene(scene_spec);
  const CameraRig mono = sim::make_rig(sim::RigPreset::Mono, sim::default_intrinsics());

  SUBCASE("square path corners")
  {
    sim::TrajectorySpec t;
    t.waypoints = {Vec3(1, 1, 1), Vec3(3, 1, 1), Vec3(3, 3, 1), Vec3(1, 3, 1)};
    t.closed = true;
    t.station_count = 4;
    t.look_at = sim::LookAt::Identity;
    t.require_visibility = false;
    const Trajectory traj = sim::generate_trajectory(t, scene, mono);
    REQUIRE(traj.size() == 4);
    for (size_t i = 0; i < 4; ++i) {
      CHECK((traj.poses[i].world_from_group.translation - t.waypoints[i]).norm() < 1e-12);
      CHECK(traj.poses[i].world_from_group.rotation.isIdentity(1e-12));
      CHECK(traj.poses[i].timestamp == double(i));
    }
    t.waypoints.push_back(Vec3(5, 1, 1));
    CHECK_THROWS_AS(sim::generate_trajectory(t, scene, mono), std::invalid_argument);
  }

  SUBCASE("unreachable visibility")
  {
    sim::TrajectorySpec t;
    t.waypoints = {Vec3(1, 1, 2), Vec3(3, 1, 2)};
    t.closed = false;
    t.station_count = 3;
    t.look_at = sim::LookAt::Identity;  // horizontal, never sees the floor
    t.max_retries = 4;
    CHECK_THROWS_AS(sim::generate_trajectory(t, scene, mono), VisibilityError);
  }

  SUBCASE("deterministic and every station sees a marker")
  {
    const auto spec = sim::preset("room1", 2);
    const Built a = build("room1", 2, sim::RigPreset::CG120);
    const Trajectory again = sim::generate_trajectory(spec->trajectory, a.scene, a.rig);
    REQUIRE(again.size() == a.gt.size());
    for (size_t i = 0; i < again.size(); ++i)
      CHECK(again.poses[i].world_from_group.matrix() == a.gt.poses[i].world_from_group.matrix());
    CHECK(a.gt.size() == 65);

    const Dataset d = sim::render_detections(a.scene, a.gt, a.rig, {});
    CHECK(d.stations.size() == a.gt.size());
    for (const auto &p : a.gt.poses) {
      const Vec3 t = p.world_from_group.translation;
      CHECK((t.array() >= 0).all());
      CHECK((t.array() <= a.scene.room.array()).all());
    }
  }
}

TEST_CASE("rendered detections")
{
  const Built b = build("room1", 4, sim::RigPreset::CG120);
  const Dataset exact = sim::render_detections(b.scene, b.gt, b.rig, {});
  sim::NoiseSpec noisy_spec;
  noisy_spec.pixel_sigma = 0.5;
  noisy_spec.seed = 11;
  const Dataset noisy = sim::render_detections(b.scene, b.gt, b.rig, noisy_spec);

  SUBCASE("noise statistics")
  {
    std::map<std::tuple<int, int, int>, Corners2d> truth;
    for (const auto &s : exact.stations)
      for (const auto &d : s.detections)
        truth[{d.station, d.camera, d.marker_id}] = d.corners_px;
    double sum = 0.0, sum2 = 0.0;
    long n = 0;
    for (std::uint64_t seed = 11; seed < 14; ++seed) {
      sim::NoiseSpec ns = noisy_spec;
      ns.seed = seed;
      for (const auto &s : sim::render_detections(b.scene, b.gt, b.rig, ns).stations)
        for (const auto &d : s.detections) {
          const auto &t = truth.at({d.station, d.camera, d.marker_id});
          for (size_t c = 0; c < 4; ++c)
            for (int a = 0; a < 2; ++a) {
              const double e = d.corners_px[c][a] - t[c][a];
              sum += e;
              sum2 += e * e;
              ++n;
            }
        }
    }
    REQUIRE(n >= 2 * 10000);
    const double mean = sum / double(n);
    const double sd = std::sqrt(sum2 / double(n) - mean * mean);
    CHECK(sd >= 0.45);
    CHECK(sd <= 0.55);
  }

  SUBCASE("deterministic")
  {
    const Dataset again = sim::render_detections(b.scene, b.gt, b.rig, noisy_spec);
    REQUIRE(again.stations.size() == noisy.stations.size());
    for (size_t i = 0; i < again.stations.size(); ++i) {
      REQUIRE(again.stations[i].detections.size() == noisy.stations[i].detections.size());
      for (size_t j = 0; j < again.stations[i].detections.size(); ++j)
        CHECK(again.stations[i].detections[j].corners_px == noisy.stations[i].detections[j].corners_px);
    }
  }

  SUBCASE("every detection is visible and planar pose recovers the truth")
  {
    double worst_t = 0.0, worst_r = 0.0;
    for (const auto &s : exact.stations)
      for (const auto &d : s.detections) {
        const MarkerMapEntry &m = b.scene.ground_truth.entries.at(d.marker_id);
        const Pose cw = camera_from_world(b, d.station, d.camera);
        CHECK(sim::marker_visible(cw, b.rig.cameras[size_t(d.camera)].intrinsics, m, {}));
        CHECK(corners_wind_clockwise(d.corners_px));
        const PnpResult r = solve_planar_pnp(d.corners_px, marker_corners(m.side_length),
                                             b.rig.cameras[size_t(d.camera)].intrinsics);
        const Pose truth = cw * m.world_from_marker;
        worst_t = std::max(worst_t, (r.best.camera_from_marker.translation - truth.translation).norm());
        worst_r = std::max(worst_r, rotation_distance(r.best.camera_from_marker.rotation, truth.rotation));
      }
    CHECK(worst_t < 1e-6);
    CHECK(worst_r < 1e-6);
  }

  SUBCASE("markers behind the camera are absent")
  {
    sim::SceneSpec spec;
    spec.room = Vec3(4, 4, 3);
    spec.placements.push_back({1, sim::Surface::WallXMax, Vec2(2, 1.5), 0.0, 0.4});
    const sim::Scene scene = sim::generate_scene(spec);
    const CameraRig mono = sim::make_rig(sim::RigPreset::Mono, sim::default_intrinsics());
    Trajectory t;
    // Looking along -x, away from the marker on the x = 4 wall.
    t.poses.push_back({0.0, Pose{sim::look_rotation(pi, 0.0), Vec3(2, 2, 1.5)}});
    CHECK(sim::render_detections(scene, t, mono, {}).stations.empty());
    t.poses[0].world_from_group.rotation = sim::look_rotation(0.0, 0.0);
    const Dataset seen = sim::render_detections(scene, t, mono, {});
    REQUIRE(seen.stations.size() == 1);
    CHECK(seen.stations[0].detections.size() == 1);
  }

  SUBCASE("dropout")
  {
    sim::NoiseSpec all_gone;
    all_gone.dropout = 1.0;
    CHECK(sim::render_detections(b.scene, b.gt, b.rig, all_gone).stations.empty());
  }
}

TEST_CASE("rig presets")
{
  const Intrinsics k = sim::default_intrinsics();
  CHECK(k.width == 1224);
  CHECK(k.height == 1024);
  CHECK(2.0 * std::atan(0.5 * k.width / k.fx) == doctest::Approx(39.56 * pi / 180.0));

  const auto axis = [](const CameraRig &r, size_t c) {
    return Vec3(r.cameras[c].group_from_camera.rotation.col(2));
  };
  const auto angle = [](const Vec3 &a, const Vec3 &b) {
    return std::acos(std::clamp(a.dot(b), -1.0, 1.0)) * 180.0 / pi;
  };

  const CameraRig mono = sim::make_rig(sim::RigPreset::Mono, k);
  REQUIRE(mono.size() == 1);
  CHECK(mono.cameras[0].group_from_camera.matrix().isIdentity(0.0));

  const CameraRig cg120 = sim::make_rig(sim::RigPreset::CG120, k);
  REQUIRE(cg120.size() == 3);
  CHECK(angle(axis(cg120, 0), axis(cg120, 1)) == doctest::Approx(120.0));
  CHECK(angle(axis(cg120, 1), axis(cg120, 2)) == doctest::Approx(120.0));
  CHECK(angle(axis(cg120, 0), axis(cg120, 2)) == doctest::Approx(120.0));

  const CameraRig cg60 = sim::make_rig(sim::RigPreset::CG60, k);
  CHECK(angle(axis(cg60, 0), axis(cg60, 2)) == doctest::Approx(120.0));
  CHECK(angle(axis(cg60, 0), axis(cg60, 1)) == doctest::Approx(60.0));

  const CameraRig cg180 = sim::make_rig(sim::RigPreset::CG180, k);
  REQUIRE(cg180.size() == 2);
  CHECK(axis(cg180, 0).dot(axis(cg180, 1)) == doctest::Approx(-1.0));

  for (const CameraRig *r : {&cg60, &cg120, &cg180})
    for (const auto &c : r->cameras) {
      CHECK(c.group_from_camera.translation.norm() == 0.0);
      // Yaw only: the camera y (down) axis stays the group's.
      CHECK((c.group_from_camera.rotation.col(1) - Vec3::UnitY()).norm() < 1e-12);
    }

  CHECK(sim::rig_preset_from_string("cg120") == sim::RigPreset::CG120);
  CHECK_FALSE(sim::rig_preset_from_string("cg90"));
}

TEST_CASE("ground truth export")
{
  const Built b = build("room1", 6, sim::RigPreset::CG120);
  TempDir dir;
  sim::export_ground_truth(b.scene, b.gt, dir.path);
  const Trajectory t = read_tum(dir / "gt_traj.tum");
  const MarkerMap m = read_map(dir / "gt_map.json");
  REQUIRE(t.size() == b.gt.size());
  for (size_t i = 0; i < t.size(); ++i) {
    CHECK(t.poses[i].timestamp == double(i));
    CHECK((t.poses[i].world_from_group.matrix() - b.gt.poses[i].world_from_group.matrix())
              .norm() < 1e-12);
  }
  REQUIRE(m.size() == b.scene.ground_truth.size());
  for (const auto &[id, e] : m.entries)
    CHECK((e.world_from_marker.matrix() -
           b.scene.ground_truth.entries.at(id).world_from_marker.matrix())
              .norm() < 1e-12);

  TempDir empty;
  sim::export_ground_truth(b.scene, Trajectory{}, empty.path);
  // Comment lines only.
  std::istringstream lines(read_file(empty / "gt_traj.tum"));
  for (std::string line; std::getline(lines, line);)
    CHECK(line.starts_with("#"));
  CHECK(read_tum(empty / "gt_traj.tum").size() == 0);
}

TEST_CASE("monocular split")
{
  const Built b = build("room1", 7, sim::RigPreset::CG120);
  const Dataset d = sim::render_detections(b.scene, b.gt, b.rig, {});
  const sim::MonocularView v = sim::split_to_monocular(d, b.gt);
  CHECK(v.dataset.rig.size() == 1);
  REQUIRE(v.ground_truth.size() == 3 * b.gt.size());
  size_t detections = 0;
  for (const auto &s : d.stations)
    detections += s.detections.size();
  size_t split = 0;
  for (const auto &s : v.dataset.stations) {
    split += s.detections.size();
    const int group = s.index / 3, camera = s.index % 3;
    CHECK(s.timestamp == doctest::Approx(group + camera / 3.0));
    const Pose expected = b.gt.poses[size_t(group)].world_from_group *
                          b.rig.cameras[size_t(camera)].group_from_camera;
    const Pose &gt = v.ground_truth.poses[size_t(s.index)].world_from_group;
    CHECK((gt.matrix() - expected.matrix()).norm() < 1e-12);
    for (const auto &det : s.detections) {
      CHECK(det.camera == 0);
      CHECK(det.station == s.index);
      // The image of camera k seen as a lone camera: planar pose unchanged.
      const Pose truth = inverse(expected) * b.scene.ground_truth.entries.at(det.marker_id).world_from_marker;
      const PnpResult r = solve_planar_pnp(det.corners_px, marker_corners(b.scene.registry.at(det.marker_id)),
                                           sim::default_intrinsics());
      CHECK((r.best.camera_from_marker.translation - truth.translation).norm() < 1e-6);
    }
  }
  CHECK(split == detections);
}
