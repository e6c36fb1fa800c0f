#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "markersfm/errors.hpp"
#include "markersfm/evaluation.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"

using namespace markersfm;
using std::numbers::pi;

namespace {

Trajectory random_trajectory(std::mt19937_64 &rng, int n)
{
  Trajectory t;
  for (int i = 0; i < n; ++i)
    t.poses.push_back({0.1 * i, oracle::random_pose(rng, 5.0)});
  return t;
}

MarkerMap random_map(std::mt19937_64 &rng, int n)
{
  MarkerMap m;
  for (int i = 0; i < n; ++i)
    m.entries[i] = {oracle::random_pose(rng, 5.0), 0.2};
  return m;
}

Trajectory moved(const Trajectory &t, const Pose &g)
{
  Trajectory out = t;
  for (auto &e : out.poses)
    e.world_from_group = g * e.world_from_group;
  return out;
}

MarkerMap moved(const MarkerMap &m, const Pose &g)
{
  MarkerMap out = m;
  for (auto &[id, e] : out.entries)
    e.world_from_marker = g * e.world_from_marker;
  return out;
}

}  // namespace

TEST_CASE("trajectory ATE")
{
  std::mt19937_64 rng(1);
  const Trajectory gt = random_trajectory(rng, 100);

  AteResult r = ate_trajectory(gt, gt);
  CHECK(r.rotation_rmse < 1e-9);
  CHECK(r.translation_rmse < 1e-9);
  CHECK(r.items.size() == 100);
  CHECK(r.missing.empty());

  const Pose g = oracle::random_pose(rng, 20.0);
  r = ate_trajectory(moved(gt, g), gt);
  CHECK(r.rotation_rmse < 1e-9);
  CHECK(r.translation_rmse < 1e-9);
  CHECK((r.alignment.matrix() - inverse(g).matrix()).norm() < 1e-9);

  // Translation jitter; alignment absorbs a little of it.
  std::normal_distribution<double> n(0.0, 0.05);
  double mean_rmse = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    Trajectory est = gt;
    for (auto &e : est.poses)
      e.world_from_group.translation += Vec3(n(rng), n(rng), n(rng));
    const AteResult j = ate_trajectory(moved(est, g), gt);
    const AteResult unmoved = ate_trajectory(est, gt);
    CHECK(std::abs(j.translation_rmse - unmoved.translation_rmse) < 1e-9);
    CHECK(std::abs(j.rotation_rmse - unmoved.rotation_rmse) < 1e-9);
    mean_rmse += j.translation_rmse / 20;
  }
  CHECK(mean_rmse == doctest::Approx(0.05 * std::sqrt(3.0)).epsilon(0.2));

  // Timestamps within 1e-5 s match.
  Trajectory shifted = gt;
  for (auto &e : shifted.poses)
    e.timestamp += 5e-6;
  CHECK(ate_trajectory(shifted, gt).items.size() == 100);

  Trajectory partial;
  partial.poses.assign(gt.poses.begin(), gt.poses.begin() + 2);
  CHECK_THROWS_AS(ate_trajectory(partial, gt), InsufficientMatchesError);
  partial.poses.push_back(gt.poses[50]);
  r = ate_trajectory(partial, gt);
  CHECK(r.items.size() == 3);
  CHECK(r.missing.size() == 97);
}

TEST_CASE("marker map ATE")
{
  std::mt19937_64 rng(2);
  const MarkerMap gt = random_map(rng, 100);
  const Pose g = oracle::random_pose(rng, 20.0);

  AteResult r = ate_marker_map(moved(gt, g), gt);
  CHECK(r.rotation_rmse < 1e-9);
  CHECK(r.translation_rmse < 1e-9);

  MarkerMap partial;
  for (int i = 0; i < 10; ++i)
    if (i != 3 && i != 7)
      partial.entries[i] = gt.entries.at(i);
  MarkerMap gt10;
  for (int i = 0; i < 10; ++i)
    gt10.entries[i] = gt.entries.at(i);
  r = ate_marker_map(partial, gt10);
  CHECK(r.items.size() == 8);
  REQUIRE(r.missing.size() == 2);
  CHECK(r.missing[0] == 3.0);
  CHECK(r.missing[1] == 7.0);

  // Rotation jitter about random axes, angle ~ N(0, 0.5 deg).
  std::normal_distribution<double> a(0.0, 0.5 * pi / 180.0);
  MarkerMap est = gt;
  for (auto &[id, e] : est.entries)
    e.world_from_marker.rotation =
        e.world_from_marker.rotation *
        Eigen::AngleAxisd(a(rng), oracle::random_rotation(rng).col(0)).toRotationMatrix();
  r = ate_marker_map(moved(est, g), gt);
  CHECK(r.rotation_rmse == doctest::Approx(0.5).epsilon(0.25));
  CHECK(r.translation_rmse < 1e-9);
  const AteResult unmoved = ate_marker_map(est, gt);
  CHECK(std::abs(r.rotation_rmse - unmoved.rotation_rmse) < 1e-9);

  MarkerMap two;
  two.entries[0] = gt.entries.at(0);
  two.entries[1] = gt.entries.at(1);
  CHECK_THROWS_AS(ate_marker_map(two, gt), InsufficientMatchesError);
}

TEST_CASE("ATE report")
{
  std::mt19937_64 rng(3);
  const Trajectory gt = random_trajectory(rng, 5);
  const nlohmann::json j = ate_to_json(ate_trajectory(gt, gt));
  const nlohmann::json back = nlohmann::json::parse(j.dump());
  CHECK(back == j);
  CHECK(back.contains("rotation_rmse_deg"));
  CHECK(back.contains("translation_rmse_m"));
  CHECK(back["matched"] == 5);
}

TEST_CASE("assertion files")
{
  TempDir dir;
  const auto p = dir.write("a.txt", "# thresholds\n\nmarker_rot < 1.5\ncamera_trans<0.15\nrot < 0.1  # both\n");
  const auto a = read_assertions(p);
  REQUIRE(a.size() == 3);
  CHECK(a[0].metric == "marker_rot");
  CHECK(a[0].bound == 1.5);
  CHECK(a[0].line == 3);
  CHECK(a[1].metric == "camera_trans");
  CHECK(a[1].bound == 0.15);
  CHECK(a[2].metric == "rot");
  CHECK(a[2].line == 5);

  try {
    read_assertions(dir.write("b.txt", "trans < 0.1\nmarker_speed < 3\n"));
    FAIL("expected ParseError");
  } catch (const ParseError &e) {
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(read_assertions(dir.write("c.txt", "trans > 0.1\n")), ParseError);
  CHECK_THROWS_AS(read_assertions(dir.write("d.txt", "trans < abc\n")), ParseError);
}
