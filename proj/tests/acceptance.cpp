// Acceptance suite: one PASS/FAIL line per criterion. Arguments select a
// subset of criteria by number; no arguments runs all of them.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numbers>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "markersfm/evaluation.hpp"
#include "markersfm/optimizer.hpp"
#include "markersfm/pipeline.hpp"
#include "markersfm/simulator.hpp"
#include "jacobian_oracle.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"

using namespace markersfm;
using std::numbers::pi;

namespace {

struct Outcome
{
  bool pass = false;
  std::string detail;
};

std::string fmt(const char *f, auto... args)
{
  char buf[1024];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

struct Simulated
{
  sim::Scene scene;
  Trajectory gt;
  CameraRig rig;
  Dataset dataset;
};

Simulated simulate(const sim::ScenarioSpec &spec, sim::RigPreset rig, double sigma,
                   std::uint64_t noise_seed)
{
  Simulated s;
  s.rig = sim::make_rig(rig, sim::default_intrinsics());
  s.scene = sim::generate_scene(spec.scene);
  s.gt = sim::generate_trajectory(spec.trajectory, s.scene, s.rig);
  sim::NoiseSpec noise;
  noise.pixel_sigma = sigma;
  noise.seed = noise_seed;
  s.dataset = sim::render_detections(s.scene, s.gt, s.rig, noise);
  return s;
}

Simulated simulate(const std::string &preset, std::uint64_t seed, sim::RigPreset rig,
                   double sigma)
{
  return simulate(*sim::preset(preset, seed), rig, sigma, seed + 2);
}

/// The global graph the pipeline minimizes, rebuilt from its outputs.
FactorGraph graph_of(const RunResult &r, const Dataset &d, const PipelineConfig &config)
{
  FactorGraph g(config.huber_delta);
  for (const auto &[id, e] : r.map.entries)
    g.add_variable(VariableId::marker(id), inverse(e.world_from_marker));
  std::map<double, int> station_at;
  for (const auto &s : d.stations)
    station_at[s.timestamp] = s.index;
  for (const auto &e : r.trajectory.poses)
    g.add_variable(VariableId::group(station_at.at(e.timestamp)), inverse(e.world_from_group),
                   e.timestamp == r.trajectory.poses.front().timestamp);
  for (const auto &s : d.stations) {
    if (!g.has_variable(VariableId::group(s.index)))
      continue;
    for (const auto &o : prepare_observations(s, d.markers, d.rig, config.weight_params)) {
      if (!o.pnp || !g.has_variable(VariableId::marker(o.detection.marker_id)))
        continue;
      const auto tmpl = marker_corners(d.markers.at(o.detection.marker_id));
      for (int c = 0; c < 4; ++c) {
        CornerFactor f;
        f.group_var = VariableId::group(s.index);
        f.marker_var = VariableId::marker(o.detection.marker_id);
        f.camera_index = o.detection.camera;
        f.corner_index = c;
        f.measurement = o.detection.corners_px[size_t(c)];
        f.weight = o.weight;
        f.marker_corner = tmpl.corners[size_t(c)];
        f.intrinsics = d.rig.cameras[size_t(o.detection.camera)].intrinsics;
        f.camera_from_group = camera_from_group(d.rig, size_t(o.detection.camera));
        g.add_factor(f);
      }
    }
  }
  return g;
}

Outcome jacobians()
{
  const Intrinsics k = sim::default_intrinsics();
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const auto r = oracle::random_factor(rng, k);
    const Mat26 fm = oracle::central_difference([&](const Twist &d) {
      return residual(r.f, r.group_from_world, perturb_left(r.marker_from_world, d));
    });
    const Mat26 fg = oracle::central_difference([&](const Twist &d) {
      return residual(r.f, perturb_left(r.group_from_world, d), r.marker_from_world);
    });
    worst = std::max(
        {worst,
         oracle::relative_error(jacobian_marker(r.f, r.group_from_world, r.marker_from_world), fm),
         oracle::relative_error(jacobian_group(r.f, r.group_from_world, r.marker_from_world), fg)});
  }
  return {worst < 1e-5, fmt("max relative error %.2e over 10000 factors", worst)};
}

Outcome zero_noise()
{
  auto spec = *sim::preset("room1", 1);
  spec.scene.auto_mode->count = 20;
  spec.trajectory.station_count = 20;
  const Simulated s = simulate(spec, sim::RigPreset::CG120, 0.0, 3);
  const RunResult r = run_incremental(s.dataset, PipelineConfig{});
  const AteResult m = ate_marker_map(r.map, s.scene.ground_truth);
  const AteResult c = ate_trajectory(r.trajectory, s.gt);
  const bool pass = m.translation_rmse < 1e-4 && c.translation_rmse < 1e-4 &&
                    m.rotation_rmse < 0.01 && c.rotation_rmse < 0.01 &&
                    m.items.size() == 20 && c.items.size() == 20;
  return {pass, fmt("marker %.2e m %.2e deg, camera %.2e m %.2e deg (%zu markers, %zu stations)",
                    m.translation_rmse, m.rotation_rmse, c.translation_rmse, c.rotation_rmse,
                    m.items.size(), c.items.size())};
}

Outcome room_accuracy()
{
  const Simulated s = simulate("room1", 1, sim::RigPreset::CG120, 0.3);
  const RunResult r = run_incremental(s.dataset, PipelineConfig{});
  const AteResult m = ate_marker_map(r.map, s.scene.ground_truth);
  const AteResult c = ate_trajectory(r.trajectory, s.gt);
  const bool pass = m.translation_rmse <= 0.15 && m.rotation_rmse <= 1.5 &&
                    c.translation_rmse <= 0.15 && m.missing.empty();
  return {pass, fmt("marker %.4f m %.3f deg, camera %.4f m (%zu stations)", m.translation_rmse,
                    m.rotation_rmse, c.translation_rmse, c.items.size())};
}

Outcome mixed_sizes()
{
  const Simulated s = simulate("calib", 1, sim::RigPreset::CG120, 0.3);
  const RunResult r = run_incremental(s.dataset, PipelineConfig{});
  const AteResult m = ate_marker_map(r.map, s.scene.ground_truth);
  std::set<double> sizes;
  for (const auto &[id, spec] : s.scene.registry)
    sizes.insert(spec.side_length);
  const bool pass = r.report.failed_stations.empty() && m.rotation_rmse <= 1.5 && sizes.size() == 3;
  return {pass, fmt("%zu failed stations, marker %.3f deg %.4f m, %zu sizes",
                    r.report.failed_stations.size(), m.rotation_rmse, m.translation_rmse,
                    sizes.size())};
}

Outcome rig_vs_mono()
{
  // One global solve per capture instant in both runs: the rig solves once
  // per station, the monocular run once per three images.
  PipelineConfig mono_config;
  mono_config.batch_size = 3;
  int wins = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Simulated s = simulate("warehouse", seed, sim::RigPreset::CG120, 0.3);
    const Trajectory cameras_gt = sim::expand_to_cameras(s.gt, s.rig);
    const RunResult rig = run_incremental(s.dataset, PipelineConfig{});
    const double rig_ate =
        ate_trajectory(sim::expand_to_cameras(rig.trajectory, s.rig), cameras_gt).translation_rmse;
    const sim::MonocularView view = sim::split_to_monocular(s.dataset, s.gt);
    const RunResult mono = run_incremental(view.dataset, mono_config);
    const double mono_ate = ate_trajectory(mono.trajectory, view.ground_truth).translation_rmse;
    wins += rig_ate < mono_ate;
    detail += fmt("%s%.4f/%.4f", seed == 1 ? "" : ", ", rig_ate, mono_ate);
  }
  return {wins >= 4, fmt("cg120 beats mono in %d/5 seeds (camera ATE m, cg120/mono: %s)", wins,
                         detail.c_str())};
}

sim::ScenarioSpec oblique_corridor(std::uint64_t seed)
{
  // Markers on the long walls, seen mostly down the corridor.
  sim::ScenarioSpec spec;
  spec.scene.room = Vec3(30, 5, 3);
  sim::AutoPlacement a;
  a.count = 80;
  a.sizes = {0.1, 0.2};
  a.seed = seed;
  a.z_min = 0.8;
  a.z_max = 2.2;
  spec.scene.auto_mode = a;
  spec.trajectory.waypoints = {Vec3(2, 2.5, 1.5), Vec3(28, 2.5, 1.5)};
  spec.trajectory.closed = false;
  spec.trajectory.station_count = 60;
  spec.trajectory.look_at = sim::LookAt::Tangent;
  spec.trajectory.yaw_jitter = 0.3;
  spec.trajectory.pitch_jitter = 0.05;
  spec.trajectory.seed = seed + 1;
  return spec;
}

Outcome ablation()
{
  int wins = 0;
  bool complete = true;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Simulated s = simulate(oblique_corridor(seed), sim::RigPreset::CG60, 0.3, seed + 2);
    double rmse[3];
    for (int w = 0; w < 3; ++w) {
      PipelineConfig config;
      config.weight_params = *WeightParams::preset(w == 0 ? "L" : "L_all");
      if (w == 2)
        config.weight_params.ambiguity_sign = +1;
      const RunResult r = run_incremental(s.dataset, config);
      complete = complete && r.report.failed_stations.empty();
      rmse[w] = ate_marker_map(r.map, s.scene.ground_truth).rotation_rmse;
    }
    wins += rmse[1] <= rmse[0];
    detail += fmt("%s%.3f/%.3f/%.3f", seed == 1 ? "" : ", ", rmse[0], rmse[1], rmse[2]);
  }
  return {wins >= 4 && complete,
          fmt("L_all <= L in %d/5 seeds (marker rot deg, L/L_all/L_all with sign +1: %s)", wins,
              detail.c_str())};
}

Outcome localization()
{
  const Simulated map = simulate("room1", 1, sim::RigPreset::CG120, 0.0);
  auto query_spec = *sim::preset("room1", 1);
  query_spec.trajectory.station_count = 100;
  query_spec.trajectory.seed = 77;
  Simulated q;
  q.rig = map.rig;
  q.scene = map.scene;
  q.gt = sim::generate_trajectory(query_spec.trajectory, q.scene, q.rig);
  sim::NoiseSpec noise;
  noise.pixel_sigma = 0.5;
  noise.seed = 78;
  q.dataset = sim::render_detections(q.scene, q.gt, q.rig, noise);

  const LocalizeResult r = localize_all(map.scene.ground_truth, q.dataset, PipelineConfig{});
  std::map<double, Pose> truth;
  for (const auto &e : q.gt.poses)
    truth[e.timestamp] = e.world_from_group;
  std::vector<double> trans, rot;
  for (const auto &e : r.trajectory.poses) {
    const Pose &t = truth.at(e.timestamp);
    trans.push_back((e.world_from_group.translation - t.translation).norm());
    rot.push_back(rotation_distance(e.world_from_group.rotation, t.rotation) * 180.0 / pi);
  }
  int covered_failures = 0;
  for (int f : r.failed)
    for (const auto &s : q.dataset.stations)
      if (s.index == f) {
        std::set<int> ids;
        for (const auto &d : s.detections)
          ids.insert(d.marker_id);
        covered_failures += ids.size() >= 2;
      }
  const auto median = [](std::vector<double> v) {
    std::nth_element(v.begin(), v.begin() + long(v.size() / 2), v.end());
    return v[v.size() / 2];
  };
  if (trans.empty())
    return {false, "no station localized"};
  const double mt = median(trans), mr = median(rot);
  return {q.gt.size() == 100 && mt < 0.02 && mr < 0.3 && covered_failures == 0,
          fmt("median %.4f m %.4f deg over %zu stations, %zu failed (%d with >= 2 markers)", mt,
              mr, trans.size(), r.failed.size(), covered_failures)};
}

Outcome determinism()
{
  TempDir a, b;
  for (const TempDir *dir : {&a, &b}) {
    const Simulated s = simulate("room1", 5, sim::RigPreset::CG120, 0.3);
    const RunResult r = run_incremental(s.dataset, PipelineConfig{});
    write_map(r.map, *dir / "map.json");
    write_tum(r.trajectory, *dir / "traj.tum");
  }
  const bool map_same = read_file(a / "map.json") == read_file(b / "map.json");
  const bool traj_same = read_file(a / "traj.tum") == read_file(b / "traj.tum");
  return {map_same && traj_same && !read_file(a / "map.json").empty(),
          fmt("map.json %s, traj.tum %s", map_same ? "identical" : "differs",
              traj_same ? "identical" : "differs")};
}

Outcome gauge()
{
  const Simulated s = simulate("room1", 1, sim::RigPreset::CG120, 0.3);
  const PipelineConfig config;
  const RunResult r = run_incremental(s.dataset, config);
  const FactorGraph g = graph_of(r, s.dataset, config);

  std::mt19937_64 rng(9);
  double worst_cost = 0.0, worst_ate = 0.0;
  const double cost = total_cost(g);
  const AteResult m0 = ate_marker_map(r.map, s.scene.ground_truth);
  const AteResult c0 = ate_trajectory(r.trajectory, s.gt);
  for (int trial = 0; trial < 10; ++trial) {
    const Pose t = oracle::random_pose(rng, 50.0);
    FactorGraph moved = g;
    for (const auto &[id, var] : g.variables())
      moved.set_estimate(id, var.estimate * inverse(t));
    worst_cost = std::max(worst_cost, std::abs(total_cost(moved) - cost) / cost);

    MarkerMap map = r.map;
    for (auto &[id, e] : map.entries)
      e.world_from_marker = t * e.world_from_marker;
    Trajectory traj = r.trajectory;
    for (auto &e : traj.poses)
      e.world_from_group = t * e.world_from_group;
    const AteResult m = ate_marker_map(map, s.scene.ground_truth);
    const AteResult c = ate_trajectory(traj, s.gt);
    worst_ate = std::max({worst_ate, std::abs(m.rotation_rmse - m0.rotation_rmse),
                          std::abs(m.translation_rmse - m0.translation_rmse),
                          std::abs(c.rotation_rmse - c0.rotation_rmse),
                          std::abs(c.translation_rmse - c0.translation_rmse)});
  }
  const bool matches_run = std::abs(cost - r.report.final_cost) <= 1e-9 * cost;
  return {worst_cost < 1e-9 && worst_ate < 1e-9 && matches_run,
          fmt("relative cost change %.2e, ATE change %.2e, rebuilt cost %s the run's", worst_cost,
              worst_ate, matches_run ? "matches" : "differs from")};
}

}  // namespace

int main(int argc, char **argv)
{
  struct Criterion
  {
    const char *name;
    std::function<Outcome()> run;
    double max_seconds;  ///< 0: unbounded
  };
  const std::vector<Criterion> criteria{
      {"analytic jacobians match finite differences", jacobians, 10},
      {"zero-noise reconstruction is exact", zero_noise, 60},
      {"room1 cg120 accuracy", room_accuracy, 600},
      {"mixed marker sizes", mixed_sizes, 0},
      {"camera group beats monocular", rig_vs_mono, 0},
      {"weighting ablation", ablation, 0},
      {"standalone localization", localization, 0},
      {"determinism", determinism, 0},
      {"gauge invariance", gauge, 0},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i)
    selected.insert(std::atoi(argv[i]));

  int failed = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    const int n = int(i) + 1;
    if (!selected.empty() && !selected.count(n))
      continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].run();
    } catch (const std::exception &e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const double limit = criteria[i].max_seconds;
    if (limit > 0 && secs >= limit) {
      o.pass = false;
      o.detail += fmt(", over the %.0f s budget", limit);
    }
    std::printf("%s %d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", n, criteria[i].name,
                o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
