// Command line front end: map, localize, simulate, eval.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "markersfm/errors.hpp"
#include "markersfm/evaluation.hpp"
#include "markersfm/pipeline.hpp"
#include "markersfm/scene_data.hpp"
#include "markersfm/simulator.hpp"

namespace fs = std::filesystem;
using namespace markersfm;

namespace {

// Exit codes.
constexpr int kOk = 0;
constexpr int kAssertionFailed = 1;
constexpr int kInputError = 2;
constexpr int kEvaluationError = 3;

void write_json(const nlohmann::json &j, const fs::path &path)
{
  if (path.has_parent_path())
    fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out)
    throw IoError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

struct MapArgs
{
  std::string detections, rig, markers, config, out_map, out_traj, out_report, out_ply;
  std::string weights = "custom";
};

int run_map(const MapArgs &a)
{
  PipelineConfig config = a.config.empty() ? PipelineConfig{} : read_config(a.config);
  if (a.weights != "custom")
    config.weight_params = *WeightParams::preset(a.weights);
  const Dataset dataset = load_dataset({a.detections, a.rig, a.markers});
  const RunResult result = run_incremental(dataset, config);
  write_map(result.map, a.out_map);
  write_tum(result.trajectory, a.out_traj);
  if (!a.out_report.empty())
    write_json(report_to_json(result.report, config), a.out_report);
  if (!a.out_ply.empty())
    write_ply(result.map, a.out_ply);
  std::printf("markers %zu, stations %d localized, %zu failed, final cost %.6g, rms %.4f px\n",
              result.map.size(), result.report.localized, result.report.failed_stations.size(),
              result.report.final_cost, result.report.residual_rms_px);
  return kOk;
}

struct LocalizeArgs
{
  std::string map, rig, markers, detections, config, out_traj;
};

int run_localize(const LocalizeArgs &a)
{
  const PipelineConfig config = a.config.empty() ? PipelineConfig{} : read_config(a.config);
  const MarkerMap map = read_map(a.map);
  const Dataset queries = load_dataset({a.detections, a.rig, a.markers});
  const LocalizeResult result = localize_all(map, queries, config);
  write_tum(result.trajectory, a.out_traj);
  std::printf("localized %zu stations, %zu failed\n", result.trajectory.size(),
              result.failed.size());
  for (int s : result.failed)
    std::printf("  failed station %d\n", s);
  return kOk;
}

struct SimulateArgs
{
  std::string preset = "room1", rig = "cg120", out_dir;
  double noise_sigma = 0.0, dropout = 0.0;
  std::uint64_t seed = 0;
};

int run_simulate(const SimulateArgs &a)
{
  const auto scenario = sim::preset(a.preset, a.seed);
  const auto rig_preset = sim::rig_preset_from_string(a.rig);
  const CameraRig rig = sim::make_rig(*rig_preset, sim::default_intrinsics());
  const sim::Scene scene = sim::generate_scene(scenario->scene);
  const Trajectory gt = sim::generate_trajectory(scenario->trajectory, scene, rig);
  sim::NoiseSpec noise;
  noise.pixel_sigma = a.noise_sigma;
  noise.dropout = a.dropout;
  noise.seed = a.seed + 2;
  const Dataset dataset = sim::render_detections(scene, gt, rig, noise);

  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  save_dataset(dataset, {dir / "detections.jsonl", dir / "rig.json", dir / "markers.json"});
  sim::export_ground_truth(scene, gt, dir);
  size_t detections = 0;
  for (const auto &s : dataset.stations)
    detections += s.detections.size();
  std::printf("%s: %zu markers, %zu stations, %zu detections -> %s\n", a.preset.c_str(),
              scene.registry.size(), gt.size(), detections, dir.string().c_str());
  return kOk;
}

struct EvalArgs
{
  std::string est_map, gt_map, est_traj, gt_traj, out_report, assert_file, dump_csv;
};

int run_eval(const EvalArgs &a)
{
  const auto t0 = std::chrono::steady_clock::now();
  if ((a.est_map.empty() != a.gt_map.empty()) || (a.est_traj.empty() != a.gt_traj.empty()) ||
      (a.est_map.empty() && a.est_traj.empty())) {
    std::cerr << "eval: give --est-map with --gt-map and/or --est-traj with --gt-traj\n";
    return kInputError;
  }

  std::vector<Assertion> assertions;
  std::optional<AteResult> marker, camera;
  try {
    if (!a.assert_file.empty())
      assertions = read_assertions(a.assert_file);
    if (!a.est_map.empty())
      marker = ate_marker_map(read_map(a.est_map), read_map(a.gt_map));
    if (!a.est_traj.empty())
      camera = ate_trajectory(read_tum(a.est_traj), read_tum(a.gt_traj));
  } catch (const InsufficientMatchesError &e) {
    std::cerr << "eval: " << e.what() << "\n";
    return kEvaluationError;
  } catch (const DegenerateAlignmentError &e) {
    std::cerr << "eval: " << e.what() << "\n";
    return kEvaluationError;
  }

  nlohmann::json report = nlohmann::json::object();
  if (marker)
    report["marker"] = ate_to_json(*marker);
  if (camera)
    report["camera"] = ate_to_json(*camera);

  nlohmann::json failures = nlohmann::json::array();
  const auto check = [&](const Assertion &as, const std::optional<AteResult> &r, bool rotation,
                         const char *name) {
    if (!r) {
      failures.push_back({{"assertion", as.metric}, {"line", as.line},
                          {"reason", std::string(name) + " inputs not given"}});
      return;
    }
    const double v = rotation ? r->rotation_rmse : r->translation_rmse;
    if (!(v < as.bound))
      failures.push_back({{"assertion", as.metric}, {"line", as.line}, {"value", v},
                          {"bound", as.bound}, {"metric", std::string(name) + (rotation ? "_rot" : "_trans")}});
  };
  for (const auto &as : assertions) {
    const bool rot = as.metric.ends_with("rot");
    const bool both = as.metric == "rot" || as.metric == "trans";
    if (as.metric.starts_with("marker") || (both && marker))
      check(as, marker, rot, "marker");
    if (as.metric.starts_with("camera") || (both && camera))
      check(as, camera, rot, "camera");
  }
  report["assertions_checked"] = assertions.size();
  report["assertion_failures"] = failures;
  report["seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!a.out_report.empty())
    write_json(report, a.out_report);

  if (!a.dump_csv.empty()) {
    std::ofstream csv(a.dump_csv);
    if (!csv)
      throw IoError("cannot write " + a.dump_csv);
    csv << "kind,key,rotation_deg,translation_m\n";
    csv.precision(17);
    for (const auto &[kind, r] : {std::pair("marker", &marker), std::pair("camera", &camera)})
      if (*r)
        for (const auto &e : (*r)->items)
          csv << kind << "," << e.key << "," << e.rotation_deg << "," << e.translation_m << "\n";
  }

  if (marker)
    std::printf("marker ATE: rotation %.6f deg, translation %.6f m (%zu matched, %zu missing)\n",
                marker->rotation_rmse, marker->translation_rmse, marker->items.size(),
                marker->missing.size());
  if (camera)
    std::printf("camera ATE: rotation %.6f deg, translation %.6f m (%zu matched, %zu missing)\n",
                camera->rotation_rmse, camera->translation_rmse, camera->items.size(),
                camera->missing.size());
  for (const auto &f : failures)
    std::printf("FAILED assertion line %d: %s\n", f["line"].get<int>(), f.dump().c_str());
  return failures.empty() ? kOk : kAssertionFailed;
}

}  // namespace

int main(int argc, char **argv)
{
  CLI::App app{"Marker-based structure from motion with camera groups"};
  app.require_subcommand(1);

  MapArgs map_args;
  auto *map = app.add_subcommand("map", "Build a marker map and trajectory from detections");
  map->add_option("--detections", map_args.detections)->required()->check(CLI::ExistingFile);
  map->add_option("--rig", map_args.rig)->required()->check(CLI::ExistingFile);
  map->add_option("--markers", map_args.markers)->required()->check(CLI::ExistingFile);
  map->add_option("--config", map_args.config)->check(CLI::ExistingFile);
  map->add_option("--out-map", map_args.out_map)->required();
  map->add_option("--out-traj", map_args.out_traj)->required();
  map->add_option("--out-report", map_args.out_report);
  map->add_option("--out-ply", map_args.out_ply);
  map->add_option("--weights", map_args.weights)
      ->check(CLI::IsMember({"L", "L_d", "L_dtheta", "L_all", "custom"}));

  LocalizeArgs loc_args;
  auto *loc = app.add_subcommand("localize", "Localize query stations against a frozen map");
  loc->add_option("--map", loc_args.map)->required()->check(CLI::ExistingFile);
  loc->add_option("--rig", loc_args.rig)->required()->check(CLI::ExistingFile);
  loc->add_option("--markers", loc_args.markers)->required()->check(CLI::ExistingFile);
  loc->add_option("--detections", loc_args.detections)->required()->check(CLI::ExistingFile);
  loc->add_option("--config", loc_args.config)->check(CLI::ExistingFile);
  loc->add_option("--out-traj", loc_args.out_traj)->required();

  SimulateArgs sim_args;
  auto *simulate = app.add_subcommand("simulate", "Generate a synthetic dataset");
  simulate->add_option("--preset", sim_args.preset)
      ->check(CLI::IsMember({"room1", "room2", "corridor", "warehouse", "pool", "calib"}));
  simulate->add_option("--rig", sim_args.rig)
      ->check(CLI::IsMember({"mono", "cg60", "cg120", "cg180"}));
  simulate->add_option("--noise-sigma", sim_args.noise_sigma)->check(CLI::NonNegativeNumber);
  simulate->add_option("--dropout", sim_args.dropout)->check(CLI::Range(0.0, 1.0));
  simulate->add_option("--seed", sim_args.seed);
  simulate->add_option("--out-dir", sim_args.out_dir)->required();

  EvalArgs eval_args;
  auto *eval = app.add_subcommand("eval", "Absolute trajectory and map errors");
  eval->add_option("--est-map", eval_args.est_map)->check(CLI::ExistingFile);
  eval->add_option("--gt-map", eval_args.gt_map)->check(CLI::ExistingFile);
  eval->add_option("--est-traj", eval_args.est_traj)->check(CLI::ExistingFile);
  eval->add_option("--gt-traj", eval_args.gt_traj)->check(CLI::ExistingFile);
  eval->add_option("--out-report", eval_args.out_report);
  eval->add_option("--assert", eval_args.assert_file)->check(CLI::ExistingFile);
  eval->add_option("--dump-csv", eval_args.dump_csv);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? kOk : kInputError;
  }

  try {
    if (*map)
      return run_map(map_args);
    if (*loc)
      return run_localize(loc_args);
    if (*simulate)
      return run_simulate(sim_args);
    return run_eval(eval_args);
  } catch (const Error &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  }
}
