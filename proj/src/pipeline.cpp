#include "markersfm/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "markersfm/errors.hpp"

namespace markersfm {

using nlohmann::json;

bool PipelineConfig::valid() const
{
  return weight_params.valid() && huber_delta > 0.0 && min_markers_for_localization >= 1 &&
         deferral_limit >= 0 && batch_size >= 1 && solver.max_iters > 0 &&
         solver.rel_cost_tol >= 0.0 && solver.step_tol >= 0.0 && solver.initial_damping > 0.0;
}

namespace {

constexpr const char *kConfigSource = "<config>";

json number_or_null(double v)
{
  return std::isfinite(v) ? json(v) : json(nullptr);
}

double read_number(const json &obj, const char *key, double fallback)
{
  if (!obj.contains(key))
    return fallback;
  const json &v = obj.at(key);
  if (v.is_null())
    return std::numeric_limits<double>::infinity();
  if (!v.is_number())
    throw ParseError(kConfigSource, 0, std::string("'") + key + "' must be a number");
  return v.get<double>();
}

int read_int(const json &obj, const char *key, int fallback)
{
  if (!obj.contains(key))
    return fallback;
  const json &v = obj.at(key);
  if (!v.is_number_integer())
    throw ParseError(kConfigSource, 0, std::string("'") + key + "' must be an integer");
  return v.get<int>();
}

void reject_unknown(const json &obj, std::initializer_list<const char *> keys)
{
  for (const auto &[k, v] : obj.items())
    if (std::none_of(keys.begin(), keys.end(), [&](const char *key) { return k == key; }))
      throw ParseError(kConfigSource, 0, "unknown key '" + k + "'");
}

Pose group_from_camera_pose(const CameraRig &rig, int camera)
{
  return rig.cameras.at(size_t(camera)).group_from_camera;
}

void add_observation_factors(FactorGraph &graph, const CameraRig &rig, const MarkerRegistry &markers,
                             const Observation &obs, VariableId group_var)
{
  const Detection &d = obs.detection;
  const MarkerTemplate tmpl = marker_corners(markers.at(d.marker_id));
  const Pose c_from_g = camera_from_group(rig, size_t(d.camera));
  for (int c = 0; c < 4; ++c) {
    CornerFactor f;
    f.group_var = group_var;
    f.marker_var = VariableId::marker(d.marker_id);
    f.camera_index = d.camera;
    f.corner_index = c;
    f.measurement = d.corners_px[size_t(c)];
    f.weight = obs.weight;
    f.marker_corner = tmpl.corners[size_t(c)];
    f.intrinsics = rig.cameras[size_t(d.camera)].intrinsics;
    f.camera_from_group = c_from_g;
    graph.add_factor(f);
  }
}

// Lowest planar error per marker id; ties go to the lower camera index.
std::map<int, const Observation *> best_per_marker(const std::vector<Observation> &observations)
{
  std::map<int, const Observation *> best;
  for (const auto &o : observations) {
    if (!o.pnp)
      continue;
    auto [it, inserted] = best.emplace(o.detection.marker_id, &o);
    if (inserted)
      continue;
    const Observation &cur = *it->second;
    const double a = o.pnp->best.reproj_error, b = cur.pnp->best.reproj_error;
    if (a < b || (a == b && o.detection.camera < cur.detection.camera))
      it->second = &o;
  }
  return best;
}

// Robust cost of one factor; a corner behind the camera rules the pose out.
double factor_cost(const CornerFactor &f, const Pose &group_from_world,
                   const Pose &marker_from_world, double delta)
{
  try {
    const Vec2 r = residual(f, group_from_world, marker_from_world);
    return huber(f.weight * r.squaredNorm(), delta);
  } catch (const BehindCameraError &) {
    return std::numeric_limits<double>::infinity();
  }
}

void record_sightings(MapState &state, const std::vector<Observation> &observations, int station)
{
  for (const auto &o : observations)
    if (o.pnp)
      state.sightings[o.detection.marker_id].push_back(
          {station, o.detection.camera,
           {o.pnp->best.camera_from_marker, o.pnp->alternate.camera_from_marker}});
}

void reseed_markers(MapState &state, const std::set<int> &ids)
{
  FactorGraph &g = state.graph;
  std::map<int, std::vector<const CornerFactor *>> by_marker;
  for (const auto &f : g.factors())
    if (ids.count(f.marker_var.index))
      by_marker[f.marker_var.index].push_back(&f);

  for (const auto &[id, factors] : by_marker) {
    const VariableId var = VariableId::marker(id);
    const auto cost_of = [&](const Pose &marker_from_world) {
      double c = 0.0;
      for (const CornerFactor *f : factors)
        c += factor_cost(*f, g.estimate(f->group_var), marker_from_world, g.robust_delta());
      return c;
    };
    Pose best = g.estimate(var);
    double best_cost = cost_of(best);
    for (const auto &s : state.sightings[id]) {
      const VariableId group = VariableId::group(s.station);
      if (!g.has_variable(group))
        continue;
      const Pose world_from_camera =
          inverse(g.estimate(group)) * group_from_camera_pose(state.rig, s.camera);
      for (const Pose &p : s.camera_from_marker) {
        const Pose candidate = inverse(world_from_camera * p);
        const double c = cost_of(candidate);
        if (c < best_cost) {
          best_cost = c;
          best = candidate;
        }
      }
    }
    g.set_estimate(var, best);
  }
}

const Station *find_station(const Dataset &dataset, int index)
{
  for (const auto &s : dataset.stations)
    if (s.index == index)
      return &s;
  return nullptr;
}

}  // namespace

json config_to_json(const PipelineConfig &c)
{
  const WeightParams &w = c.weight_params;
  return {
      {"weight_params",
       {{"lambda1", w.lambda1},
        {"lambda2", w.lambda2},
        {"lambda3", w.lambda3},
        {"epsilon", w.epsilon},
        {"d_max", w.d_max},
        {"theta_max", w.theta_max},
        {"ambiguity_sign", w.ambiguity_sign}}},
      {"solver",
       {{"max_iters", c.solver.max_iters},
        {"rel_cost_tol", c.solver.rel_cost_tol},
        {"step_tol", c.solver.step_tol},
        {"initial_damping", c.solver.initial_damping}}},
      {"huber_delta", number_or_null(c.huber_delta)},
      {"min_markers_for_localization", c.min_markers_for_localization},
      {"deferral_limit", c.deferral_limit},
      {"batch_size", c.batch_size},
      {"resolve_ambiguity", c.resolve_ambiguity},
  };
}

PipelineConfig config_from_json(const json &j)
{
  if (!j.is_object())
    throw ParseError(kConfigSource, 0, "config must be an object");
  reject_unknown(j, {"weight_params", "weights", "solver", "huber_delta",
                     "min_markers_for_localization", "deferral_limit", "batch_size",
                     "resolve_ambiguity"});
  PipelineConfig c;
  if (j.contains("weights")) {
    if (!j.at("weights").is_string())
      throw ParseError(kConfigSource, 0, "'weights' must be a preset name");
    const auto p = WeightParams::preset(j.at("weights").get<std::string>());
    if (!p)
      throw ParseError(kConfigSource, 0, "unknown weight preset '" +
                                             j.at("weights").get<std::string>() + "'");
    c.weight_params = *p;
  }
  if (j.contains("weight_params")) {
    const json &w = j.at("weight_params");
    if (!w.is_object())
      throw ParseError(kConfigSource, 0, "'weight_params' must be an object");
    reject_unknown(w, {"lambda1", "lambda2", "lambda3", "epsilon", "d_max", "theta_max",
                       "ambiguity_sign"});
    WeightParams &p = c.weight_params;
    p.lambda1 = read_number(w, "lambda1", p.lambda1);
    p.lambda2 = read_number(w, "lambda2", p.lambda2);
    p.lambda3 = read_number(w, "lambda3", p.lambda3);
    p.epsilon = read_number(w, "epsilon", p.epsilon);
    p.d_max = read_number(w, "d_max", p.d_max);
    p.theta_max = read_number(w, "theta_max", p.theta_max);
    p.ambiguity_sign = read_int(w, "ambiguity_sign", p.ambiguity_sign);
  }
  if (j.contains("solver")) {
    const json &s = j.at("solver");
    if (!s.is_object())
      throw ParseError(kConfigSource, 0, "'solver' must be an object");
    reject_unknown(s, {"max_iters", "rel_cost_tol", "step_tol", "initial_damping"});
    c.solver.max_iters = read_int(s, "max_iters", c.solver.max_iters);
    c.solver.rel_cost_tol = read_number(s, "rel_cost_tol", c.solver.rel_cost_tol);
    c.solver.step_tol = read_number(s, "step_tol", c.solver.step_tol);
    c.solver.initial_damping = read_number(s, "initial_damping", c.solver.initial_damping);
  }
  c.huber_delta = read_number(j, "huber_delta", c.huber_delta);
  c.min_markers_for_localization =
      read_int(j, "min_markers_for_localization", c.min_markers_for_localization);
  c.deferral_limit = read_int(j, "deferral_limit", c.deferral_limit);
  c.batch_size = read_int(j, "batch_size", c.batch_size);
  if (j.contains("resolve_ambiguity")) {
    if (!j.at("resolve_ambiguity").is_boolean())
      throw ParseError(kConfigSource, 0, "'resolve_ambiguity' must be a boolean");
    c.resolve_ambiguity = j.at("resolve_ambiguity").get<bool>();
  }
  if (!c.valid())
    throw ParseError(kConfigSource, 0, "config values out of range");
  return c;
}

PipelineConfig read_config(const std::filesystem::path &path)
{
  std::ifstream in(path);
  if (!in)
    throw IoError("cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error &e) {
    throw ParseError(path.string(), 0, e.what());
  }
  try {
    return config_from_json(j);
  } catch (const ParseError &e) {
    throw ParseError(path.string(), 0, e.what());
  }
}

std::vector<Observation> prepare_observations(const Station &station,
                                              const MarkerRegistry &markers,
                                              const CameraRig &rig, const WeightParams &weights)
{
  std::vector<Observation> out;
  out.reserve(station.detections.size());
  for (const auto &d : station.detections) {
    Observation o{d, std::nullopt, 0.0};
    const MarkerTemplate tmpl = marker_corners(markers.at(d.marker_id));
    try {
      o.pnp = solve_planar_pnp(d.corners_px, tmpl, rig.cameras.at(size_t(d.camera)).intrinsics);
      o.weight = weight(observation_stats(*o.pnp, tmpl), weights);
    } catch (const DegenerateQuadError &) {
    } catch (const NoPositiveDepthError &) {
    } catch (const DivergenceError &) {
    }
    if (o.pnp && !(o.weight > 0.0))
      o.pnp.reset();
    out.push_back(o);
  }
  return out;
}

MarkerMap MapState::marker_map() const
{
  MarkerMap map;
  for (const auto &[id, var] : graph.variables())
    if (id.kind == VariableKind::MarkerPose)
      map.entries[id.index] = {inverse(var.estimate), markers.at(id.index).side_length};
  return map;
}

Trajectory MapState::trajectory() const
{
  std::vector<std::pair<double, int>> order;
  for (const auto &[station, t] : station_timestamps)
    order.emplace_back(t, station);
  std::sort(order.begin(), order.end());
  Trajectory traj;
  for (const auto &[t, station] : order)
    traj.poses.push_back({t, inverse(graph.estimate(VariableId::group(station)))});
  return traj;
}

int select_init_station(const Dataset &dataset)
{
  int best = -1;
  size_t best_count = 0;
  for (const auto &s : dataset.stations) {
    std::set<int> ids;
    for (const auto &d : s.detections)
      ids.insert(d.marker_id);
    if (ids.size() > best_count || (ids.size() == best_count && best_count > 0 && s.index < best)) {
      best_count = ids.size();
      best = s.index;
    }
  }
  if (best < 0)
    throw EmptyDatasetError("dataset contains no detections");
  return best;
}

MapState initialize_map(const Dataset &dataset, int station_index, const PipelineConfig &config)
{
  const Station *station = find_station(dataset, station_index);
  if (!station || station->detections.empty())
    throw EmptyDatasetError("initial station " + std::to_string(station_index) +
                            " has no detections");

  MapState state;
  state.graph = FactorGraph(config.huber_delta);
  state.rig = dataset.rig;
  state.markers = dataset.markers;
  state.init_station = station_index;

  const auto observations =
      prepare_observations(*station, dataset.markers, dataset.rig, config.weight_params);
  const auto best = best_per_marker(observations);
  if (best.empty())
    throw DegenerateQuadError("no detection of initial station " +
                              std::to_string(station_index) + " has a planar pose");

  const VariableId group = VariableId::group(station_index);
  state.graph.add_variable(group, Pose::identity(), true);
  for (const auto &[id, obs] : best) {
    const Pose world_from_marker = group_from_camera_pose(dataset.rig, obs->detection.camera) *
                                   obs->pnp->best.camera_from_marker;
    state.graph.add_variable(VariableId::marker(id), inverse(world_from_marker));
  }
  for (const auto &o : observations)
    if (o.pnp)
      add_observation_factors(state.graph, state.rig, state.markers, o, group);

  record_sightings(state, observations, station_index);
  solve(state.graph, config.solver);
  state.station_timestamps[station_index] = station->timestamp;
  state.processed.push_back(station_index);
  return state;
}

MarkerPartition classify_markers(const MapState &state, const Station &station)
{
  std::set<int> ids;
  for (const auto &d : station.detections)
    ids.insert(d.marker_id);
  MarkerPartition p;
  for (int id : ids)
    (state.graph.has_variable(VariableId::marker(id)) ? p.co_viewed : p.non_co_viewed)
        .push_back(id);
  return p;
}

MinReprojChoice select_min_reproj_marker(const std::vector<Observation> &observations,
                                         const MarkerMap &map)
{
  const Observation *best = nullptr;
  for (const auto &o : observations) {
    if (!o.pnp || !map.contains(o.detection.marker_id))
      continue;
    if (!best) {
      best = &o;
      continue;
    }
    const double a = o.pnp->best.reproj_error, b = best->pnp->best.reproj_error;
    const auto key = [](const Observation &x) {
      return std::pair(x.detection.marker_id, x.detection.camera);
    };
    if (a < b || (a == b && key(o) < key(*best)))
      best = &o;
  }
  if (!best)
    throw InsufficientCoviewError("no mapped marker with a planar pose in this station");
  return {best->detection.marker_id, best->detection.camera, *best->pnp};
}

Localization localize(const MarkerMap &map, const CameraRig &rig,
                      const std::vector<Observation> &observations, const PipelineConfig &config)
{
  std::set<int> co_viewed;
  for (const auto &o : observations)
    if (o.pnp && map.contains(o.detection.marker_id))
      co_viewed.insert(o.detection.marker_id);
  if (int(co_viewed.size()) < config.min_markers_for_localization)
    throw InsufficientCoviewError("station co-views " + std::to_string(co_viewed.size()) +
                                  " mapped markers, needs " +
                                  std::to_string(config.min_markers_for_localization));

  const MinReprojChoice anchor = select_min_reproj_marker(observations, map);
  const auto seed_from = [&](int marker_id, int camera, const Pose &camera_from_marker) {
    return map.entries.at(marker_id).world_from_marker * inverse(camera_from_marker) *
           camera_from_group(rig, size_t(camera));
  };
  const Pose world_from_group =
      seed_from(anchor.marker_id, anchor.camera, anchor.pnp.best.camera_from_marker);

  // Local graph: the mapped markers are constants, only the group moves.
  MarkerRegistry local_markers;
  FactorGraph local(config.huber_delta);
  const VariableId group = VariableId::group(0);
  local.add_variable(group, inverse(world_from_group));
  for (int id : co_viewed) {
    const MarkerMapEntry &e = map.entries.at(id);
    local.add_variable(VariableId::marker(id), inverse(e.world_from_marker), true);
    local_markers.add({id, e.side_length});
  }
  for (const auto &o : observations)
    if (o.pnp && co_viewed.count(o.detection.marker_id))
      add_observation_factors(local, rig, local_markers, o, group);

  int anchor_marker = anchor.marker_id;
  if (config.resolve_ambiguity) {
    const auto cost_of = [&](const Pose &group_from_world) {
      double c = 0.0;
      for (const auto &f : local.factors())
        c += factor_cost(f, group_from_world, local.estimate(f.marker_var), local.robust_delta());
      return c;
    };
    Pose best = inverse(world_from_group);
    double best_cost = cost_of(best);
    for (const auto &o : observations) {
      if (!o.pnp || !co_viewed.count(o.detection.marker_id))
        continue;
      for (const PnpSolution *sol : {&o.pnp->best, &o.pnp->alternate}) {
        const Pose candidate =
            inverse(seed_from(o.detection.marker_id, o.detection.camera, sol->camera_from_marker));
        const double c = cost_of(candidate);
        if (c < best_cost) {
          best_cost = c;
          best = candidate;
          anchor_marker = o.detection.marker_id;
        }
      }
    }
    local.set_estimate(group, best);
  }

  Localization out;
  out.report = solve(local, config.solver);
  out.world_from_group = inverse(local.estimate(group));
  out.anchor_marker = anchor_marker;
  out.co_viewed = int(co_viewed.size());
  return out;
}

Localization localize_station(const MapState &state, const Station &station,
                              const PipelineConfig &config)
{
  const auto observations =
      prepare_observations(station, state.markers, state.rig, config.weight_params);
  return localize(state.marker_map(), state.rig, observations, config);
}

namespace {

std::optional<SolveReport> update_with(MapState &state, const Station &station,
                                       const std::vector<Observation> &observations,
                                       const Pose &world_from_group, const PipelineConfig &config)
{
  const VariableId group = VariableId::group(station.index);
  state.graph.add_variable(group, inverse(world_from_group));
  for (const auto &[id, obs] : best_per_marker(observations)) {
    const VariableId var = VariableId::marker(id);
    if (state.graph.has_variable(var))
      continue;
    const Pose world_from_marker = world_from_group *
                                   group_from_camera_pose(state.rig, obs->detection.camera) *
                                   obs->pnp->best.camera_from_marker;
    state.graph.add_variable(var, inverse(world_from_marker));
  }
  std::set<int> seen;
  for (const auto &o : observations)
    if (o.pnp) {
      add_observation_factors(state.graph, state.rig, state.markers, o, group);
      seen.insert(o.detection.marker_id);
    }
  record_sightings(state, observations, station.index);
  if (config.resolve_ambiguity)
    reseed_markers(state, seen);
  state.station_timestamps[station.index] = station.timestamp;
  state.processed.push_back(station.index);

  if (++state.pending_updates < config.batch_size)
    return std::nullopt;
  state.pending_updates = 0;
  return solve(state.graph, config.solver);
}

}  // namespace

std::optional<SolveReport> update_map(MapState &state, const Station &station,
                                      const Pose &world_from_group, const PipelineConfig &config)
{
  const auto observations =
      prepare_observations(station, state.markers, state.rig, config.weight_params);
  return update_with(state, station, observations, world_from_group, config);
}

RunResult run_incremental(const Dataset &dataset, const PipelineConfig &config)
{
  if (!config.valid())
    throw std::invalid_argument("invalid pipeline config");
  const auto t0 = std::chrono::steady_clock::now();

  const int init = select_init_station(dataset);
  MapState state = initialize_map(dataset, init, config);

  RunReport report;
  report.init_station = init;
  report.events.push_back({init, "init", 0, ""});

  std::vector<const Station *> queue;
  for (const auto &s : dataset.stations)
    if (s.index != init)
      queue.push_back(&s);

  for (int pass = 0; pass <= config.deferral_limit && !queue.empty(); ++pass) {
    std::vector<const Station *> deferred;
    for (const Station *s : queue) {
      const auto observations =
          prepare_observations(*s, state.markers, state.rig, config.weight_params);
      Localization loc;
      try {
        loc = localize(state.marker_map(), state.rig, observations, config);
      } catch (const Error &e) {
        deferred.push_back(s);
        report.events.push_back({s->index, "deferred", pass, e.what()});
        continue;
      }
      const FactorGraph backup = state.graph;
      const auto backup_processed = state.processed;
      const auto backup_timestamps = state.station_timestamps;
      const auto backup_sightings = state.sightings;
      try {
        if (update_with(state, *s, observations, loc.world_from_group, config))
          ++report.global_solves;
      } catch (const Error &e) {
        state.graph = backup;
        state.processed = backup_processed;
        state.station_timestamps = backup_timestamps;
        state.sightings = backup_sightings;
        deferred.push_back(s);
        report.events.push_back({s->index, "deferred", pass, e.what()});
        continue;
      }
      report.events.push_back({s->index, "localized", pass, ""});
    }
    const bool progress = deferred.size() < queue.size();
    queue = std::move(deferred);
    if (!progress)
      break;
  }

  if (state.pending_updates > 0) {
    state.pending_updates = 0;
    solve(state.graph, config.solver);
    ++report.global_solves;
  }

  for (const Station *s : queue) {
    report.failed_stations.push_back(s->index);
    report.events.push_back({s->index, "failed", config.deferral_limit, ""});
  }
  state.deferred = report.failed_stations;

  report.localized = int(state.processed.size());
  report.final_cost = total_cost(state.graph);
  report.factors = state.graph.factors().size();
  double sq = 0.0;
  size_t n = 0;
  for (const auto &f : state.graph.factors()) {
    try {
      const Vec2 r = residual(f, state.graph.estimate(f.group_var),
                              state.graph.estimate(f.marker_var));
      sq += r.squaredNorm();
      report.residual_max_px = std::max(report.residual_max_px, r.norm());
      ++n;
    } catch (const BehindCameraError &) {
    }
  }
  report.residual_rms_px = n ? std::sqrt(sq / double(n)) : 0.0;
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  return {state.marker_map(), state.trajectory(), report};
}

LocalizeResult localize_all(const MarkerMap &map, const Dataset &queries,
                            const PipelineConfig &config)
{
  LocalizeResult out;
  for (const auto &s : queries.stations) {
    const auto observations =
        prepare_observations(s, queries.markers, queries.rig, config.weight_params);
    try {
      const Localization loc = localize(map, queries.rig, observations, config);
      out.trajectory.poses.push_back({s.timestamp, loc.world_from_group});
    } catch (const Error &) {
      out.failed.push_back(s.index);
    }
  }
  std::sort(out.trajectory.poses.begin(), out.trajectory.poses.end(),
            [](const TrajectoryEntry &a, const TrajectoryEntry &b) {
              return a.timestamp < b.timestamp;
            });
  return out;
}

json report_to_json(const RunReport &r, const PipelineConfig &config)
{
  json events = json::array();
  for (const auto &e : r.events)
    events.push_back({{"station", e.station}, {"status", e.status}, {"pass", e.pass},
                      {"detail", e.detail}});
  return {
      {"config", config_to_json(config)},
      {"init_station", r.init_station},
      {"localized_stations", r.localized},
      {"failed_stations", r.failed_stations},
      {"global_solves", r.global_solves},
      {"final_cost", r.final_cost},
      {"factors", r.factors},
      {"residual_rms_px", r.residual_rms_px},
      {"residual_max_px", r.residual_max_px},
      {"seconds", r.seconds},
      {"events", events},
  };
}

}  // namespace markersfm
