#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "markersfm/confidence.hpp"
#include "markersfm/optimizer.hpp"
#include "markersfm/planar_pnp.hpp"
#include "markersfm/scene_data.hpp"

namespace markersfm {

struct PipelineConfig
{
  WeightParams weight_params = *WeightParams::preset("L_all");
  SolveSettings solver;
  double huber_delta = 2.0;  ///< pixels; infinity disables the robust kernel
  int min_markers_for_localization = 1;
  int deferral_limit = 3;  ///< retry passes over deferred stations
  int batch_size = 1;      ///< stations per global solve
  /// Seed localization and re-seed re-observed markers from both planar
  /// candidates of every sighting, keeping the lowest-cost hypothesis.
  bool resolve_ambiguity = true;

  bool valid() const;
};

/// Every field is written, including defaults. Parsing accepts partial
/// objects; missing fields keep their defaults. Throws ParseError on unknown
/// keys or invalid values.
nlohmann::json config_to_json(const PipelineConfig &config);
PipelineConfig config_from_json(const nlohmann::json &j);
PipelineConfig read_config(const std::filesystem::path &path);

/// One detection with its planar pose and confidence weight. `pnp` is empty
/// when the planar solve failed; such detections add no factors.
struct Observation
{
  Detection detection;
  std::optional<PnpResult> pnp;
  double weight = 0.0;
};

std::vector<Observation> prepare_observations(const Station &station,
                                              const MarkerRegistry &markers,
                                              const CameraRig &rig, const WeightParams &weights);

/// The incremental reconstruction. Marker variables are keyed by marker id,
/// group variables by station index; the initial station is the only fixed
/// group variable.
struct MapState
{
  FactorGraph graph;
  CameraRig rig;
  MarkerRegistry markers;
  int init_station = -1;
  std::map<int, double> station_timestamps;  ///< localized stations
  std::vector<int> processed;                ///< in processing order
  std::vector<int> deferred;
  int pending_updates = 0;  ///< update_map calls since the last global solve

  /// Both planar candidates of every factor-producing detection, per marker.
  struct Sighting
  {
    int station = 0;
    int camera = 0;
    std::array<Pose, 2> camera_from_marker;
  };
  std::map<int, std::vector<Sighting>> sightings;

  MarkerMap marker_map() const;
  /// world_from_group of the localized stations, sorted by timestamp.
  Trajectory trajectory() const;
};

/// Station with the most distinct marker ids over all its cameras; ties go
/// to the lowest station index. Throws EmptyDatasetError.
int select_init_station(const Dataset &dataset);

/// Fixes the station at the identity and places every marker it sees from
/// its best planar solution. Throws DegenerateQuadError when no detection of
/// the station has a planar solution.
MapState initialize_map(const Dataset &dataset, int station_index, const PipelineConfig &config);

struct MarkerPartition
{
  std::vector<int> co_viewed;
  std::vector<int> non_co_viewed;
};

MarkerPartition classify_markers(const MapState &state, const Station &station);

struct MinReprojChoice
{
  int marker_id = -1;
  int camera = -1;
  PnpResult pnp;
};

/// Among the observations of markers contained in `map`, the one with the
/// smallest planar error; ties go to the lowest marker id, then camera.
/// Throws InsufficientCoviewError when none is mapped.
MinReprojChoice select_min_reproj_marker(const std::vector<Observation> &observations,
                                         const MarkerMap &map);

struct Localization
{
  Pose world_from_group;
  SolveReport report;
  int anchor_marker = -1;  ///< marker used for the initial guess
  int co_viewed = 0;
};

/// Optimizes a single group pose against fixed marker poses, starting from
/// the min-reprojection marker chained through its camera. With
/// resolve_ambiguity the start is instead the lowest-cost pose among both
/// planar candidates of every co-viewed detection (ties keep the
/// min-reprojection seed). Throws InsufficientCoviewError below
/// config.min_markers_for_localization.
Localization localize(const MarkerMap &map, const CameraRig &rig,
                      const std::vector<Observation> &observations, const PipelineConfig &config);

Localization localize_station(const MapState &state, const Station &station,
                              const PipelineConfig &config);

/// Adds the station, its new markers and the factors of all its detections
/// to the global graph, then runs the global solve once batch_size updates
/// are pending. Returns the solve report when a solve ran.
///
/// With resolve_ambiguity, every marker detected in the station is first
/// moved to the lowest-cost pose among its current estimate and all planar
/// candidates of its sightings, with group poses held fixed.
std::optional<SolveReport> update_map(MapState &state, const Station &station,
                                      const Pose &world_from_group, const PipelineConfig &config);

struct StationOutcome
{
  int station = 0;
  std::string status;  ///< "init", "localized", "deferred", "failed"
  int pass = 0;
  std::string detail;
};

struct RunReport
{
  int init_station = -1;
  int localized = 0;
  std::vector<int> failed_stations;  ///< never localized
  std::vector<StationOutcome> events;
  int global_solves = 0;
  double final_cost = 0.0;
  double residual_rms_px = 0.0;
  double residual_max_px = 0.0;
  size_t factors = 0;
  double seconds = 0.0;
};

struct RunResult
{
  MarkerMap map;
  Trajectory trajectory;
  RunReport report;
};

/// Initialization, then every other station in input order; stations that
/// cannot be localized yet are retried for up to deferral_limit passes.
/// Throws EmptyDatasetError for a dataset without detections.
RunResult run_incremental(const Dataset &dataset, const PipelineConfig &config);

/// Localization only, against a frozen map. Stations that fail are absent
/// from the trajectory and listed in `failed`.
struct LocalizeResult
{
  Trajectory trajectory;
  std::vector<int> failed;
};

LocalizeResult localize_all(const MarkerMap &map, const Dataset &queries,
                            const PipelineConfig &config);

nlohmann::json report_to_json(const RunReport &report, const PipelineConfig &config);

}  // namespace markersfm
