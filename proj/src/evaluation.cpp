#include "markersfm/evaluation.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <regex>
#include <set>

#include "markersfm/errors.hpp"

namespace markersfm {

namespace {

constexpr double kTimestampTolerance = 1e-5;

struct Pair
{
  double key;
  Pose est;
  Pose gt;
};

AteResult ate_from_pairs(const std::vector<Pair> &pairs)
{
  if (pairs.size() < 3)
    throw InsufficientMatchesError("need at least 3 matched poses, got " +
                                   std::to_string(pairs.size()));
  std::vector<Vec3> src, dst;
  for (const auto &p : pairs) {
    src.push_back(p.est.translation);
    dst.push_back(p.gt.translation);
  }
  AteResult r;
  r.alignment = align_umeyama(src, dst);
  double rot_sq = 0.0, trans_sq = 0.0;
  for (const auto &p : pairs) {
    const Pose aligned = r.alignment * p.est;
    ItemError e;
    e.key = p.key;
    e.rotation_deg =
        rotation_distance(p.gt.rotation, aligned.rotation) * 180.0 / std::numbers::pi;
    e.translation_m = (p.gt.translation - aligned.translation).norm();
    rot_sq += e.rotation_deg * e.rotation_deg;
    trans_sq += e.translation_m * e.translation_m;
    r.items.push_back(e);
  }
  r.rotation_rmse = std::sqrt(rot_sq / double(pairs.size()));
  r.translation_rmse = std::sqrt(trans_sq / double(pairs.size()));
  return r;
}

}  // namespace

AteResult ate_trajectory(const Trajectory &est, const Trajectory &gt)
{
  std::vector<Pair> pairs;
  std::vector<double> missing;
  size_t i = 0;
  for (const auto &g : gt.poses) {
    while (i < est.size() && est.poses[i].timestamp < g.timestamp - kTimestampTolerance)
      ++i;
    if (i < est.size() && std::abs(est.poses[i].timestamp - g.timestamp) <= kTimestampTolerance)
      pairs.push_back({g.timestamp, est.poses[i].world_from_group, g.world_from_group});
    else
      missing.push_back(g.timestamp);
  }
  AteResult r = ate_from_pairs(pairs);
  r.missing = std::move(missing);
  return r;
}

AteResult ate_marker_map(const MarkerMap &est, const MarkerMap &gt)
{
  std::vector<Pair> pairs;
  std::vector<double> missing;
  for (const auto &[id, g] : gt.entries) {
    const auto it = est.entries.find(id);
    if (it == est.entries.end())
      missing.push_back(id);
    else
      pairs.push_back({double(id), it->second.world_from_marker, g.world_from_marker});
  }
  AteResult r = ate_from_pairs(pairs);
  r.missing = std::move(missing);
  return r;
}

nlohmann::json ate_to_json(const AteResult &r)
{
  nlohmann::json items = nlohmann::json::array();
  for (const auto &e : r.items)
    items.push_back({{"key", e.key}, {"rotation_deg", e.rotation_deg},
                     {"translation_m", e.translation_m}});
  const Eigen::Quaterniond q = r.alignment.quaternion();
  return {
      {"rotation_rmse_deg", r.rotation_rmse},
      {"translation_rmse_m", r.translation_rmse},
      {"matched", r.items.size()},
      {"missing", r.missing},
      {"alignment",
       {{"q", {q.x(), q.y(), q.z(), q.w()}},
        {"t", {r.alignment.translation.x(), r.alignment.translation.y(),
               r.alignment.translation.z()}}}},
      {"items", items},
  };
}

std::vector<Assertion> read_assertions(const std::filesystem::path &path)
{
  std::ifstream in(path);
  if (!in)
    throw IoError("cannot open " + path.string());
  std::vector<Assertion> out;
  static const std::regex pattern(R"(^\s*(\w+)\s*<\s*(\S+)\s*$)");
  static const std::set<std::string> metrics{"marker_rot", "marker_trans", "camera_rot",
                                             "camera_trans", "rot", "trans"};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos)
      line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos)
      continue;
    std::smatch m;
    if (!std::regex_match(line, m, pattern))
      throw ParseError(path.string(), lineno, "expected '<metric> < <value>'");
    Assertion a;
    a.metric = m[1];
    a.line = lineno;
    if (!metrics.count(a.metric))
      throw ParseError(path.string(), lineno, "unknown metric '" + a.metric + "'");
    std::size_t used = 0;
    try {
      a.bound = std::stod(m[2], &used);
    } catch (const std::exception &) {
      used = 0;
    }
    if (used != m[2].str().size())
      throw ParseError(path.string(), lineno, "bad threshold '" + m[2].str() + "'");
    out.push_back(a);
  }
  return out;
}

}  // namespace markersfm
