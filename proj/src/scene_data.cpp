#include "markersfm/scene_data.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include <json.hpp>

#include "markersfm/errors.hpp"

namespace markersfm {

using nlohmann::json;

namespace {

std::ifstream open_in(const std::filesystem::path &path)
{
  std::ifstream in(path);
  if (!in)
    throw IoError("cannot open " + path.string() + " for reading");
  return in;
}

std::ofstream open_out(const std::filesystem::path &path)
{
  std::ofstream out(path);
  if (!out)
    throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

json parse_document(const std::filesystem::path &path)
{
  auto in = open_in(path);
  try {
    return json::parse(in);
  } catch (const json::parse_error &e) {
    throw ParseError(path.string(), 0, e.what());
  }
}

Eigen::Quaterniond canonical(Eigen::Quaterniond q)
{
  q.normalize();
  if (q.w() < 0.0)
    q.coeffs() = -q.coeffs();
  return q;
}

json pose_to_json(const Pose &pose)
{
  const Eigen::Quaterniond q = canonical(pose.quaternion());
  const Vec3 &t = pose.translation;
  return {{"q", {q.x(), q.y(), q.z(), q.w()}}, {"t", {t.x(), t.y(), t.z()}}};
}

Pose pose_from_json(const json &j)
{
  const auto q = j.at("q").get<std::vector<double>>();
  const auto t = j.at("t").get<std::vector<double>>();
  if (q.size() != 4 || t.size() != 3)
    throw std::invalid_argument("pose needs q[4] and t[3]");
  const Eigen::Quaterniond quat(q[3], q[0], q[1], q[2]);
  if (!(quat.norm() > 0.0))
    throw std::invalid_argument("zero quaternion");
  return Pose::from_quaternion(quat, Vec3(t[0], t[1], t[2]));
}

double cross2(const Vec2 &a, const Vec2 &b) { return a.x() * b.y() - a.y() * b.x(); }

}  // namespace

MarkerTemplate marker_corners(double side_length)
{
  const double s = 0.5 * side_length;
  return {{Vec3(-s, s, 0.0), Vec3(s, s, 0.0), Vec3(s, -s, 0.0), Vec3(-s, -s, 0.0)}};
}

MarkerTemplate marker_corners(const MarkerSpec &spec) { return marker_corners(spec.side_length); }

void MarkerRegistry::add(const MarkerSpec &spec)
{
  if (spec.id < 0)
    throw std::invalid_argument("marker id must be non-negative: " + std::to_string(spec.id));
  if (!(spec.side_length > 0.0) || !std::isfinite(spec.side_length))
    throw std::invalid_argument("marker " + std::to_string(spec.id) + ": side length must be positive");
  if (!specs_.emplace(spec.id, spec).second)
    throw DuplicateIdError("duplicate marker id " + std::to_string(spec.id));
}

const MarkerSpec &MarkerRegistry::at(int id) const
{
  const auto it = specs_.find(id);
  if (it == specs_.end())
    throw std::out_of_range("unknown marker id " + std::to_string(id));
  return it->second;
}

double quad_signed_area(const Corners2d &c)
{
  double twice = 0.0;
  for (size_t i = 0; i < 4; ++i)
    twice += cross2(c[i], c[(i + 1) % 4]);
  return 0.5 * twice;
}

bool corners_wind_clockwise(const Corners2d &c)
{
  for (size_t i = 0; i < 4; ++i) {
    const Vec2 e0 = c[(i + 1) % 4] - c[i];
    const Vec2 e1 = c[(i + 2) % 4] - c[(i + 1) % 4];
    if (!(cross2(e0, e1) > 0.0))
      return false;
  }
  return true;
}

// --- rig -------------------------------------------------------------------

CameraRig read_rig(const std::filesystem::path &path)
{
  const json doc = parse_document(path);
  CameraRig rig;
  try {
    for (const auto &cam : doc.at("cameras")) {
      const auto &in = cam.at("intrinsics");
      RigCamera rc;
      rc.intrinsics = {in.at("fx").get<double>(), in.at("fy").get<double>(),
                       in.at("cx").get<double>(), in.at("cy").get<double>(),
                       in.at("width").get<int>(), in.at("height").get<int>()};
      if (!rc.intrinsics.valid())
        throw std::invalid_argument("invalid intrinsics for camera " + std::to_string(rig.size()));
      rc.group_from_camera = pose_from_json(cam.at("group_from_camera"));
      rig.cameras.push_back(rc);
    }
  } catch (const json::exception &e) {
    throw ParseError(path.string(), 0, e.what());
  } catch (const std::invalid_argument &e) {
    throw ParseError(path.string(), 0, e.what());
  }
  if (rig.cameras.empty())
    throw ParseError(path.string(), 0, "rig has no cameras");
  return rig;
}

void write_rig(const CameraRig &rig, const std::filesystem::path &path)
{
  json cams = json::array();
  for (const auto &c : rig.cameras) {
    const auto &k = c.intrinsics;
    cams.push_back({{"intrinsics",
                     {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy},
                      {"width", k.width}, {"height", k.height}}},
                    {"group_from_camera", pose_to_json(c.group_from_camera)}});
  }
  auto out = open_out(path);
  out << json{{"cameras", cams}}.dump(2) << '\n';
}

// --- markers ---------------------------------------------------------------

MarkerRegistry read_markers(const std::filesystem::path &path)
{
  const json doc = parse_document(path);
  if (!doc.is_object())
    throw ParseError(path.string(), 0, "expected an object of id -> side_length_m");
  MarkerRegistry reg;
  for (const auto &[key, value] : doc.items()) {
    try {
      size_t used = 0;
      const int id = std::stoi(key, &used);
      if (used != key.size())
        throw std::invalid_argument("bad marker id '" + key + "'");
      reg.add({id, value.get<double>()});
    } catch (const json::exception &e) {
      throw ParseError(path.string(), 0, "marker '" + key + "': " + e.what());
    } catch (const std::logic_error &e) {
      throw ParseError(path.string(), 0, "marker '" + key + "': " + e.what());
    }
  }
  return reg;
}

void write_markers(const MarkerRegistry &markers, const std::filesystem::path &path)
{
  // Keys are written in numeric id order, not json's lexicographic order.
  auto out = open_out(path);
  out << "{";
  bool first = true;
  for (const auto &[id, spec] : markers) {
    out << (first ? "\n" : ",\n") << "  \"" << id << "\": " << json(spec.side_length).dump();
    first = false;
  }
  out << (first ? "}\n" : "\n}\n");
}

// --- detections ------------------------------------------------------------

std::vector<Station> read_detections(const std::filesystem::path &path, const CameraRig &rig,
                                     const MarkerRegistry &markers)
{
  auto in = open_in(path);
  const std::string file = path.string();
  std::vector<Station> stations;
  std::map<int, size_t> slot;  // station index -> position in `stations`
  std::map<int, bool> explicit_ts;
  std::set<std::tuple<int, int, int>> seen;

  std::string text;
  int line_no = 0;
  while (std::getline(in, text)) {
    ++line_no;
    if (text.find_first_not_of(" \t\r") == std::string::npos)
      continue;

    Detection det;
    double timestamp = 0.0;
    bool has_ts = false;
    try {
      const json j = json::parse(text);
      det.station = j.at("station").get<int>();
      det.camera = j.at("camera").get<int>();
      det.marker_id = j.at("marker_id").get<int>();
      const auto c = j.at("corners").get<std::vector<double>>();
      if (c.size() != 8)
        throw ParseError(file, line_no, "corners must hold 8 numbers");
      for (size_t i = 0; i < 4; ++i)
        det.corners_px[i] = Vec2(c[2 * i], c[2 * i + 1]);
      if (j.contains("timestamp")) {
        timestamp = j.at("timestamp").get<double>();
        has_ts = true;
      }
    } catch (const json::exception &e) {
      throw ParseError(file, line_no, e.what());
    }

    if (det.station < 0)
      throw ParseError(file, line_no, "negative station index");
    for (const auto &p : det.corners_px)
      if (!p.allFinite())
        throw ParseError(file, line_no, "non-finite corner");
    if (!markers.contains(det.marker_id))
      throw UnknownMarkerError(file, line_no, "unknown marker id " + std::to_string(det.marker_id));
    if (det.camera < 0 || static_cast<size_t>(det.camera) >= rig.size())
      throw CameraIndexError(file, line_no,
                             "camera index " + std::to_string(det.camera) + " >= N_cam " +
                                 std::to_string(rig.size()));
    if (!corners_wind_clockwise(det.corners_px))
      throw CornerWindingError(file, line_no,
                               "corners are not a convex TL-TR-BR-BL quad (self-intersecting or "
                               "wrong cyclic order)");
    if (!seen.emplace(det.station, det.camera, det.marker_id).second)
      throw ParseError(file, line_no, "duplicate (station, camera, marker_id)");

    auto it = slot.find(det.station);
    if (it == slot.end()) {
      it = slot.emplace(det.station, stations.size()).first;
      stations.push_back({det.station, has_ts ? timestamp : static_cast<double>(det.station), {}});
      explicit_ts[det.station] = has_ts;
    } else if (has_ts != explicit_ts[det.station] ||
               (has_ts && timestamp != stations[it->second].timestamp)) {
      throw ParseError(file, line_no, "inconsistent timestamp within station " +
                                          std::to_string(det.station));
    }
    stations[it->second].detections.push_back(det);
  }
  return stations;
}

void write_detections(std::span<const Station> stations, const std::filesystem::path &path)
{
  auto out = open_out(path);
  for (const auto &st : stations) {
    for (const auto &d : st.detections) {
      json corners = json::array();
      for (const auto &p : d.corners_px) {
        corners.push_back(p.x());
        corners.push_back(p.y());
      }
      // Field order is fixed for diffable output.
      out << "{\"station\":" << d.station << ",\"camera\":" << d.camera
          << ",\"marker_id\":" << d.marker_id << ",\"corners\":" << corners.dump()
          << ",\"timestamp\":" << json(st.timestamp).dump() << "}\n";
    }
  }
}

Dataset load_dataset(const DatasetPaths &paths)
{
  Dataset ds;
  ds.rig = read_rig(paths.rig);
  ds.markers = read_markers(paths.markers);
  ds.stations = read_detections(paths.detections, ds.rig, ds.markers);
  return ds;
}

void save_dataset(const Dataset &dataset, const DatasetPaths &paths)
{
  write_rig(dataset.rig, paths.rig);
  write_markers(dataset.markers, paths.markers);
  write_detections(dataset.stations, paths.detections);
}

// --- TUM -------------------------------------------------------------------

void write_tum(const Trajectory &traj, const std::filesystem::path &path)
{
  auto out = open_out(path);
  out << "# timestamp tx ty tz qx qy qz qw\n";
  char buf[512];
  for (const auto &e : traj.poses) {
    const Eigen::Quaterniond q = canonical(e.world_from_group.quaternion());
    const Vec3 &t = e.world_from_group.translation;
    std::snprintf(buf, sizeof(buf), "%.6f %.17g %.17g %.17g %.17g %.17g %.17g %.17g\n",
                  e.timestamp, t.x(), t.y(), t.z(), q.x(), q.y(), q.z(), q.w());
    out << buf;
  }
}

Trajectory read_tum(const std::filesystem::path &path)
{
  auto in = open_in(path);
  Trajectory traj;
  std::string text;
  int line_no = 0;
  while (std::getline(in, text)) {
    ++line_no;
    const auto first = text.find_first_not_of(" \t\r");
    if (first == std::string::npos || text[first] == '#')
      continue;
    std::istringstream ss(text);
    double v[8];
    for (double &x : v)
      if (!(ss >> x))
        throw ParseError(path.string(), line_no, "expected 8 numbers: timestamp tx ty tz qx qy qz qw");
    std::string extra;
    if (ss >> extra)
      throw ParseError(path.string(), line_no, "trailing tokens");
    const Eigen::Quaterniond q(v[7], v[4], v[5], v[6]);
    if (!(q.norm() > 0.0))
      throw ParseError(path.string(), line_no, "zero quaternion");
    if (!traj.poses.empty() && !(v[0] > traj.poses.back().timestamp))
      throw ParseError(path.string(), line_no, "timestamps must be strictly increasing");
    traj.poses.push_back({v[0], Pose::from_quaternion(q, Vec3(v[1], v[2], v[3]))});
  }
  return traj;
}

// --- map -------------------------------------------------------------------

void write_map(const MarkerMap &map, const std::filesystem::path &path)
{
  json markers = json::array();
  for (const auto &[id, e] : map.entries) {
    json m = pose_to_json(e.world_from_marker);
    m["id"] = id;
    m["side_length_m"] = e.side_length;
    markers.push_back(m);
  }
  auto out = open_out(path);
  out << json{{"markers", markers}}.dump(2) << '\n';
}

MarkerMap read_map(const std::filesystem::path &path)
{
  const json doc = parse_document(path);
  MarkerMap map;
  try {
    for (const auto &m : doc.at("markers")) {
      const int id = m.at("id").get<int>();
      MarkerMapEntry e{pose_from_json(m), m.at("side_length_m").get<double>()};
      if (!map.entries.emplace(id, e).second)
        throw DuplicateIdError(path.string() + ": duplicate marker id " + std::to_string(id));
    }
  } catch (const json::exception &e) {
    throw ParseError(path.string(), 0, e.what());
  } catch (const std::invalid_argument &e) {
    throw ParseError(path.string(), 0, e.what());
  }
  return map;
}

PlyPoints export_ply(const MarkerMap &map)
{
  PlyPoints pts;
  for (const auto &[id, e] : map.entries) {
    for (const auto &c : marker_corners(e.side_length).corners)
      pts.corners.push_back(e.world_from_marker(c));
    pts.centers.push_back(e.world_from_marker.translation);
  }
  return pts;
}

void write_ply(const MarkerMap &map, const std::filesystem::path &path)
{
  const PlyPoints pts = export_ply(map);
  auto out = open_out(path);
  out << "ply\nformat ascii 1.0\n"
      << "element vertex " << pts.corners.size() + pts.centers.size() << '\n'
      << "property double x\nproperty double y\nproperty double z\n"
      << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
      << "end_header\n";
  char buf[256];
  for (const auto &p : pts.corners) {
    std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g 255 255 255\n", p.x(), p.y(), p.z());
    out << buf;
  }
  for (const auto &p : pts.centers) {
    std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g 255 0 0\n", p.x(), p.y(), p.z());
    out << buf;
  }
}

}  // namespace markersfm
