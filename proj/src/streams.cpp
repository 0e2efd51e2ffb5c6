#include "demofuse/streams.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <set>
#include <sstream>

#include "demofuse/errors.hpp"
#include "demofuse/json_io.hpp"

namespace demofuse {

double MeasurementEvent::t() const {
  return std::visit([](const auto& s) { return s.t; }, payload);
}

int MeasurementEvent::priority() const { return static_cast<int>(payload.index()); }

void NoiseParams::validate() const {
  const double values[] = {gyro_noise_density, accel_noise_density,
                           gyro_bias_walk,     accel_bias_walk,
                           meas_sigma_t,       meas_sigma_r,
                           fusion_window,      init_sigma_p,
                           init_sigma_v,       init_sigma_theta,
                           init_sigma_bg,      init_sigma_ba,
                           gate_chi2};
  for (double v : values) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw ValidationError("noise parameters must all be positive");
    }
  }
}

void SegmenterConfig::apply_defaults() {
  if (release_threshold == 0.0) {
    release_threshold = 0.5 * (max_fruit_width + max_open_width);
  }
  if (grasp_threshold == 0.0) {
    grasp_threshold = max_fruit_width;
  }
}

void SegmenterConfig::validate() const {
  if (!(grasp_threshold < release_threshold &&
        release_threshold <= max_open_width)) {
    throw ValidationError(
        "segmenter thresholds must satisfy grasp_threshold < "
        "release_threshold <= max_open_width");
  }
  if (!(leave_distance > 0.0)) {
    throw ValidationError("leave_distance must be positive");
  }
  if (!(width_hysteresis >= 0.0 && leave_hysteresis >= 0.0 &&
        detection_gap_timeout > 0.0)) {
    throw ValidationError("segmenter hysteresis/timeout values out of range");
  }
}

const CameraConfig* RigConfig::find_camera(const std::string& id) const {
  for (const auto& c : cameras) {
    if (c.camera_id == id) return &c;
  }
  return nullptr;
}

const GripperMarker* RigConfig::find_marker(const std::string& id) const {
  for (const auto& m : gripper_markers) {
    if (m.marker_id == id) return &m;
  }
  return nullptr;
}

void RigConfig::validate() const {
  if (cameras.empty()) {
    throw ValidationError("rig config needs at least one external camera");
  }
  std::set<std::string> ids;
  for (const auto& c : cameras) {
    if (c.camera_id.empty() || c.camera_id == kOnboardCameraId) {
      throw ValidationError("invalid external camera id: '" + c.camera_id + "'");
    }
    if (!ids.insert(c.camera_id).second) {
      throw ValidationError("duplicate camera_id: " + c.camera_id);
    }
    if (c.tag_id.empty()) {
      throw ValidationError("camera " + c.camera_id + " is missing its tag_id");
    }
  }
  std::set<std::string> marker_ids;
  for (const auto& m : gripper_markers) {
    if (!marker_ids.insert(m.marker_id).second) {
      throw ValidationError("duplicate marker_id: " + m.marker_id);
    }
  }
  if (storage_marker_id.empty()) {
    throw ValidationError("unknown storage_marker_id: config must name one");
  }
  if (marker_ids.count(storage_marker_id)) {
    throw ValidationError("unknown storage_marker_id: '" + storage_marker_id +
                          "' collides with a gripper marker");
  }
  for (const auto& c : cameras) {
    if (c.tag_id == storage_marker_id) {
      throw ValidationError("unknown storage_marker_id: '" + storage_marker_id +
                            "' collides with a camera tag");
    }
  }
  const double g = gravity.norm();
  if (!(g >= 9.7 && g <= 9.9)) {
    throw ValidationError("gravity magnitude " + std::to_string(g) +
                          " outside [9.7, 9.9]");
  }
  thresholds.validate();
  noise.validate();
}

// ---------------------------------------------------------------------------
// JSONL parsing

namespace {

struct LineReader {
  std::istringstream stream;
  std::string path;
  int line_no = 0;

  explicit LineReader(const std::filesystem::path& p)
      : stream(read_file(p)), path(p.string()) {}

  bool next(Json& out) {
    std::string line;
    while (std::getline(stream, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        out = Json::parse(line);
      } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(path + ": parse error at line " +
                              std::to_string(line_no) + ": " + e.what());
      }
      return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ValidationError(path + ": " + msg + " at line " +
                          std::to_string(line_no));
  }
};

double get_number(const Json& j, const char* key, LineReader& r) {
  if (!j.contains(key) || !j[key].is_number()) {
    r.fail(std::string("missing or non-numeric field \"") + key + "\"");
  }
  return j[key].get<double>();
}

std::string get_string(const Json& j, const char* key, LineReader& r) {
  if (!j.contains(key) || !j[key].is_string()) {
    r.fail(std::string("missing or non-string field \"") + key + "\"");
  }
  return j[key].get<std::string>();
}

Vec3 get_vec3(const Json& j, const char* key, LineReader& r) {
  if (!j.contains(key)) r.fail(std::string("missing field \"") + key + "\"");
  try {
    return vec3_from_json(j[key]);
  } catch (const ValidationError& e) {
    r.fail(e.what());
  }
}

void check_monotonic(double prev, double t, bool strict, LineReader& r) {
  const bool bad = strict ? !(t > prev) : t < prev;
  if (bad) r.fail("non-monotonic");
}

}  // namespace

std::vector<ImuSample> parse_imu(const std::filesystem::path& path) {
  std::vector<ImuSample> out;
  LineReader r(path);
  Json j;
  double prev = -std::numeric_limits<double>::infinity();
  while (r.next(j)) {
    ImuSample s;
    s.t = get_number(j, "t", r);
    s.gyro = get_vec3(j, "gyro", r);
    s.accel = get_vec3(j, "accel", r);
    if (!s.gyro.allFinite() || !s.accel.allFinite() || !std::isfinite(s.t)) {
      r.fail("non-finite value");
    }
    check_monotonic(prev, s.t, false, r);
    prev = s.t;
    out.push_back(s);
  }
  return out;
}

std::vector<MarkerDetection> parse_detections(const std::filesystem::path& path) {
  std::vector<MarkerDetection> out;
  LineReader r(path);
  Json j;
  double prev = -std::numeric_limits<double>::infinity();
  while (r.next(j)) {
    MarkerDetection d;
    d.t = get_number(j, "t", r);
    d.camera_id = get_string(j, "camera_id", r);
    d.marker_id = get_string(j, "marker_id", r);
    if (!j.contains("pose")) r.fail("missing field \"pose\"");
    try {
      d.pose_cm = pose_from_json(j["pose"]);
    } catch (const ValidationError& e) {
      r.fail(e.what());
    }
    d.quality = get_number(j, "quality", r);
    if (d.quality < 0.0) r.fail("negative quality");
    if (!(d.pose_cm.t.z() > 0.0)) r.fail("marker not in front of camera (z <= 0)");
    check_monotonic(prev, d.t, false, r);
    prev = d.t;
    out.push_back(d);
  }
  return out;
}

std::vector<WidthSample> parse_width(const std::filesystem::path& path) {
  std::vector<WidthSample> out;
  LineReader r(path);
  Json j;
  double prev = -std::numeric_limits<double>::infinity();
  while (r.next(j)) {
    WidthSample s;
    s.t = get_number(j, "t", r);
    s.width = get_number(j, "width", r);
    if (s.width < 0.0) r.fail("negative width");
    check_monotonic(prev, s.t, false, r);
    prev = s.t;
    out.push_back(s);
  }
  return out;
}

std::vector<GroundTruthSample> parse_ground_truth(
    const std::filesystem::path& path) {
  std::vector<GroundTruthSample> out;
  LineReader r(path);
  Json j;
  double prev = -std::numeric_limits<double>::infinity();
  while (r.next(j)) {
    GroundTruthSample s;
    s.t = get_number(j, "t", r);
    if (!j.contains("q") || !j.contains("p")) r.fail("missing \"q\" or \"p\"");
    try {
      s.pose_wg.q = quat_from_json(j["q"]);
      s.pose_wg.t = vec3_from_json(j["p"]);
    } catch (const ValidationError& e) {
      r.fail(e.what());
    }
    check_monotonic(prev, s.t, true, r);
    prev = s.t;
    out.push_back(s);
  }
  return out;
}

std::vector<MeasurementEvent> parse_stream(const std::filesystem::path& path,
                                           StreamKind kind) {
  std::vector<MeasurementEvent> out;
  switch (kind) {
    case StreamKind::imu:
      for (const auto& s : parse_imu(path)) out.push_back({s, 0});
      break;
    case StreamKind::detections:
      for (const auto& d : parse_detections(path)) out.push_back({d, 0});
      break;
    case StreamKind::width:
      for (const auto& s : parse_width(path)) out.push_back({s, 0});
      break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSONL serialization

namespace {

Json imu_json(const ImuSample& s) {
  Json j;
  j["t"] = s.t;
  j["gyro"] = vec3_to_json(s.gyro);
  j["accel"] = vec3_to_json(s.accel);
  return j;
}

Json detection_json(const MarkerDetection& d) {
  Json j;
  j["t"] = d.t;
  j["camera_id"] = d.camera_id;
  j["marker_id"] = d.marker_id;
  j["pose"] = pose_to_json(d.pose_cm);
  j["quality"] = d.quality;
  return j;
}

template <typename T, typename F>
std::string to_jsonl(const std::vector<T>& items, F&& to_json) {
  std::string out;
  for (const auto& item : items) {
    out += to_json(item).dump();
    out += '\n';
  }
  return out;
}

}  // namespace

std::string serialize_imu(const std::vector<ImuSample>& samples) {
  return to_jsonl(samples, imu_json);
}

std::string serialize_detections(const std::vector<MarkerDetection>& dets) {
  return to_jsonl(dets, detection_json);
}

std::string serialize_width(const std::vector<WidthSample>& samples) {
  return to_jsonl(samples, [](const WidthSample& s) {
    Json j;
    j["t"] = s.t;
    j["width"] = s.width;
    return j;
  });
}

std::string serialize_ground_truth(const std::vector<GroundTruthSample>& samples) {
  return to_jsonl(samples, [](const GroundTruthSample& s) {
    Json j;
    j["t"] = s.t;
    j["q"] = quat_to_json(s.pose_wg.q);
    j["p"] = vec3_to_json(s.pose_wg.t);
    return j;
  });
}

// ---------------------------------------------------------------------------
// Merge

std::vector<MeasurementEvent> merge_streams(
    const std::vector<std::vector<MeasurementEvent>>& streams) {
  struct Cursor {
    std::size_t stream;
    std::size_t pos;
  };
  auto key = [&](const Cursor& c) {
    const MeasurementEvent& e = streams[c.stream][c.pos];
    return std::make_tuple(e.t(), e.priority(), c.stream, c.pos);
  };
  auto greater = [&](const Cursor& a, const Cursor& b) { return key(a) > key(b); };
  std::priority_queue<Cursor, std::vector<Cursor>, decltype(greater)> heap(greater);

  std::size_t total = 0;
  for (std::size_t i = 0; i < streams.size(); ++i) {
    total += streams[i].size();
    if (!streams[i].empty()) heap.push({i, 0});
  }

  std::vector<MeasurementEvent> out;
  out.reserve(total);
  while (!heap.empty()) {
    Cursor c = heap.top();
    heap.pop();
    MeasurementEvent e = streams[c.stream][c.pos];
    e.source = c.stream;
    out.push_back(std::move(e));
    if (c.pos + 1 < streams[c.stream].size()) heap.push({c.stream, c.pos + 1});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rig / noise configuration

namespace {

NoiseParams noise_from_json(const Json& j) {
  NoiseParams n;  // start from documented defaults, override what is present
  auto opt = [&](const char* key, double& field) {
    if (j.contains(key)) field = j.at(key).get<double>();
  };
  opt("gyro_noise_density", n.gyro_noise_density);
  opt("accel_noise_density", n.accel_noise_density);
  opt("gyro_bias_walk", n.gyro_bias_walk);
  opt("accel_bias_walk", n.accel_bias_walk);
  opt("meas_sigma_t", n.meas_sigma_t);
  opt("meas_sigma_r", n.meas_sigma_r);
  opt("fusion_window", n.fusion_window);
  opt("init_sigma_p", n.init_sigma_p);
  opt("init_sigma_v", n.init_sigma_v);
  opt("init_sigma_theta", n.init_sigma_theta);
  opt("init_sigma_bg", n.init_sigma_bg);
  opt("init_sigma_ba", n.init_sigma_ba);
  opt("gate_chi2", n.gate_chi2);
  return n;
}

Json noise_to_json(const NoiseParams& n) {
  Json j;
  j["gyro_noise_density"] = n.gyro_noise_density;
  j["accel_noise_density"] = n.accel_noise_density;
  j["gyro_bias_walk"] = n.gyro_bias_walk;
  j["accel_bias_walk"] = n.accel_bias_walk;
  j["meas_sigma_t"] = n.meas_sigma_t;
  j["meas_sigma_r"] = n.meas_sigma_r;
  j["fusion_window"] = n.fusion_window;
  j["init_sigma_p"] = n.init_sigma_p;
  j["init_sigma_v"] = n.init_sigma_v;
  j["init_sigma_theta"] = n.init_sigma_theta;
  j["init_sigma_bg"] = n.init_sigma_bg;
  j["init_sigma_ba"] = n.init_sigma_ba;
  j["gate_chi2"] = n.gate_chi2;
  return j;
}

SegmenterConfig thresholds_from_json(const Json& j) {
  SegmenterConfig c;
  auto opt = [&](const char* key, double& field) {
    if (j.contains(key)) field = j.at(key).get<double>();
  };
  opt("max_fruit_width", c.max_fruit_width);
  opt("max_open_width", c.max_open_width);
  opt("release_threshold", c.release_threshold);
  opt("grasp_threshold", c.grasp_threshold);
  opt("width_hysteresis", c.width_hysteresis);
  opt("leave_distance", c.leave_distance);
  opt("leave_hysteresis", c.leave_hysteresis);
  opt("detection_gap_timeout", c.detection_gap_timeout);
  c.apply_defaults();
  return c;
}

Json thresholds_to_json(const SegmenterConfig& c) {
  Json j;
  j["max_fruit_width"] = c.max_fruit_width;
  j["max_open_width"] = c.max_open_width;
  j["release_threshold"] = c.release_threshold;
  j["grasp_threshold"] = c.grasp_threshold;
  j["width_hysteresis"] = c.width_hysteresis;
  j["leave_distance"] = c.leave_distance;
  j["leave_hysteresis"] = c.leave_hysteresis;
  j["detection_gap_timeout"] = c.detection_gap_timeout;
  return j;
}

}  // namespace

RigConfig load_rig_config(const std::filesystem::path& path) {
  const Json j = load_json(path);
  RigConfig rig;
  if (!j.contains("cameras") || !j["cameras"].is_array()) {
    throw ValidationError(path.string() + ": missing \"cameras\" array");
  }
  for (const auto& cj : j["cameras"]) {
    CameraConfig c;
    c.camera_id = cj.at("camera_id").get<std::string>();
    if (!cj.contains("pose_wc")) {
      throw ValidationError("camera " + c.camera_id +
                            " is missing its extrinsics (pose_wc)");
    }
    c.pose_wc = pose_from_json(cj.at("pose_wc"));
    c.tag_id = cj.at("tag_id").get<std::string>();
    c.tag_pose_wt = pose_from_json(cj.at("tag_pose_wt"));
    if (cj.contains("fov_half_angle_deg")) {
      c.fov_half_angle = cj.at("fov_half_angle_deg").get<double>() * M_PI / 180.0;
    }
    rig.cameras.push_back(std::move(c));
  }
  if (j.contains("gripper_markers")) {
    for (const auto& mj : j["gripper_markers"]) {
      GripperMarker m;
      m.marker_id = mj.at("marker_id").get<std::string>();
      m.pose_gm = pose_from_json(mj.at("pose_gm"));
      rig.gripper_markers.push_back(std::move(m));
    }
  }
  if (j.contains("storage_marker_id")) {
    rig.storage_marker_id = j.at("storage_marker_id").get<std::string>();
  }
  if (j.contains("gravity")) rig.gravity = vec3_from_json(j.at("gravity"));
  rig.thresholds = thresholds_from_json(j.value("thresholds", Json::object()));
  rig.noise = noise_from_json(j.value("noise", Json::object()));
  rig.validate();
  return rig;
}

std::string serialize_rig_config(const RigConfig& rig) {
  Json j;
  j["cameras"] = Json::array();
  for (const auto& c : rig.cameras) {
    Json cj;
    cj["camera_id"] = c.camera_id;
    cj["pose_wc"] = pose_to_json(c.pose_wc);
    cj["tag_id"] = c.tag_id;
    cj["tag_pose_wt"] = pose_to_json(c.tag_pose_wt);
    cj["fov_half_angle_deg"] = c.fov_half_angle * 180.0 / M_PI;
    j["cameras"].push_back(cj);
  }
  j["gripper_markers"] = Json::array();
  for (const auto& m : rig.gripper_markers) {
    Json mj;
    mj["marker_id"] = m.marker_id;
    mj["pose_gm"] = pose_to_json(m.pose_gm);
    j["gripper_markers"].push_back(mj);
  }
  j["storage_marker_id"] = rig.storage_marker_id;
  j["gravity"] = vec3_to_json(rig.gravity);
  j["thresholds"] = thresholds_to_json(rig.thresholds);
  j["noise"] = noise_to_json(rig.noise);
  return j.dump(2) + "\n";
}

void save_rig_config(const RigConfig& rig, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_rig_config(rig));
}

NoiseParams load_noise_params(const std::filesystem::path& path) {
  NoiseParams n = noise_from_json(load_json(path));
  n.validate();
  return n;
}

std::string serialize_noise_params(const NoiseParams& noise) {
  return noise_to_json(noise).dump(2) + "\n";
}

}  // namespace demofuse
