#include "demofuse/sim.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "demofuse/errors.hpp"
#include "demofuse/json_io.hpp"

namespace demofuse {

void ScenarioConfig::validate(const RigConfig& rig) const {
  const double d[] = {durations.approach, durations.grasp_close, durations.twist,
                      durations.retreat,  durations.transfer,    durations.release,
                      durations.depart};
  for (double v : d) {
    if (!(v > 0.0)) throw ValidationError("scenario phase durations must be positive");
  }
  if (!(imu_rate > 0.0 && detection_rate > 0.0 && width_rate > 0.0)) {
    throw ValidationError("scenario sensor rates must be positive");
  }
  if (!(noise_scale >= 0.0)) throw ValidationError("noise_scale must be >= 0");
  if (!(dropout_probability >= 0.0 && dropout_probability < 1.0)) {
    throw ValidationError("dropout_probability must be in [0, 1)");
  }
  for (const auto& apple : apples) {
    if ((apple.t - storage_pose.t).norm() < 0.01) {
      throw ValidationError("apple within 1 cm of the storage marker: degenerate script");
    }
  }
  const SegmenterConfig& th = rig.thresholds;
  if (!apples.empty()) {
    if (!(apple_diameter < th.grasp_threshold && th.grasp_threshold < th.max_open_width)) {
      throw ValidationError(
          "apple_diameter must be below grasp_threshold for the grasp event to exist");
    }
    if (!(th.release_threshold > apple_diameter &&
          th.release_threshold < th.max_open_width)) {
      throw ValidationError("release_threshold outside the scripted width range");
    }
  }
}

namespace {

// Quintic rest-to-rest blend: zero velocity and acceleration at both ends.
double min_jerk(double u) { return u * u * u * (10.0 + u * (-15.0 + 6.0 * u)); }

/// One scripted phase. Position follows min-jerk between the endpoint poses,
/// orientation slerps at constant rate; twist phases spin about the body
/// forward axis instead. Width blends min-jerk between w0 and w1.
struct Segment {
  enum class Kind { move, hold, twist };
  Kind kind = Kind::hold;
  double t0 = 0.0, t1 = 0.0;
  Pose start, end;
  double twist = 0.0;  // rad (twist segments)
  double w0 = 0.0, w1 = 0.0;

  Pose pose_at(double t) const {
    const double u = std::clamp((t - t0) / (t1 - t0), 0.0, 1.0);
    switch (kind) {
      case Kind::move: {
        Pose p;
        p.t = start.t + min_jerk(u) * (end.t - start.t);
        p.q = start.q.slerp(u, end.q);
        return p;
      }
      case Kind::twist: {
        Pose p = start;
        p.q = (start.q * exp_so3(Vec3(twist * u, 0.0, 0.0))).normalized();
        return p;
      }
      case Kind::hold:
        return start;
    }
    return start;
  }

  double width_at(double t) const {
    const double u = std::clamp((t - t0) / (t1 - t0), 0.0, 1.0);
    return w0 + min_jerk(u) * (w1 - w0);
  }
};

struct Script {
  std::vector<Segment> segments;
  double t_end = 0.0;

  const Segment& at(double t) const {
    for (const auto& s : segments) {
      if (t <= s.t1) return s;
    }
    return segments.back();
  }
  Pose pose(double t) const { return at(t).pose_at(t); }
  double width(double t) const { return at(t).width_at(t); }
};

/// Minimal rotation taking the world x axis onto the given direction.
Quat forward_to(const Vec3& dir) {
  const Vec3 x = Vec3::UnitX();
  const Vec3 d = dir.normalized();
  const double c = x.dot(d);
  if (c > 1.0 - 1e-12) return Quat::Identity();
  if (c < -1.0 + 1e-12) return Quat(0.0, 0.0, 0.0, 1.0);  // 180 deg about z
  const Vec3 axis = x.cross(d).normalized();
  return exp_so3(axis * std::acos(std::clamp(c, -1.0, 1.0)));
}

double solve_crossing(const std::function<double(double)>& f, double lo,
                      double hi, double target) {
  // First bracket on a fine scan, then bisect. Assumes f(lo) < target
  // somewhere before the upward crossing.
  const int kScan = 512;
  double a = lo, b = hi;
  bool bracketed = false;
  double prev_t = lo, prev_v = f(lo);
  for (int i = 1; i <= kScan; ++i) {
    const double t = lo + (hi - lo) * i / kScan;
    const double v = f(t);
    if (prev_v < target && v >= target) {
      a = prev_t;
      b = t;
      bracketed = true;
      break;
    }
    prev_t = t;
    prev_v = v;
  }
  if (!bracketed) return std::numeric_limits<double>::quiet_NaN();
  for (int i = 0; i < 80; ++i) {
    const double m = 0.5 * (a + b);
    if (f(m) < target) {
      a = m;
    } else {
      b = m;
    }
  }
  return 0.5 * (a + b);
}

Script build_script(const ScenarioConfig& sc, const RigConfig& rig,
                    std::vector<TaskEventTimes>* events) {
  Script script;
  const double w_open = rig.thresholds.max_open_width;
  const PhaseDurations& d = sc.durations;

  if (sc.apples.empty()) {
    Segment idle;
    idle.kind = Segment::Kind::hold;
    idle.t0 = 0.0;
    idle.t1 = sc.idle_duration;
    idle.start = idle.end = sc.home_pose;
    idle.w0 = idle.w1 = w_open;
    script.segments.push_back(idle);
    script.t_end = sc.idle_duration;
    return script;
  }

  const Vec3 drop_t = sc.storage_pose.t + Vec3(0.0, 0.0, sc.drop_height);
  Pose drop;
  drop.t = drop_t;
  drop.q = forward_to(sc.storage_pose.t - drop_t);

  double t = 0.0;
  Pose current = sc.home_pose;
  auto push = [&](Segment::Kind kind, double dur, const Pose& target, double w0,
                  double w1, double twist = 0.0) -> Segment& {
    Segment s;
    s.kind = kind;
    s.t0 = t;
    s.t1 = t + dur;
    s.start = current;
    s.end = target;
    s.twist = twist;
    s.w0 = w0;
    s.w1 = w1;
    script.segments.push_back(s);
    t = s.t1;
    current = s.pose_at(s.t1);
    return script.segments.back();
  };

  for (std::size_t i = 0; i < sc.apples.size(); ++i) {
    TaskEventTimes ev;
    push(Segment::Kind::move, d.approach, sc.apples[i], w_open, w_open);

    Segment& grasp = push(Segment::Kind::hold, d.grasp_close, current, w_open,
                          sc.apple_diameter);
    ev.grasp = solve_crossing(
        [&](double u) { return -grasp.width_at(grasp.t0 + u * d.grasp_close); },
        0.0, 1.0, -rig.thresholds.grasp_threshold);
    ev.grasp = grasp.t0 + ev.grasp * d.grasp_close;

    push(Segment::Kind::twist, d.twist, current, sc.apple_diameter,
         sc.apple_diameter, sc.twist_angle);

    // Twist is about the forward axis, so the grasp pose still gives the
    // pull-back direction.
    Pose retreat_target = current;
    retreat_target.t =
        current.t - sc.retreat_distance * (sc.apples[i].q * Vec3::UnitX());
    push(Segment::Kind::move, d.retreat, retreat_target, sc.apple_diameter,
         sc.apple_diameter);

    push(Segment::Kind::move, d.transfer, drop, sc.apple_diameter,
         sc.apple_diameter);

    Segment& release = push(Segment::Kind::hold, d.release, current,
                            sc.apple_diameter, w_open);
    ev.release = solve_crossing(
        [&](double u) { return release.width_at(release.t0 + u * d.release); },
        0.0, 1.0, rig.thresholds.release_threshold);
    ev.release = release.t0 + ev.release * d.release;

    Segment& depart =
        push(Segment::Kind::move, d.depart, sc.home_pose, w_open, w_open);
    // Keep facing the storage marker on the way out so the on-board camera
    // holds its distance signal.
    depart.end.q = drop.q;
    current.q = drop.q;
    auto distance_at = [&](double u) {
      const Pose g = depart.pose_at(depart.t0 + u * d.depart);
      const Pose cam = compose(g, sc.onboard_in_gripper);
      return (cam.t - sc.storage_pose.t).norm();
    };
    const double u_dep =
        solve_crossing(distance_at, 0.0, 1.0, rig.thresholds.leave_distance);
    if (!std::isfinite(u_dep)) {
      throw ValidationError(
          "depart phase never crosses leave_distance; move home further from "
          "the storage marker");
    }
    ev.departure = depart.t0 + u_dep * d.depart;
    if (!std::isfinite(ev.grasp) || !std::isfinite(ev.release)) {
      throw ValidationError("width profile never crosses its thresholds");
    }
    events->push_back(ev);
  }

  // The demo ends at the moment the gripper leaves the storage area after
  // the last apple; anything past that would start a phantom extra task.
  script.t_end = events->back().departure;
  return script;
}

std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 over (seed, stream id)
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace

GroundTruth generate_ground_truth(const ScenarioConfig& sc, const RigConfig& rig) {
  sc.validate(rig);
  GroundTruth gt;
  const Script script = build_script(sc, rig, &gt.events);

  const double dt = 1.0 / sc.imu_rate;
  const int n = static_cast<int>(std::floor(script.t_end / dt + 1e-9)) + 1;
  gt.trajectory.samples.reserve(static_cast<std::size_t>(n));
  gt.width.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    const double t = k * dt;
    gt.trajectory.samples.push_back({t, script.pose(t), std::nullopt});
    gt.width.push_back({t, script.width(t)});
  }
  return gt;
}

std::vector<ImuSample> synthesize_imu(const Trajectory& gt,
                                      const NoiseParams& noise,
                                      const Vec3& gravity, std::uint64_t seed) {
  const auto& s = gt.samples;
  if (s.size() < 3) {
    throw ValidationError("synthesize_imu: need at least 3 trajectory samples");
  }
  const double dt = (s.back().t - s.front().t) / static_cast<double>(s.size() - 1);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto draw3 = [&] { return Vec3(gauss(rng), gauss(rng), gauss(rng)); };

  Vec3 bias_g = noise.init_sigma_bg * draw3();
  Vec3 bias_a = noise.init_sigma_ba * draw3();

  std::vector<ImuSample> out;
  out.reserve(s.size());
  const std::size_t n = s.size();
  for (std::size_t k = 0; k < n; ++k) {
    // Forward-difference body rate over [t_k, t_k+dt]: the strapdown
    // recurrence q <- q Exp(w dt) inverts it exactly.
    const std::size_t kg = std::min(k, n - 2);
    const Vec3 gyro =
        log_so3(s[kg].pose.q.conjugate() * s[kg + 1].pose.q) / dt;

    const std::size_t ka = std::clamp<std::size_t>(k, 1, n - 2);
    const Vec3 accel_world =
        (s[ka + 1].pose.t - 2.0 * s[ka].pose.t + s[ka - 1].pose.t) / (dt * dt);
    const Vec3 specific_force =
        s[k].pose.q.conjugate() * (accel_world - gravity);

    ImuSample m;
    m.t = s[k].t;
    m.gyro = gyro + bias_g + noise.gyro_noise_density / std::sqrt(dt) * draw3();
    m.accel = specific_force + bias_a +
              noise.accel_noise_density / std::sqrt(dt) * draw3();
    out.push_back(m);

    bias_g += noise.gyro_bias_walk * std::sqrt(dt) * draw3();
    bias_a += noise.accel_bias_walk * std::sqrt(dt) * draw3();
  }
  return out;
}

namespace {

bool occluded(const ScenarioConfig& sc, const std::string& camera_id, double t) {
  for (const auto& w : sc.occlusions) {
    if (w.camera_id == camera_id && t >= w.t_start && t <= w.t_end) return true;
  }
  return false;
}

}  // namespace

std::vector<MarkerDetection> synthesize_detections(const Trajectory& gt,
                                                   const RigConfig& rig,
                                                   const ScenarioConfig& sc,
                                                   std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  auto draw3 = [&] { return Vec3(gauss(rng), gauss(rng), gauss(rng)); };

  const double sigma_t = rig.noise.meas_sigma_t * sc.noise_scale;
  const double sigma_r = rig.noise.meas_sigma_r * sc.noise_scale;
  constexpr double kFaceLimit = 70.0 * M_PI / 180.0;

  std::vector<MarkerDetection> out;
  auto emit = [&](double t, const std::string& camera_id,
                  const std::string& marker_id, const Pose& exact) {
    if (sc.dropout_probability > 0.0 && uniform(rng) < sc.dropout_probability) {
      return;
    }
    MarkerDetection d;
    d.t = t;
    d.camera_id = camera_id;
    d.marker_id = marker_id;
    d.pose_cm.t = exact.t + sigma_t * draw3();
    d.pose_cm.q = (exp_so3(sigma_r * draw3()) * exact.q).normalized();
    d.quality = 0.0;
    out.push_back(std::move(d));
  };

  const double t_end = gt.samples.back().t;
  const double dt = 1.0 / sc.detection_rate;
  for (int j = 0;; ++j) {
    const double t = j * dt;
    if (t > t_end + 1e-12) break;
    const auto pose_wg = sample_trajectory(gt, std::min(t, t_end));
    if (!pose_wg) break;

    for (const auto& cam : rig.cameras) {
      if (occluded(sc, cam.camera_id, t)) continue;
      const Vec3 cam_axis = cam.pose_wc.q * Vec3::UnitZ();
      auto visible = [&](const Pose& pose_wm) {
        const Vec3 to_cam = cam.pose_wc.t - pose_wm.t;
        const Vec3 normal = pose_wm.q * Vec3::UnitZ();
        if (std::acos(std::clamp(normal.dot(to_cam.normalized()), -1.0, 1.0)) >
            kFaceLimit) {
          return false;
        }
        const Vec3 to_marker = pose_wm.t - cam.pose_wc.t;
        if (std::acos(std::clamp(cam_axis.dot(to_marker.normalized()), -1.0,
                                 1.0)) > cam.fov_half_angle) {
          return false;
        }
        return compose(inverse(cam.pose_wc), pose_wm).t.z() > 0.0;
      };

      if (visible(cam.tag_pose_wt)) {
        emit(t, cam.camera_id, cam.tag_id,
             compose(inverse(cam.pose_wc), cam.tag_pose_wt));
      }
      for (const auto& marker : rig.gripper_markers) {
        const Pose pose_wm = compose(*pose_wg, marker.pose_gm);
        if (!visible(pose_wm)) continue;
        emit(t, cam.camera_id, marker.marker_id,
             compose(inverse(cam.pose_wc), pose_wm));
      }
    }

    // On-board sighting of the storage marker.
    if (!occluded(sc, kOnboardCameraId, t)) {
      const Pose cam_pose = compose(*pose_wg, sc.onboard_in_gripper);
      const Vec3 to_cam = cam_pose.t - sc.storage_pose.t;
      const Vec3 normal = sc.storage_pose.q * Vec3::UnitZ();
      const Vec3 cam_axis = cam_pose.q * Vec3::UnitZ();
      const Vec3 to_marker = sc.storage_pose.t - cam_pose.t;
      const bool facing =
          to_cam.norm() > 1e-9 &&
          std::acos(std::clamp(normal.dot(to_cam.normalized()), -1.0, 1.0)) <=
              kFaceLimit;
      const bool in_cone =
          std::acos(std::clamp(cam_axis.dot(to_marker.normalized()), -1.0,
                               1.0)) <= sc.onboard_fov_half_angle;
      if (facing && in_cone) {
        const Pose pose_cm = compose(inverse(cam_pose), sc.storage_pose);
        if (pose_cm.t.z() > 0.0) {
          emit(t, kOnboardCameraId, rig.storage_marker_id, pose_cm);
        }
      }
    }
  }
  return out;
}

SyntheticDemo generate_demo(const ScenarioConfig& sc, const RigConfig& rig) {
  SyntheticDemo demo;
  demo.rig = rig;
  demo.truth = generate_ground_truth(sc, rig);

  NoiseParams scaled = rig.noise;
  scaled.gyro_noise_density *= sc.noise_scale;
  scaled.accel_noise_density *= sc.noise_scale;
  scaled.gyro_bias_walk *= sc.noise_scale;
  scaled.accel_bias_walk *= sc.noise_scale;
  scaled.init_sigma_bg *= sc.noise_scale;
  scaled.init_sigma_ba *= sc.noise_scale;

  demo.imu = synthesize_imu(demo.truth.trajectory, scaled, rig.gravity,
                            sub_seed(sc.seed, 1));
  demo.detections =
      synthesize_detections(demo.truth.trajectory, rig, sc, sub_seed(sc.seed, 2));

  const double t_end = demo.truth.trajectory.samples.back().t;
  const double dtw = 1.0 / sc.width_rate;
  Trajectory width_curve;  // reuse the interpolator for the width signal
  for (const auto& w : demo.truth.width) {
    width_curve.samples.push_back({w.t, Pose{Quat::Identity(), Vec3(w.width, 0, 0)},
                                   std::nullopt});
  }
  for (int j = 0;; ++j) {
    const double t = j * dtw;
    if (t > t_end + 1e-12) break;
    const auto p = sample_trajectory(width_curve, std::min(t, t_end));
    if (!p) break;
    demo.width_stream.push_back({t, p->t.x()});
  }
  return demo;
}

void write_demo(const SyntheticDemo& demo, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());

  write_file_atomic(dir / "imu.jsonl", serialize_imu(demo.imu));
  write_file_atomic(dir / "detections.jsonl", serialize_detections(demo.detections));
  write_file_atomic(dir / "width.jsonl", serialize_width(demo.width_stream));

  std::vector<GroundTruthSample> gt;
  gt.reserve(demo.truth.trajectory.samples.size());
  for (const auto& s : demo.truth.trajectory.samples) gt.push_back({s.t, s.pose});
  write_file_atomic(dir / "gt.jsonl", serialize_ground_truth(gt));

  Json truth;
  truth["t_end"] = demo.truth.trajectory.samples.back().t;
  truth["events"] = Json::array();
  for (const auto& e : demo.truth.events) {
    Json ej;
    ej["grasp"] = e.grasp;
    ej["release"] = e.release;
    ej["departure"] = e.departure;
    truth["events"].push_back(ej);
  }
  truth["rig"] = Json::parse(serialize_rig_config(demo.rig));
  write_file_atomic(dir / "truth.json", truth.dump(2) + "\n");
}

ScenarioConfig load_scenario(const std::filesystem::path& path) {
  const Json j = load_json(path);
  ScenarioConfig sc;
  if (j.contains("apples")) {
    for (const auto& a : j["apples"]) sc.apples.push_back(pose_from_json(a));
  }
  if (j.contains("storage_pose")) sc.storage_pose = pose_from_json(j["storage_pose"]);
  if (j.contains("home_pose")) sc.home_pose = pose_from_json(j["home_pose"]);
  if (j.contains("durations")) {
    const Json& d = j["durations"];
    auto opt = [&](const char* key, double& field) {
      if (d.contains(key)) field = d.at(key).get<double>();
    };
    opt("approach", sc.durations.approach);
    opt("grasp_close", sc.durations.grasp_close);
    opt("twist", sc.durations.twist);
    opt("retreat", sc.durations.retreat);
    opt("transfer", sc.durations.transfer);
    opt("release", sc.durations.release);
    opt("depart", sc.durations.depart);
  }
  auto opt = [&](const char* key, double& field) {
    if (j.contains(key)) field = j.at(key).get<double>();
  };
  opt("twist_angle", sc.twist_angle);
  opt("apple_diameter", sc.apple_diameter);
  opt("retreat_distance", sc.retreat_distance);
  opt("drop_height", sc.drop_height);
  opt("idle_duration", sc.idle_duration);
  opt("imu_rate", sc.imu_rate);
  opt("detection_rate", sc.detection_rate);
  opt("width_rate", sc.width_rate);
  opt("noise_scale", sc.noise_scale);
  opt("dropout_probability", sc.dropout_probability);
  if (j.contains("seed")) sc.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("occlusions")) {
    for (const auto& w : j["occlusions"]) {
      sc.occlusions.push_back({w.at("camera_id").get<std::string>(),
                               w.at("t_start").get<double>(),
                               w.at("t_end").get<double>()});
    }
  }
  if (j.contains("onboard_in_gripper")) {
    sc.onboard_in_gripper = pose_from_json(j["onboard_in_gripper"]);
  }
  if (j.contains("onboard_fov_half_angle_deg")) {
    sc.onboard_fov_half_angle =
        j.at("onboard_fov_half_angle_deg").get<double>() * M_PI / 180.0;
  }
  return sc;
}

}  // namespace demofuse
