#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>

#include "demofuse/errors.hpp"
#include "demofuse/json_io.hpp"
#include "demofuse/sim.hpp"
#include "support.hpp"

using namespace demofuse;

namespace {

ScenarioConfig clean_scenario() {
  ScenarioConfig sc = test::bundled_scenario();
  sc.noise_scale = 0.0;
  return sc;
}

std::string slurp(const std::filesystem::path& p) { return read_file(p); }

}  // namespace

TEST_CASE("generate_ground_truth: zero apples holds home") {
  const RigConfig rig = test::bundled_rig();
  ScenarioConfig sc = clean_scenario();
  sc.apples.clear();
  sc.idle_duration = 2.0;
  const GroundTruth gt = generate_ground_truth(sc, rig);
  CHECK(gt.events.empty());
  REQUIRE(!gt.trajectory.samples.empty());
  for (const auto& s : gt.trajectory.samples) {
    CHECK((s.pose.t - sc.home_pose.t).norm() < 1e-12);
    CHECK(geodesic_angle(s.pose.q, sc.home_pose.q) < 1e-12);
  }
  for (const auto& w : gt.width) {
    CHECK(w.width == doctest::Approx(rig.thresholds.max_open_width));
  }
}

TEST_CASE("generate_ground_truth: event times sit inside their phases") {
  const RigConfig rig = test::bundled_rig();
  ScenarioConfig sc = clean_scenario();
  sc.apples.resize(1);
  const GroundTruth gt = generate_ground_truth(sc, rig);
  REQUIRE(gt.events.size() == 1);
  const PhaseDurations& d = sc.durations;
  const TaskEventTimes& ev = gt.events[0];
  // grasp during grasp_close
  CHECK(ev.grasp > d.approach);
  CHECK(ev.grasp < d.approach + d.grasp_close);
  // release during the release phase
  const double release_phase_start =
      d.approach + d.grasp_close + d.twist + d.retreat + d.transfer;
  CHECK(ev.release > release_phase_start);
  CHECK(ev.release < release_phase_start + d.release);
  // departure during depart, and the demo ends exactly there
  CHECK(ev.departure > release_phase_start + d.release);
  CHECK(ev.departure < release_phase_start + d.release + d.depart);
  CHECK(gt.trajectory.samples.back().t <= ev.departure + 1e-9);
}

TEST_CASE("generate_ground_truth: three apples give three ordered event triplets") {
  const RigConfig rig = test::bundled_rig();
  const GroundTruth gt = generate_ground_truth(clean_scenario(), rig);
  REQUIRE(gt.events.size() == 3);
  double prev = -1.0;
  for (const auto& ev : gt.events) {
    CHECK(ev.grasp < ev.release);
    CHECK(ev.release < ev.departure);
    CHECK(ev.grasp > prev);
    prev = ev.departure;
  }
}

TEST_CASE("generate_ground_truth: degenerate apple placement is rejected") {
  const RigConfig rig = test::bundled_rig();
  ScenarioConfig sc = clean_scenario();
  sc.apples[0].t = sc.storage_pose.t + Vec3(0.004, 0, 0);
  CHECK_THROWS_WITH_AS(generate_ground_truth(sc, rig),
                       doctest::Contains("degenerate"), ValidationError);
}

TEST_CASE("ground truth position is C1 at phase joints") {
  const RigConfig rig = test::bundled_rig();

  SUBCASE("finite-difference velocity never jumps at motion scale") {
    const GroundTruth gt = generate_ground_truth(clean_scenario(), rig);
    const auto& s = gt.trajectory.samples;
    const double dt = s[1].t - s[0].t;
    double max_jump = 0.0;
    for (std::size_t k = 1; k + 1 < s.size(); ++k) {
      const Vec3 v_prev = (s[k].pose.t - s[k - 1].pose.t) / dt;
      const Vec3 v_next = (s[k + 1].pose.t - s[k].pose.t) / dt;
      max_jump = std::max(max_jump, (v_next - v_prev).norm());
    }
    // Within phases this is O(a*dt); a velocity break would be O(1).
    CHECK(max_jump < 0.05);
  }

  SUBCASE("one-sided velocities agree at the joints within 1e-6 m/s") {
    ScenarioConfig sc = clean_scenario();
    sc.apples.resize(1);
    sc.imu_rate = 20000.0;  // h = 5e-5 s one-sided differences
    const GroundTruth gt = generate_ground_truth(sc, rig);
    const auto& s = gt.trajectory.samples;
    const double h = s[1].t - s[0].t;
    const PhaseDurations& d = sc.durations;
    const double joints[] = {
        d.approach,
        d.approach + d.grasp_close,
        d.approach + d.grasp_close + d.twist,
        d.approach + d.grasp_close + d.twist + d.retreat,
        d.approach + d.grasp_close + d.twist + d.retreat + d.transfer,
        d.approach + d.grasp_close + d.twist + d.retreat + d.transfer + d.release,
    };
    for (double tj : joints) {
      const auto k = static_cast<std::size_t>(std::llround(tj / h));
      REQUIRE(k + 1 < s.size());
      REQUIRE(std::abs(s[k].t - tj) < 1e-12);
      const Vec3 v_minus = (s[k].pose.t - s[k - 1].pose.t) / h;
      const Vec3 v_plus = (s[k + 1].pose.t - s[k].pose.t) / h;
      CHECK((v_plus - v_minus).norm() < 1e-6);
    }
  }
}

TEST_CASE("synthesize_imu basics") {
  const RigConfig rig = test::bundled_rig();
  const Vec3 g = rig.gravity;
  NoiseParams zero = rig.noise;
  zero.gyro_noise_density = 0.0;
  zero.accel_noise_density = 0.0;
  zero.gyro_bias_walk = 0.0;
  zero.accel_bias_walk = 0.0;
  zero.init_sigma_bg = 0.0;
  zero.init_sigma_ba = 0.0;

  SUBCASE("fewer than 3 samples is an error") {
    Trajectory tiny;
    tiny.samples = {{0.0, Pose::identity(), std::nullopt},
                    {0.1, Pose::identity(), std::nullopt}};
    CHECK_THROWS_AS(synthesize_imu(tiny, zero, g, 0), ValidationError);
  }

  SUBCASE("static trajectory measures gravity only") {
    Trajectory still;
    for (int k = 0; k < 100; ++k) {
      still.samples.push_back({k * 0.005, Pose::identity(), std::nullopt});
    }
    const auto imu = synthesize_imu(still, zero, g, 1);
    for (const auto& m : imu) {
      CHECK((m.accel - Vec3(0, 0, 9.81)).norm() < 1e-9);
      CHECK(m.gyro.norm() < 1e-9);
    }
  }

  SUBCASE("constant velocity still measures gravity only") {
    Trajectory cv;
    for (int k = 0; k < 100; ++k) {
      cv.samples.push_back(
          {k * 0.005, Pose{Quat::Identity(), Vec3(0.3 * k * 0.005, 0, 0)},
           std::nullopt});
    }
    const auto imu = synthesize_imu(cv, zero, g, 1);
    for (const auto& m : imu) {
      CHECK((m.accel - Vec3(0, 0, 9.81)).norm() < 1e-8);
    }
  }

  SUBCASE("pure z-rotation at 1 rad/s") {
    Trajectory spin;
    for (int k = 0; k < 200; ++k) {
      const double t = k * 0.005;
      spin.samples.push_back(
          {t, Pose{exp_so3(Vec3(0, 0, t)), Vec3::Zero()}, std::nullopt});
    }
    const auto imu = synthesize_imu(spin, zero, g, 1);
    for (const auto& m : imu) {
      CHECK((m.gyro - Vec3(0, 0, 1)).norm() < 1e-6);
    }
  }
}

TEST_CASE("zero-noise IMU double-integrates back to ground truth over 60 s") {
  const RigConfig rig = test::bundled_rig();
  ScenarioConfig sc = clean_scenario();
  const double stretch = 3.3;  // ~58 s demo
  sc.durations.approach *= stretch;
  sc.durations.grasp_close *= stretch;
  sc.durations.twist *= stretch;
  sc.durations.retreat *= stretch;
  sc.durations.transfer *= stretch;
  sc.durations.release *= stretch;
  sc.durations.depart *= stretch;

  const GroundTruth gt = generate_ground_truth(sc, rig);
  NoiseParams zero = rig.noise;
  zero.gyro_noise_density = zero.accel_noise_density = 0.0;
  zero.gyro_bias_walk = zero.accel_bias_walk = 0.0;
  zero.init_sigma_bg = zero.init_sigma_ba = 0.0;
  const auto imu = synthesize_imu(gt.trajectory, zero, rig.gravity, 7);

  // Independent double-integration oracle: gyro increments applied over
  // their own intervals, trapezoidal quadrature for velocity and position.
  const auto& s0 = gt.trajectory.samples.front();
  Vec3 p = s0.pose.t, v = Vec3::Zero();
  Quat q = s0.pose.q;
  double max_err = 0.0;
  for (std::size_t k = 0; k + 1 < imu.size(); ++k) {
    const double dt = imu[k + 1].t - imu[k].t;
    const Vec3 a0 = q * imu[k].accel + rig.gravity;
    const Quat q_next = (q * exp_so3(imu[k].gyro * dt)).normalized();
    const Vec3 a1 = q_next * imu[k + 1].accel + rig.gravity;
    const Vec3 v_next = v + 0.5 * (a0 + a1) * dt;
    p += 0.5 * (v + v_next) * dt;
    v = v_next;
    q = q_next;
    max_err = std::max(
        max_err, (p - gt.trajectory.samples[k + 1].pose.t).norm());
  }
  CHECK(gt.trajectory.samples.back().t > 50.0);
  CHECK(max_err < 1e-3);
}

TEST_CASE("synthesize_detections respects visibility, occlusions and noise") {
  const RigConfig rig = test::bundled_rig();

  SUBCASE("zero-noise detections round trip to ground truth") {
    ScenarioConfig sc = clean_scenario();
    sc.apples.resize(1);
    const GroundTruth gt = generate_ground_truth(sc, rig);
    const auto dets = synthesize_detections(gt.trajectory, rig, sc, 3);
    REQUIRE(!dets.empty());
    for (const auto& d : dets) {
      const auto* cam = rig.find_camera(d.camera_id);
      const auto* marker = rig.find_marker(d.marker_id);
      if (cam == nullptr || marker == nullptr) continue;
      const Pose pose_wg =
          compose(compose(cam->pose_wc, d.pose_cm), inverse(marker->pose_gm));
      const auto truth = sample_trajectory(gt.trajectory, d.t);
      REQUIRE(truth.has_value());
      CHECK((pose_wg.t - truth->t).norm() < 1e-9);
      CHECK(geodesic_angle(pose_wg.q, truth->q) < 1e-9);
    }
  }

  SUBCASE("a marker facing away is never detected") {
    // Gripper at home faces the wall (-y); cube_left faces +y toward... the
    // world-frame normal of each detected marker must be within 70 deg of
    // the direction to its camera.
    ScenarioConfig sc = clean_scenario();
    const GroundTruth gt = generate_ground_truth(sc, rig);
    const auto dets = synthesize_detections(gt.trajectory, rig, sc, 3);
    constexpr double kLimit = 70.0 * M_PI / 180.0;
    for (const auto& d : dets) {
      const auto* cam = rig.find_camera(d.camera_id);
      const auto* marker = rig.find_marker(d.marker_id);
      if (cam == nullptr || marker == nullptr) continue;
      const auto truth = sample_trajectory(gt.trajectory, d.t);
      const Pose pose_wm = compose(*truth, marker->pose_gm);
      const Vec3 normal = pose_wm.q * Vec3::UnitZ();
      const Vec3 to_cam = (cam->pose_wc.t - pose_wm.t).normalized();
      CHECK(std::acos(std::clamp(normal.dot(to_cam), -1.0, 1.0)) <= kLimit + 1e-9);
    }
  }

  SUBCASE("occlusion windows silence a camera completely") {
    ScenarioConfig sc = clean_scenario();
    sc.occlusions.push_back({"cam1", 5.0, 5.5});
    const GroundTruth gt = generate_ground_truth(sc, rig);
    const auto dets = synthesize_detections(gt.trajectory, rig, sc, 3);
    for (const auto& d : dets) {
      if (d.camera_id == "cam1") {
        CHECK((d.t < 5.0 || d.t > 5.5));
      }
    }
  }

  SUBCASE("dropouts thin the stream") {
    ScenarioConfig sc = clean_scenario();
    const GroundTruth gt = generate_ground_truth(sc, rig);
    const auto full = synthesize_detections(gt.trajectory, rig, sc, 3);
    sc.dropout_probability = 0.5;
    const auto thinned = synthesize_detections(gt.trajectory, rig, sc, 3);
    CHECK(thinned.size() < full.size() * 0.6);
    CHECK(thinned.size() > full.size() * 0.4);
  }

  SUBCASE("on-board storage detections exist around release") {
    ScenarioConfig sc = clean_scenario();
    sc.apples.resize(1);
    const GroundTruth gt = generate_ground_truth(sc, rig);
    const auto dets = synthesize_detections(gt.trajectory, rig, sc, 3);
    const double release = gt.events[0].release;
    bool seen_near_release = false;
    for (const auto& d : dets) {
      if (d.camera_id != kOnboardCameraId) continue;
      CHECK(d.marker_id == rig.storage_marker_id);
      if (std::abs(d.t - release) < 0.2) seen_near_release = true;
    }
    CHECK(seen_near_release);
  }
}

TEST_CASE("write_demo determinism") {
  const RigConfig rig = test::bundled_rig();
  ScenarioConfig sc = test::bundled_scenario();
  sc.apples.resize(1);

  const auto dir1 = test::scratch_dir("sim_det_a");
  const auto dir2 = test::scratch_dir("sim_det_b");
  write_demo(generate_demo(sc, rig), dir1);
  write_demo(generate_demo(sc, rig), dir2);
  for (const char* name :
       {"imu.jsonl", "detections.jsonl", "width.jsonl", "gt.jsonl", "truth.json"}) {
    CHECK(slurp(dir1 / name) == slurp(dir2 / name));
  }

  SUBCASE("a different seed changes the noise realization") {
    sc.seed += 1;
    const auto dir3 = test::scratch_dir("sim_det_c");
    write_demo(generate_demo(sc, rig), dir3);
    CHECK(slurp(dir1 / "imu.jsonl") != slurp(dir3 / "imu.jsonl"));
    CHECK(slurp(dir1 / "gt.jsonl") == slurp(dir3 / "gt.jsonl"));  // noise-free truth
  }

  SUBCASE("written streams parse back to the same sequences") {
    const auto imu = parse_imu(dir1 / "imu.jsonl");
    const auto dets = parse_detections(dir1 / "detections.jsonl");
    const SyntheticDemo demo = generate_demo(sc, rig);
    // sc.seed was restored by subcase isolation
    REQUIRE(imu.size() == demo.imu.size());
    REQUIRE(dets.size() == demo.detections.size());
    CHECK(imu[5].t == demo.imu[5].t);
    CHECK((imu[5].accel - demo.imu[5].accel).norm() == 0.0);
  }
}

TEST_CASE("truth.json embeds the true rig and event times") {
  const RigConfig rig = test::bundled_rig();
  ScenarioConfig sc = test::bundled_scenario();
  const auto dir = test::scratch_dir("sim_truth");
  write_demo(generate_demo(sc, rig), dir);
  const Json truth = load_json(dir / "truth.json");
  CHECK(truth.at("events").size() == 3);
  CHECK(truth.at("rig").at("storage_marker_id").get<std::string>() == "storage_box");
  CHECK(truth.at("events")[0].contains("departure"));
}
