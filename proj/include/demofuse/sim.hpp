#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "demofuse/ekf.hpp"
#include "demofuse/streams.hpp"

namespace demofuse {

struct PhaseDurations {
  double approach = 1.2;
  double grasp_close = 0.5;
  double twist = 0.8;
  double retreat = 0.6;
  double transfer = 1.4;
  double release = 0.5;
  double depart = 1.0;
};

struct OcclusionWindow {
  std::string camera_id;
  double t_start = 0.0;
  double t_end = 0.0;
};

/// Scripted picking scene: per-apple grasp poses, the storage marker pose and
/// the home pose, phase durations, sensor rates and the stochastic knobs.
/// noise_scale multiplies every injected noise term (0 gives noiseless
/// streams without touching the filter-side NoiseParams).
struct ScenarioConfig {
  std::vector<Pose> apples;    // gripper grasp pose per apple
  Pose storage_pose;           // storage marker in world (+z = face normal)
  Pose home_pose;
  PhaseDurations durations;
  double twist_angle = 1.2;      // rad, about the gripper forward (+x) axis
  double apple_diameter = 0.06;  // m, width target while grasping
  double retreat_distance = 0.12;  // m, pull-back along -forward
  double drop_height = 0.18;       // m above the storage marker
  double idle_duration = 5.0;      // demo length when there are no apples
  double imu_rate = 200.0;         // Hz
  double detection_rate = 30.0;    // Hz, per camera
  double width_rate = 30.0;        // Hz
  std::uint64_t seed = 0;
  double noise_scale = 1.0;
  std::vector<OcclusionWindow> occlusions;
  double dropout_probability = 0.0;
  Pose onboard_in_gripper;         // on-board camera mount (optical +z = forward)
  double onboard_fov_half_angle = 1.0471975511965976;  // rad (60 deg)

  void validate(const RigConfig& rig) const;
};

/// Scripted truth per apple (threshold-crossing times on the analytic
/// profiles).
struct TaskEventTimes {
  double grasp = 0.0;
  double release = 0.0;
  double departure = 0.0;
};

struct GroundTruth {
  Trajectory trajectory;            // sampled at imu_rate
  std::vector<WidthSample> width;   // sampled at imu_rate
  std::vector<TaskEventTimes> events;
};

struct SyntheticDemo {
  GroundTruth truth;
  std::vector<ImuSample> imu;
  std::vector<MarkerDetection> detections;
  std::vector<WidthSample> width_stream;  // sampled at width_rate
  RigConfig rig;                          // the true rig used for synthesis
};

/// Piecewise min-jerk position / constant-rate orientation trajectory through
/// the scripted waypoints, the width profile and the true event times. The
/// demo ends exactly at the last apple's departure-distance crossing.
GroundTruth generate_ground_truth(const ScenarioConfig& sc, const RigConfig& rig);

/// Finite-difference inertial synthesis from a uniformly sampled trajectory:
/// forward-difference body rates, central-difference accelerations, plus
/// white noise and bias random walks (initial biases drawn from the filter
/// init sigmas). Pass a zeroed NoiseParams copy for noiseless output.
std::vector<ImuSample> synthesize_imu(const Trajectory& gt,
                                      const NoiseParams& noise,
                                      const Vec3& gravity, std::uint64_t seed);

/// Per-epoch marker detections from the external cameras (gripper markers by
/// the visibility cone rules, the camera's own anchor tag unconditionally)
/// and on-board storage-marker detections, with noise, dropouts and
/// occlusion windows applied.
std::vector<MarkerDetection> synthesize_detections(const Trajectory& gt,
                                                   const RigConfig& rig,
                                                   const ScenarioConfig& sc,
                                                   std::uint64_t seed);

/// Full scenario synthesis with deterministic per-stream sub-seeds.
SyntheticDemo generate_demo(const ScenarioConfig& sc, const RigConfig& rig);

/// Write imu.jsonl, detections.jsonl, width.jsonl, gt.jsonl and truth.json
/// (event times + true rig) into dir.
void write_demo(const SyntheticDemo& demo, const std::filesystem::path& dir);

ScenarioConfig load_scenario(const std::filesystem::path& path);

}  // namespace demofuse
