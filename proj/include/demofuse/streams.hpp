#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "demofuse/geom.hpp"

namespace demofuse {

/// camera_id reserved for the gripper's own camera; its detections carry the
/// storage-marker distance signal and are never used for localization.
inline constexpr const char* kOnboardCameraId = "onboard";

struct ImuSample {
  double t = 0.0;   // seconds on the demo clock
  Vec3 gyro;        // rad/s, body frame
  Vec3 accel;       // m/s^2, specific force, body frame
};

struct MarkerDetection {
  double t = 0.0;
  std::string camera_id;
  std::string marker_id;
  Pose pose_cm;           // marker in camera frame; translation z > 0
  double quality = 0.0;   // reprojection residual proxy, >= 0
};

struct WidthSample {
  double t = 0.0;
  double width = 0.0;  // meters
};

struct GroundTruthSample {
  double t = 0.0;
  Pose pose_wg;  // gripper in world
};

/// One timestamped sensor event. Merge order is (t, source priority) with
/// priority IMU < detection < width.
struct MeasurementEvent {
  std::variant<ImuSample, MarkerDetection, WidthSample> payload;
  std::size_t source = 0;  // index of the originating stream at merge time

  double t() const;
  int priority() const;

  bool is_imu() const { return payload.index() == 0; }
  bool is_detection() const { return payload.index() == 1; }
  bool is_width() const { return payload.index() == 2; }

  const ImuSample& imu() const { return std::get<ImuSample>(payload); }
  const MarkerDetection& detection() const {
    return std::get<MarkerDetection>(payload);
  }
  const WidthSample& width() const { return std::get<WidthSample>(payload); }
};

/// IMU noise densities, detection noise model, filter initialization sigmas
/// and the innovation gate. All values are overridable via the rig config or
/// a standalone noise JSON.
struct NoiseParams {
  double gyro_noise_density = 2e-3;    // rad/s/sqrt(Hz)
  double accel_noise_density = 2e-2;   // m/s^2/sqrt(Hz)
  double gyro_bias_walk = 5e-5;        // rad/s/sqrt(s)
  double accel_bias_walk = 5e-4;       // m/s^2/sqrt(s)

  double meas_sigma_t = 5e-3;          // m, base detection translation sigma
  double meas_sigma_r = 0.017453292519943295;  // rad (1 deg), base rotation sigma
  double fusion_window = 5e-3;         // s, simultaneous-observation window

  double init_sigma_p = 1e-2;          // m
  double init_sigma_v = 5e-2;          // m/s
  double init_sigma_theta = 2e-2;      // rad
  double init_sigma_bg = 5e-3;         // rad/s
  double init_sigma_ba = 5e-2;         // m/s^2

  double gate_chi2 = 12.592;           // chi-square, 6 dof, 95%

  void validate() const;
};

/// Task-boundary detection thresholds. A zero in release_threshold or
/// grasp_threshold means "derive the documented default".
struct SegmenterConfig {
  double max_fruit_width = 0.08;       // m
  double max_open_width = 0.10;        // m
  double release_threshold = 0.0;      // default: midpoint of the two above
  double grasp_threshold = 0.0;        // default: max_fruit_width
  double width_hysteresis = 2e-3;      // m
  double leave_distance = 0.35;        // m
  double leave_hysteresis = 2e-2;      // m
  double detection_gap_timeout = 1.0;  // s

  void apply_defaults();
  void validate() const;
};

struct CameraConfig {
  std::string camera_id;
  Pose pose_wc;              // camera in world
  std::string tag_id;        // AprilTag this camera is anchored to
  Pose tag_pose_wt;          // tag in world
  double fov_half_angle = 1.1344640137963142;  // rad (65 deg) view cone
};

struct GripperMarker {
  std::string marker_id;
  Pose pose_gm;  // marker in gripper frame; marker +z is the face normal
};

/// Static scene description: external cameras with their anchor tags, the
/// markers rigidly attached to the gripper, the storage marker id, gravity
/// and the tunable thresholds/noise blocks.
struct RigConfig {
  std::vector<CameraConfig> cameras;
  std::vector<GripperMarker> gripper_markers;
  std::string storage_marker_id;
  Vec3 gravity = Vec3(0.0, 0.0, -9.81);
  SegmenterConfig thresholds;
  NoiseParams noise;

  const CameraConfig* find_camera(const std::string& id) const;
  const GripperMarker* find_marker(const std::string& id) const;
  void validate() const;
};

enum class StreamKind { imu, detections, width };

// --- file I/O (JSON Lines; schemas in docs/formats.md) ---

std::vector<ImuSample> parse_imu(const std::filesystem::path& path);
std::vector<MarkerDetection> parse_detections(const std::filesystem::path& path);
std::vector<WidthSample> parse_width(const std::filesystem::path& path);
std::vector<GroundTruthSample> parse_ground_truth(const std::filesystem::path& path);

/// Generic entry point: parse one stream file into measurement events
/// (source index 0). Malformed lines and non-monotonic timestamps raise
/// ValidationError naming the line.
std::vector<MeasurementEvent> parse_stream(const std::filesystem::path& path,
                                           StreamKind kind);

std::string serialize_imu(const std::vector<ImuSample>& samples);
std::string serialize_detections(const std::vector<MarkerDetection>& dets);
std::string serialize_width(const std::vector<WidthSample>& samples);
std::string serialize_ground_truth(const std::vector<GroundTruthSample>& samples);

/// Globally ordered merge of individually ordered streams. Ties on t are
/// broken by source priority (IMU < detection < width), then stream index.
std::vector<MeasurementEvent> merge_streams(
    const std::vector<std::vector<MeasurementEvent>>& streams);

RigConfig load_rig_config(const std::filesystem::path& path);
std::string serialize_rig_config(const RigConfig& rig);
void save_rig_config(const RigConfig& rig, const std::filesystem::path& path);

NoiseParams load_noise_params(const std::filesystem::path& path);
std::string serialize_noise_params(const NoiseParams& noise);

}  // namespace demofuse
