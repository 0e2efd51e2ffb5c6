#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "demofuse/markerloc.hpp"
#include "demofuse/streams.hpp"

namespace demofuse {

using Mat15 = Eigen::Matrix<double, 15, 15>;
using Vec6 = Eigen::Matrix<double, 6, 1>;

/// Error-state EKF nominal state plus the 15x15 error covariance, ordered
/// (dp, dv, dtheta, db_g, db_a). Orientation error is a world-frame (left)
/// perturbation: q_true = exp_so3(dtheta) ∘ q.
struct FilterState {
  double t = 0.0;
  Vec3 p = Vec3::Zero();   // m, world
  Vec3 v = Vec3::Zero();   // m/s, world
  Quat q = Quat::Identity();  // body -> world
  Vec3 b_g = Vec3::Zero();  // rad/s
  Vec3 b_a = Vec3::Zero();  // m/s^2
  Mat15 P = Mat15::Identity();

  Pose pose() const { return {q, p}; }
};

struct TrajectorySample {
  double t = 0.0;
  Pose pose;
  std::optional<Vec6> cov_diag;  // (dp, dtheta) covariance diagonal
};

/// Timestamped pose sequence with strictly increasing t.
struct Trajectory {
  std::vector<TrajectorySample> samples;
};

/// Linear/slerp interpolation at time t; nullopt outside the sampled range.
std::optional<Pose> sample_trajectory(const Trajectory& traj, double t);

std::string serialize_trajectory(const Trajectory& traj);
Trajectory parse_trajectory(const std::filesystem::path& path);

struct FilterLogEntry {
  double t = 0.0;
  std::string kind;  // init | predict | update | stale_applied | stale_dropped
  bool accepted = true;
  double mahalanobis2 = 0.0;
  std::size_t n_sources = 0;
};

struct FilterLog {
  std::vector<FilterLogEntry> entries;
  std::size_t updates_accepted = 0;
  std::size_t updates_rejected = 0;
  std::size_t stale_applied = 0;
  std::size_t stale_dropped = 0;
};

std::string serialize_filter_log(const FilterLog& log);

/// Pose and orientation from the observation, zero velocity and biases,
/// block-diagonal P from the initial sigmas.
FilterState initialize(const PoseObservation& first_obs, const NoiseParams& noise);

/// Strapdown propagation over one step (0 < dt <= 0.1 s) with zero-order-held
/// IMU values, first-order error-state transition and the documented Q.
FilterState predict(const FilterState& state, const ImuSample& imu, double dt,
                    const NoiseParams& noise, const Vec3& gravity);

/// predict() split into equal substeps of <= 0.1 s for larger gaps.
FilterState predict_span(const FilterState& state, const ImuSample& imu,
                         double t_target, const NoiseParams& noise,
                         const Vec3& gravity);

struct UpdateOutcome {
  FilterState state;
  bool accepted = false;
  double mahalanobis2 = 0.0;
};

/// Pose update with chi-square innovation gating (threshold noise.gate_chi2,
/// 6 dof). A rejected observation leaves the state untouched. Covariance is
/// propagated in Joseph form and symmetrized.
UpdateOutcome update(const FilterState& state, const PoseObservation& obs,
                     const NoiseParams& noise);

struct RunResult {
  Trajectory trajectory;
  FilterLog log;
};

/// Per-step hook, called after every predict/update with the new state.
using StateObserver = std::function<void(const FilterState&)>;

/// Process a merged, time-ordered event stream: external-camera gripper
/// detections become pose observations (fused within noise.fusion_window;
/// an IMU arrival closes the pending fusion epoch), IMU samples drive
/// prediction. The filter idles until the first gripper observation.
RunResult run_filter(const std::vector<MeasurementEvent>& events,
                     const RigConfig& rig, const NoiseParams& noise,
                     const StateObserver& observer = {});

}  // namespace demofuse
