#include "demofuse/baselines.hpp"

#include "demofuse/errors.hpp"
#include "demofuse/markerloc.hpp"

namespace demofuse {

namespace {

/// Per-detection pose observations in stream order, skipping tag and
/// on-board sightings.
std::vector<PoseObservation> gripper_observations(
    const std::vector<MeasurementEvent>& events, const RigConfig& rig) {
  std::vector<PoseObservation> obs;
  for (const auto& e : events) {
    if (!e.is_detection()) continue;
    const MarkerDetection& d = e.detection();
    if (rig.find_camera(d.camera_id) == nullptr ||
        rig.find_marker(d.marker_id) == nullptr) {
      continue;
    }
    obs.push_back(gripper_pose_from_detection(d, rig));
  }
  return obs;
}

}  // namespace

Trajectory baseline_marker_only(const std::vector<MeasurementEvent>& events,
                                const RigConfig& rig) {
  const std::vector<PoseObservation> obs = gripper_observations(events, rig);
  if (obs.empty()) {
    throw ValidationError("baseline_marker_only: no gripper-marker detections");
  }

  Trajectory traj;
  std::vector<PoseObservation> pending;
  auto flush = [&] {
    if (pending.empty()) return;
    const PoseObservation fused = fuse_simultaneous(pending);
    pending.clear();
    Vec6 cov_diag;
    cov_diag.head<3>() = fused.cov.topLeftCorner<3, 3>().diagonal();
    cov_diag.tail<3>() = fused.cov.bottomRightCorner<3, 3>().diagonal();
    traj.samples.push_back({fused.t, fused.pose_wg, cov_diag});
  };
  for (const auto& o : obs) {
    if (!pending.empty() && o.t - pending.front().t > rig.noise.fusion_window) {
      flush();
    }
    pending.push_back(o);
  }
  flush();
  return traj;
}

Trajectory baseline_imu_only(const std::vector<MeasurementEvent>& events,
                             const RigConfig& rig, const NoiseParams& noise) {
  // First fused epoch initializes; everything after is dead reckoning.
  std::optional<FilterState> state;
  std::optional<ImuSample> last_imu;
  std::vector<PoseObservation> pending;
  Trajectory traj;

  auto emit = [&](const FilterState& s) {
    traj.samples.push_back({s.t, s.pose(), std::nullopt});
  };
  auto try_init = [&] {
    if (state || pending.empty()) return;
    state = initialize(fuse_simultaneous(pending), noise);
    pending.clear();
    emit(*state);
  };

  for (const auto& e : events) {
    if (e.is_detection()) {
      if (state) continue;  // post-init detections are deliberately unused
      const MarkerDetection& d = e.detection();
      if (rig.find_camera(d.camera_id) == nullptr ||
          rig.find_marker(d.marker_id) == nullptr) {
        continue;
      }
      const PoseObservation obs = gripper_pose_from_detection(d, rig);
      if (!pending.empty() && obs.t - pending.front().t > noise.fusion_window) {
        try_init();
        if (state) continue;
      }
      pending.push_back(obs);
    } else if (e.is_imu()) {
      try_init();
      const ImuSample& s = e.imu();
      if (state && s.t > state->t) {
        *state = predict_span(*state, last_imu ? *last_imu : s, s.t, noise,
                              rig.gravity);
        emit(*state);
      }
      last_imu = s;
    }
  }
  try_init();

  if (!state) {
    throw ValidationError("baseline_imu_only: no observation to initialize from");
  }
  return traj;
}

}  // namespace demofuse
