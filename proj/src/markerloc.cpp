#include "demofuse/markerloc.hpp"

#include <algorithm>

#include <Eigen/Cholesky>

#include "demofuse/errors.hpp"

namespace demofuse {

PoseObservation gripper_pose_from_detection(const MarkerDetection& det,
                                            const RigConfig& rig) {
  const CameraConfig* cam = rig.find_camera(det.camera_id);
  if (cam == nullptr) {
    throw ValidationError("unknown camera id: " + det.camera_id);
  }
  const GripperMarker* marker = rig.find_marker(det.marker_id);
  if (marker == nullptr) {
    throw ValidationError("unknown gripper marker id: " + det.marker_id);
  }

  PoseObservation obs;
  obs.t = det.t;
  obs.pose_wg = compose(compose(cam->pose_wc, det.pose_cm), inverse(marker->pose_gm));

  const double scale = 1.0 + det.quality;
  const double var_t = rig.noise.meas_sigma_t * rig.noise.meas_sigma_t * scale;
  const double var_r = rig.noise.meas_sigma_r * rig.noise.meas_sigma_r * scale;
  obs.cov.setZero();
  obs.cov.topLeftCorner<3, 3>() = var_t * Mat3::Identity();
  obs.cov.bottomRightCorner<3, 3>() = var_r * Mat3::Identity();

  obs.source.push_back(det.camera_id + ":" + det.marker_id);
  return obs;
}

PoseObservation fuse_simultaneous(const std::vector<PoseObservation>& obs) {
  if (obs.empty()) {
    throw ValidationError("fuse_simultaneous: empty observation list");
  }
  if (obs.size() == 1) return obs.front();

  Mat3 info_t = Mat3::Zero();
  Vec3 weighted_t = Vec3::Zero();
  Mat3 info_r = Mat3::Zero();
  Eigen::Vector4d quat_acc = Eigen::Vector4d::Zero();
  double t_weight_sum = 0.0;
  double t_acc = 0.0;

  const Quat ref = obs.front().pose_wg.q;
  PoseObservation fused;
  for (const auto& o : obs) {
    const Mat3 cov_t = o.cov.topLeftCorner<3, 3>();
    const Mat3 cov_r = o.cov.bottomRightCorner<3, 3>();
    const Mat3 w_t = cov_t.inverse();
    info_t += w_t;
    weighted_t += w_t * o.pose_wg.t;
    info_r += cov_r.inverse();

    // Sign-align before accumulating; weight by inverse rotational trace.
    Quat q = o.pose_wg.q;
    if (q.dot(ref) < 0.0) q.coeffs() = -q.coeffs();
    const double w_r = 1.0 / cov_r.trace();
    quat_acc += w_r * Eigen::Vector4d(q.w(), q.x(), q.y(), q.z());

    const double w_time = w_t.trace();
    t_acc += w_time * o.t;
    t_weight_sum += w_time;

    fused.source.insert(fused.source.end(), o.source.begin(), o.source.end());
  }

  fused.t = t_acc / t_weight_sum;
  fused.pose_wg.t = info_t.ldlt().solve(weighted_t);
  fused.pose_wg.q =
      Quat(quat_acc[0], quat_acc[1], quat_acc[2], quat_acc[3]).normalized();
  fused.cov.setZero();
  fused.cov.topLeftCorner<3, 3>() = info_t.inverse();
  fused.cov.bottomRightCorner<3, 3>() = info_r.inverse();
  // Symmetrize against inversion round-off.
  fused.cov = 0.5 * (fused.cov + fused.cov.transpose()).eval();

  std::sort(fused.source.begin(), fused.source.end());
  return fused;
}

double storage_marker_distance(const MarkerDetection& det, const RigConfig& rig) {
  if (det.marker_id != rig.storage_marker_id) {
    throw ValidationError("storage_marker_distance: detection of '" +
                          det.marker_id + "' is not the storage marker '" +
                          rig.storage_marker_id + "'");
  }
  return det.pose_cm.t.norm();
}

}  // namespace demofuse
