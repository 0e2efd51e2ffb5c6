#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "demofuse/streams.hpp"

namespace demofuse {

using Mat6 = Eigen::Matrix<double, 6, 6>;

/// World-frame gripper pose observation derived from one or more marker
/// detections. Covariance is ordered translation xyz then rotation xyz.
struct PoseObservation {
  double t = 0.0;
  Pose pose_wg;
  Mat6 cov = Mat6::Identity();
  std::vector<std::string> source;  // "camera:marker" entries, sorted
};

/// Chain pose_wc ∘ pose_cm ∘ inverse(pose_gm) and attach the base
/// measurement covariance from rig.noise scaled by (1 + quality).
PoseObservation gripper_pose_from_detection(const MarkerDetection& det,
                                            const RigConfig& rig);

/// Inverse-covariance-weighted fusion of observations taken within the
/// simultaneity window. Translation uses the exact information-form mean;
/// rotation uses a sign-aligned quaternion mean weighted by inverse
/// rotational covariance trace, with the information-form covariance
/// approximation. Timestamp is the translation-information-weighted mean.
PoseObservation fuse_simultaneous(const std::vector<PoseObservation>& obs);

/// Euclidean distance of the storage marker from the on-board camera.
double storage_marker_distance(const MarkerDetection& det, const RigConfig& rig);

}  // namespace demofuse
