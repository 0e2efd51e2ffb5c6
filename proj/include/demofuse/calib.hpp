#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "demofuse/markerloc.hpp"
#include "demofuse/streams.hpp"

namespace demofuse {

/// Downhill-simplex parameters. initial_step is broadcast when it has one
/// entry, otherwise one entry per coordinate.
struct SimplexParams {
  std::vector<double> initial_step = {0.02};
  double reflection = 1.0;
  double expansion = 2.0;
  double contraction = 0.5;
  double shrink = 0.5;
  double tolerance = 1e-12;  // spread of simplex function values
  int max_iterations = 2000;

  void validate() const;
};

struct NelderMeadResult {
  Eigen::VectorXd x;
  double f = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Deterministic Nelder-Mead minimization. Terminates on the value-spread
/// tolerance or max_iterations; the returned vertex never has a cost above
/// the initial best vertex.
NelderMeadResult nelder_mead(
    const std::function<double(const Eigen::VectorXd&)>& cost,
    const Eigen::VectorXd& x0, const SimplexParams& params);

/// World pose of a camera from repeated sightings of its anchor tag:
/// pose_wc = tag_pose_wt ∘ inverse(mean pose_ct). Translation is averaged
/// arithmetically, rotation by the sign-aligned quaternion chordal mean.
Pose camera_pose_from_tag(const std::vector<MarkerDetection>& detections,
                          const Pose& tag_pose_wt);

struct ExtrinsicEstimate {
  std::string camera_id;
  Pose pose_wc;
  double residual = 0.0;
};

struct RefineOptions {
  double pairing_window = 10e-3;  // s, cross-camera epoch pairing
  double lambda = 0.1;            // m^2/rad^2 orientation weight
  SimplexParams simplex;
  int restarts = 2;               // re-seeded simplex rounds after the first
  std::size_t min_paired_epochs = 10;
};

/// Refine non-anchor camera extrinsics by minimizing cross-camera gripper
/// pose disagreement: cost = sum_k ||p1_k - p2_k||^2 + lambda *
/// geodesic_angle(q1_k, q2_k)^2 over time-paired epochs. Only the non-anchor
/// cameras move (6 parameters each: translation delta + world-frame
/// axis-angle delta on the initial pose).
std::vector<ExtrinsicEstimate> refine_extrinsics(
    const std::vector<MeasurementEvent>& calib_events, const RigConfig& rig,
    const std::string& fixed_camera_id, const RefineOptions& options = {});

}  // namespace demofuse
