#include "demofuse/calib.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "demofuse/errors.hpp"

namespace demofuse {

void SimplexParams::validate() const {
  if (initial_step.empty()) {
    throw ValidationError("simplex initial_step must not be empty");
  }
  for (double s : initial_step) {
    if (!(s > 0.0)) throw ValidationError("simplex initial_step must be positive");
  }
  if (!(reflection > 0.0 && expansion > 0.0 && contraction > 0.0 && shrink > 0.0)) {
    throw ValidationError("simplex coefficients must be positive");
  }
  if (!(tolerance > 0.0)) throw ValidationError("simplex tolerance must be positive");
  if (max_iterations < 0) throw ValidationError("simplex max_iterations must be >= 0");
}

NelderMeadResult nelder_mead(
    const std::function<double(const Eigen::VectorXd&)>& cost,
    const Eigen::VectorXd& x0, const SimplexParams& params) {
  params.validate();
  const int n = static_cast<int>(x0.size());
  if (n == 0) throw ValidationError("nelder_mead: empty parameter vector");

  auto step_for = [&](int i) {
    return params.initial_step.size() == 1
               ? params.initial_step[0]
               : params.initial_step.at(static_cast<std::size_t>(i));
  };

  std::vector<Eigen::VectorXd> vertex(static_cast<std::size_t>(n) + 1, x0);
  for (int i = 0; i < n; ++i) vertex[static_cast<std::size_t>(i) + 1](i) += step_for(i);

  std::vector<double> value(vertex.size());
  for (std::size_t i = 0; i < vertex.size(); ++i) {
    value[i] = cost(vertex[i]);
    if (!std::isfinite(value[i])) {
      throw ValidationError("nelder_mead: non-finite cost at an initial simplex vertex");
    }
  }

  // Index sort with stable ties keeps the result deterministic.
  std::vector<std::size_t> order(vertex.size());
  auto rank = [&] {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return value[a] < value[b]; });
  };

  NelderMeadResult result;
  int iter = 0;
  for (;; ++iter) {
    rank();
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second_worst = order[order.size() - 2];

    if (value[worst] - value[best] <= params.tolerance || iter >= params.max_iterations) {
      result.x = vertex[best];
      result.f = value[best];
      result.iterations = iter;
      result.converged = value[worst] - value[best] <= params.tolerance;
      return result;
    }

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (std::size_t i = 0; i < order.size(); ++i) {
      if (order[i] != worst) centroid += vertex[order[i]];
    }
    centroid /= static_cast<double>(n);

    auto try_point = [&](double coef) {
      return (centroid + coef * (centroid - vertex[worst])).eval();
    };

    const Eigen::VectorXd reflected = try_point(params.reflection);
    const double f_reflected = cost(reflected);

    if (f_reflected < value[best]) {
      const Eigen::VectorXd expanded = try_point(params.reflection * params.expansion);
      const double f_expanded = cost(expanded);
      if (f_expanded < f_reflected) {
        vertex[worst] = expanded;
        value[worst] = f_expanded;
      } else {
        vertex[worst] = reflected;
        value[worst] = f_reflected;
      }
      continue;
    }
    if (f_reflected < value[second_worst]) {
      vertex[worst] = reflected;
      value[worst] = f_reflected;
      continue;
    }

    // Contraction: outside when the reflection helped over the worst vertex,
    // inside otherwise.
    Eigen::VectorXd contracted;
    if (f_reflected < value[worst]) {
      contracted = centroid + params.contraction * (reflected - centroid);
    } else {
      contracted = centroid + params.contraction * (vertex[worst] - centroid);
    }
    const double f_contracted = cost(contracted);
    if (f_contracted < std::min(f_reflected, value[worst])) {
      vertex[worst] = contracted;
      value[worst] = f_contracted;
      continue;
    }

    // Shrink everything toward the best vertex.
    for (std::size_t i = 1; i < order.size(); ++i) {
      const std::size_t v = order[i];
      vertex[v] = vertex[best] + params.shrink * (vertex[v] - vertex[best]);
      value[v] = cost(vertex[v]);
    }
  }
}

Pose camera_pose_from_tag(const std::vector<MarkerDetection>& detections,
                          const Pose& tag_pose_wt) {
  if (detections.empty()) {
    throw ValidationError("camera_pose_from_tag: no tag detections");
  }
  Vec3 t_sum = Vec3::Zero();
  Eigen::Vector4d q_sum = Eigen::Vector4d::Zero();
  const Quat ref = detections.front().pose_cm.q;
  for (const auto& d : detections) {
    t_sum += d.pose_cm.t;
    Quat q = d.pose_cm.q;
    if (q.dot(ref) < 0.0) q.coeffs() = -q.coeffs();
    q_sum += Eigen::Vector4d(q.w(), q.x(), q.y(), q.z());
  }
  Pose mean_ct;
  mean_ct.t = t_sum / static_cast<double>(detections.size());
  mean_ct.q = Quat(q_sum[0], q_sum[1], q_sum[2], q_sum[3]).normalized();
  return compose(tag_pose_wt, inverse(mean_ct));
}

namespace {

/// Gripper pose in the observing camera's own frame, fused per epoch. The
/// world pose for any candidate extrinsic x is then pose_wc(x) ∘ pose_cg.
struct CameraEpoch {
  double t = 0.0;
  Pose pose_cg;
};

std::vector<CameraEpoch> camera_epochs(const std::vector<MeasurementEvent>& events,
                                       const RigConfig& rig,
                                       const std::string& camera_id) {
  // Collect camera-frame gripper poses per detection, then average groups
  // within the fusion window (quality-weighted like fuse_simultaneous; the
  // left world transform commutes with this mean, so the camera frame is a
  // sound place to fuse).
  struct Raw {
    double t;
    Pose pose_cg;
    double weight;
  };
  std::vector<Raw> raw;
  for (const auto& e : events) {
    if (!e.is_detection()) continue;
    const MarkerDetection& d = e.detection();
    if (d.camera_id != camera_id) continue;
    const GripperMarker* marker = rig.find_marker(d.marker_id);
    if (marker == nullptr) continue;  // tag or storage sightings
    raw.push_back({d.t, compose(d.pose_cm, inverse(marker->pose_gm)),
                   1.0 / (1.0 + d.quality)});
  }

  std::vector<CameraEpoch> epochs;
  std::size_t i = 0;
  while (i < raw.size()) {
    std::size_t j = i;
    while (j + 1 < raw.size() &&
           raw[j + 1].t - raw[i].t <= rig.noise.fusion_window) {
      ++j;
    }
    Vec3 t_sum = Vec3::Zero();
    Eigen::Vector4d q_sum = Eigen::Vector4d::Zero();
    double w_sum = 0.0;
    double time_sum = 0.0;
    const Quat ref = raw[i].pose_cg.q;
    for (std::size_t k = i; k <= j; ++k) {
      Quat q = raw[k].pose_cg.q;
      if (q.dot(ref) < 0.0) q.coeffs() = -q.coeffs();
      q_sum += raw[k].weight * Eigen::Vector4d(q.w(), q.x(), q.y(), q.z());
      t_sum += raw[k].weight * raw[k].pose_cg.t;
      time_sum += raw[k].weight * raw[k].t;
      w_sum += raw[k].weight;
    }
    CameraEpoch ep;
    ep.t = time_sum / w_sum;
    ep.pose_cg.t = t_sum / w_sum;
    ep.pose_cg.q = Quat(q_sum[0], q_sum[1], q_sum[2], q_sum[3]).normalized();
    epochs.push_back(ep);
    i = j + 1;
  }
  return epochs;
}

struct PairedEpoch {
  Pose anchor_cg;
  Pose other_cg;
};

/// In-order greedy nearest-neighbor pairing within the window; each epoch is
/// used at most once.
std::vector<PairedEpoch> pair_epochs(const std::vector<CameraEpoch>& anchor,
                                     const std::vector<CameraEpoch>& other,
                                     double window) {
  std::vector<PairedEpoch> pairs;
  std::size_t j = 0;
  for (const auto& a : anchor) {
    while (j + 1 < other.size() &&
           std::abs(other[j + 1].t - a.t) <= std::abs(other[j].t - a.t)) {
      ++j;
    }
    if (j < other.size() && std::abs(other[j].t - a.t) <= window) {
      pairs.push_back({a.pose_cg, other[j].pose_cg});
      ++j;
      if (j >= other.size()) break;
    }
  }
  return pairs;
}

Pose apply_delta(const Pose& base, const Eigen::VectorXd& x) {
  Pose out;
  out.t = base.t + x.head<3>();
  out.q = (exp_so3(x.tail<3>()) * base.q).normalized();
  return out;
}

}  // namespace

std::vector<ExtrinsicEstimate> refine_extrinsics(
    const std::vector<MeasurementEvent>& calib_events, const RigConfig& rig,
    const std::string& fixed_camera_id, const RefineOptions& options) {
  const CameraConfig* anchor = rig.find_camera(fixed_camera_id);
  if (anchor == nullptr) {
    throw ValidationError("unknown anchor camera id: " + fixed_camera_id);
  }

  const std::vector<CameraEpoch> anchor_epochs =
      camera_epochs(calib_events, rig, fixed_camera_id);

  std::vector<ExtrinsicEstimate> out;
  for (const auto& cam : rig.cameras) {
    if (cam.camera_id == fixed_camera_id) {
      out.push_back({cam.camera_id, cam.pose_wc, 0.0});
      continue;
    }
    const std::vector<CameraEpoch> other_epochs =
        camera_epochs(calib_events, rig, cam.camera_id);
    const std::vector<PairedEpoch> pairs =
        pair_epochs(anchor_epochs, other_epochs, options.pairing_window);
    if (pairs.size() < options.min_paired_epochs) {
      throw ValidationError(
          "insufficient calibration data: " + std::to_string(pairs.size()) +
          " paired epochs between " + fixed_camera_id + " and " + cam.camera_id);
    }

    const Pose anchor_pose = anchor->pose_wc;
    const Pose base = cam.pose_wc;
    auto cost = [&](const Eigen::VectorXd& x) {
      const Pose pose_wc = apply_delta(base, x);
      double c = 0.0;
      for (const auto& pr : pairs) {
        const Pose g1 = compose(anchor_pose, pr.anchor_cg);
        const Pose g2 = compose(pose_wc, pr.other_cg);
        const double ang = geodesic_angle(g1.q, g2.q);
        c += (g1.t - g2.t).squaredNorm() + options.lambda * ang * ang;
      }
      return c;
    };

    Eigen::VectorXd x = Eigen::VectorXd::Zero(6);
    NelderMeadResult best = nelder_mead(cost, x, options.simplex);
    for (int r = 0; r < options.restarts; ++r) {
      // Restart with a fresh simplex around the incumbent; NM in 6-D can
      // stall with a collapsed simplex well before the true minimum.
      NelderMeadResult next = nelder_mead(cost, best.x, options.simplex);
      const bool improved = next.f < best.f;
      if (improved) best = std::move(next);
      if (!improved) break;
    }
    out.push_back({cam.camera_id, apply_delta(base, best.x), best.f});
  }
  return out;
}

}  // namespace demofuse
