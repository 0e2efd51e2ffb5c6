#include "demofuse/ekf.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>

#include "demofuse/errors.hpp"
#include "demofuse/json_io.hpp"

namespace demofuse {

std::optional<Pose> sample_trajectory(const Trajectory& traj, double t) {
  const auto& s = traj.samples;
  if (s.empty() || t < s.front().t || t > s.back().t) return std::nullopt;
  auto it = std::lower_bound(
      s.begin(), s.end(), t,
      [](const TrajectorySample& a, double value) { return a.t < value; });
  if (it->t == t) return it->pose;
  const TrajectorySample& hi = *it;
  const TrajectorySample& lo = *(it - 1);
  const double u = (t - lo.t) / (hi.t - lo.t);
  Pose out;
  out.t = (1.0 - u) * lo.pose.t + u * hi.pose.t;
  out.q = lo.pose.q.slerp(u, hi.pose.q);
  return out;
}

std::string serialize_trajectory(const Trajectory& traj) {
  std::string out;
  for (const auto& s : traj.samples) {
    Json j;
    j["t"] = s.t;
    j["q"] = quat_to_json(s.pose.q);
    j["p"] = vec3_to_json(s.pose.t);
    if (s.cov_diag) {
      Json c = Json::array();
      for (int i = 0; i < 6; ++i) c.push_back((*s.cov_diag)(i));
      j["cov_diag"] = c;
    }
    out += j.dump();
    out += '\n';
  }
  return out;
}

Trajectory parse_trajectory(const std::filesystem::path& path) {
  Trajectory traj;
  for (const auto& s : parse_ground_truth(path)) {
    traj.samples.push_back({s.t, s.pose_wg, std::nullopt});
  }
  return traj;
}

std::string serialize_filter_log(const FilterLog& log) {
  std::string out;
  for (const auto& e : log.entries) {
    Json j;
    j["t"] = e.t;
    j["kind"] = e.kind;
    j["accepted"] = e.accepted;
    j["m2"] = e.mahalanobis2;
    j["n_sources"] = e.n_sources;
    out += j.dump();
    out += '\n';
  }
  return out;
}

FilterState initialize(const PoseObservation& first_obs, const NoiseParams& noise) {
  FilterState s;
  s.t = first_obs.t;
  s.p = first_obs.pose_wg.t;
  s.q = first_obs.pose_wg.q.normalized();
  s.P.setZero();
  auto block = [&](int i, double sigma) {
    s.P.block<3, 3>(i, i) = sigma * sigma * Mat3::Identity();
  };
  block(0, noise.init_sigma_p);
  block(3, noise.init_sigma_v);
  block(6, noise.init_sigma_theta);
  block(9, noise.init_sigma_bg);
  block(12, noise.init_sigma_ba);
  return s;
}

// Error-state transition for the world-frame (left) orientation perturbation
// q_true = Exp(dtheta) ∘ q:
//
//   dp'     = dp + dv dt
//   dv'     = dv - [R(a_m - b_a)]x dtheta dt - R db_a dt
//   dtheta' = dtheta - R db_g dt
//   biases    random walks
//
// Process noise enters dv and dtheta through R, which drops out of Q for the
// isotropic densities used here:
//   Q = diag(0, sigma_a^2 dt, sigma_g^2 dt, sigma_bg^2 dt, sigma_ba^2 dt).
FilterState predict(const FilterState& state, const ImuSample& imu, double dt,
                    const NoiseParams& noise, const Vec3& gravity) {
  if (!(dt > 0.0)) throw ValidationError("predict: non-positive dt");
  if (dt > 0.1 + 1e-12) {
    throw ValidationError("predict: dt exceeds 0.1 s; use predict_span");
  }

  FilterState next = state;
  const Mat3 R = state.q.toRotationMatrix();
  const Vec3 omega = imu.gyro - state.b_g;
  const Vec3 accel_body = imu.accel - state.b_a;
  const Vec3 accel_world = R * accel_body + gravity;

  next.t = state.t + dt;
  next.p = state.p + state.v * dt + 0.5 * accel_world * dt * dt;
  next.v = state.v + accel_world * dt;
  next.q = (state.q * exp_so3(omega * dt)).normalized();

  Mat15 F = Mat15::Identity();
  F.block<3, 3>(0, 3) = dt * Mat3::Identity();
  F.block<3, 3>(3, 6) = -skew(R * accel_body) * dt;
  F.block<3, 3>(3, 12) = -R * dt;
  F.block<3, 3>(6, 9) = -R * dt;

  Mat15 Q = Mat15::Zero();
  Q.block<3, 3>(3, 3) =
      noise.accel_noise_density * noise.accel_noise_density * dt * Mat3::Identity();
  Q.block<3, 3>(6, 6) =
      noise.gyro_noise_density * noise.gyro_noise_density * dt * Mat3::Identity();
  Q.block<3, 3>(9, 9) =
      noise.gyro_bias_walk * noise.gyro_bias_walk * dt * Mat3::Identity();
  Q.block<3, 3>(12, 12) =
      noise.accel_bias_walk * noise.accel_bias_walk * dt * Mat3::Identity();

  next.P = F * state.P * F.transpose() + Q;
  next.P = 0.5 * (next.P + next.P.transpose()).eval();
  return next;
}

FilterState predict_span(const FilterState& state, const ImuSample& imu,
                         double t_target, const NoiseParams& noise,
                         const Vec3& gravity) {
  const double span = t_target - state.t;
  if (!(span > 0.0)) throw ValidationError("predict_span: non-positive span");
  const int steps = std::max(1, static_cast<int>(std::ceil(span / 0.1 - 1e-12)));
  FilterState s = state;
  for (int i = 0; i < steps; ++i) {
    // Recompute each dt from the target to avoid timestamp drift.
    const double t_next = state.t + span * (i + 1) / steps;
    s = predict(s, imu, t_next - s.t, noise, gravity);
    s.t = t_next;
  }
  return s;
}

UpdateOutcome update(const FilterState& state, const PoseObservation& obs,
                     const NoiseParams& noise) {
  const Mat6 R_obs = 0.5 * (obs.cov + obs.cov.transpose());
  {
    Eigen::LLT<Mat6> llt(R_obs + 1e-18 * Mat6::Identity());
    if (llt.info() != Eigen::Success) {
      throw ValidationError("update: observation covariance is not PSD");
    }
  }

  Vec6 r;
  r.head<3>() = obs.pose_wg.t - state.p;
  r.tail<3>() = log_so3(obs.pose_wg.q * state.q.conjugate());

  // H selects (dp, dtheta); S = H P H^T + R.
  Mat6 S;
  S.topLeftCorner<3, 3>() = state.P.block<3, 3>(0, 0);
  S.topRightCorner<3, 3>() = state.P.block<3, 3>(0, 6);
  S.bottomLeftCorner<3, 3>() = state.P.block<3, 3>(6, 0);
  S.bottomRightCorner<3, 3>() = state.P.block<3, 3>(6, 6);
  S += R_obs;

  const Eigen::LDLT<Mat6> S_ldlt(S);
  const double m2 = r.dot(S_ldlt.solve(r));

  UpdateOutcome out;
  out.mahalanobis2 = m2;
  out.state = state;
  if (m2 > noise.gate_chi2) {
    out.accepted = false;
    return out;
  }
  out.accepted = true;

  Eigen::Matrix<double, 15, 6> PHt;
  PHt.leftCols<3>() = state.P.block<15, 3>(0, 0);
  PHt.rightCols<3>() = state.P.block<15, 3>(0, 6);
  const Eigen::Matrix<double, 15, 6> K = S_ldlt.solve(PHt.transpose()).transpose();
  const Eigen::Matrix<double, 15, 1> dx = K * r;

  FilterState& s = out.state;
  s.p += dx.segment<3>(0);
  s.v += dx.segment<3>(3);
  s.q = (exp_so3(dx.segment<3>(6)) * state.q).normalized();
  s.b_g += dx.segment<3>(9);
  s.b_a += dx.segment<3>(12);
  s.t = std::max(state.t, obs.t);

  Mat15 IKH = Mat15::Identity();
  IKH.block<15, 3>(0, 0) -= K.leftCols<3>();
  IKH.block<15, 3>(0, 6) -= K.rightCols<3>();
  s.P = IKH * state.P * IKH.transpose() + K * R_obs * K.transpose();
  s.P = 0.5 * (s.P + s.P.transpose()).eval();
  return out;
}

namespace {

constexpr double kMaxStaleness = 0.05;  // s, applied-without-repropagation limit

struct FilterRunner {
  const RigConfig& rig;
  const NoiseParams& noise;
  const StateObserver& observer;

  std::optional<FilterState> state;
  std::optional<ImuSample> last_imu;
  std::vector<PoseObservation> pending;
  RunResult result;

  void emit(const FilterState& s) {
    Vec6 cov_diag;
    cov_diag.head<3>() = s.P.diagonal().segment<3>(0);
    cov_diag.tail<3>() = s.P.diagonal().segment<3>(6);
    auto& samples = result.trajectory.samples;
    if (!samples.empty() && samples.back().t == s.t) {
      samples.back() = {s.t, s.pose(), cov_diag};  // posterior replaces predict
    } else {
      samples.push_back({s.t, s.pose(), cov_diag});
    }
    if (observer) observer(s);
  }

  /// Advance the state to t using the held IMU sample; with no IMU seen yet,
  /// coast on a constant-velocity pseudo-sample (zero rotation, specific
  /// force exactly cancelling gravity). The coast has no real dynamics
  /// information, so its process noise covers unmodeled motion instead of
  /// sensor noise.
  void advance_to(double t) {
    if (!state || t <= state->t) return;
    if (last_imu) {
      *state = predict_span(*state, *last_imu, t, noise, rig.gravity);
      return;
    }
    ImuSample drive;
    drive.gyro = state->b_g;
    drive.accel = state->q.conjugate() * (-rig.gravity) + state->b_a;
    NoiseParams coast = noise;
    coast.accel_noise_density = 5.0;  // m/s^2/sqrt(Hz), hand-held motion scale
    coast.gyro_noise_density = 2.0;   // rad/s/sqrt(Hz)
    *state = predict_span(*state, drive, t, coast, rig.gravity);
  }

  void flush() {
    if (pending.empty()) return;
    const PoseObservation obs = fuse_simultaneous(pending);
    pending.clear();

    if (!state) {
      state = initialize(obs, noise);
      result.log.entries.push_back({obs.t, "init", true, 0.0, obs.source.size()});
      emit(*state);
      return;
    }

    std::string kind = "update";
    if (obs.t < state->t) {
      if (state->t - obs.t > kMaxStaleness) {
        result.log.entries.push_back(
            {obs.t, "stale_dropped", false, 0.0, obs.source.size()});
        ++result.log.stale_dropped;
        return;
      }
      kind = "stale_applied";  // timestamp clamps to the state time
      ++result.log.stale_applied;
    } else {
      advance_to(obs.t);
    }

    UpdateOutcome outcome = update(*state, obs, noise);
    *state = outcome.state;
    result.log.entries.push_back(
        {obs.t, kind, outcome.accepted, outcome.mahalanobis2, obs.source.size()});
    if (outcome.accepted) {
      ++result.log.updates_accepted;
    } else {
      ++result.log.updates_rejected;
    }
    emit(*state);
  }

  void on_imu(const ImuSample& s) {
    flush();
    if (!last_imu) last_imu = s;  // first interval after init has no held sample
    if (state && s.t > state->t) {
      advance_to(s.t);
      result.log.entries.push_back({s.t, "predict", true, 0.0, 0});
      emit(*state);
    }
    last_imu = s;
  }

  void on_detection(const MarkerDetection& d) {
    if (rig.find_camera(d.camera_id) == nullptr ||
        rig.find_marker(d.marker_id) == nullptr) {
      return;  // on-board/storage/tag sightings are not localization inputs
    }
    const PoseObservation obs = gripper_pose_from_detection(d, rig);
    if (!pending.empty() && obs.t - pending.front().t > noise.fusion_window) {
      flush();
    }
    pending.push_back(obs);
  }
};

}  // namespace

RunResult run_filter(const std::vector<MeasurementEvent>& events,
                     const RigConfig& rig, const NoiseParams& noise,
                     const StateObserver& observer) {
  if (events.empty()) throw ValidationError("run_filter: empty event list");
  noise.validate();

  FilterRunner runner{rig, noise, observer, {}, {}, {}, {}};
  for (const auto& e : events) {
    if (e.is_imu()) {
      runner.on_imu(e.imu());
    } else if (e.is_detection()) {
      runner.on_detection(e.detection());
    }
    // width samples carry no localization information
  }
  runner.flush();

  if (!runner.state) {
    throw ValidationError(
        "run_filter: no usable gripper-marker observation to initialize from");
  }
  return std::move(runner.result);
}

}  // namespace demofuse
