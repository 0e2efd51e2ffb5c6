#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include <Eigen/Eigenvalues>

#include "demofuse/errors.hpp"
#include "demofuse/markerloc.hpp"
#include "demofuse/sim.hpp"
#include "support.hpp"

using namespace demofuse;

namespace {

RigConfig identity_rig() {
  RigConfig rig;
  rig.cameras.push_back({"cam1", Pose::identity(), "tag1", Pose::identity(), 1.2});
  rig.gripper_markers.push_back({"m0", Pose::identity()});
  rig.storage_marker_id = "storage";
  rig.thresholds.apply_defaults();
  return rig;
}

MarkerDetection make_det(const std::string& cam, const std::string& marker,
                         const Pose& pose_cm, double quality = 0.0) {
  MarkerDetection d;
  d.t = 1.0;
  d.camera_id = cam;
  d.marker_id = marker;
  d.pose_cm = pose_cm;
  d.quality = quality;
  return d;
}

}  // namespace

TEST_CASE("gripper_pose_from_detection chains the frames") {
  RigConfig rig = identity_rig();

  SUBCASE("all-identity chain") {
    MarkerDetection d = make_det("cam1", "m0", Pose::identity());
    d.pose_cm.t = Vec3(0, 0, 1e-9);  // keep z > 0 semantics out of the way
    const PoseObservation obs = gripper_pose_from_detection(d, rig);
    CHECK(obs.pose_wg.t.norm() < 1e-8);
    CHECK(geodesic_angle(obs.pose_wg.q, Quat::Identity()) < 1e-12);
  }

  SUBCASE("hand-chained three-pose composition") {
    rig.cameras[0].pose_wc = Pose{Quat::Identity(), Vec3(0, 0, 2)};
    const MarkerDetection d =
        make_det("cam1", "m0", Pose{Quat::Identity(), Vec3(0, 0, 1)});
    const PoseObservation obs = gripper_pose_from_detection(d, rig);
    CHECK((obs.pose_wg.t - Vec3(0, 0, 3)).norm() < 1e-12);
  }

  SUBCASE("unknown ids are rejected") {
    CHECK_THROWS_WITH_AS(
        gripper_pose_from_detection(
            make_det("nope", "m0", Pose{Quat::Identity(), Vec3(0, 0, 1)}), rig),
        doctest::Contains("nope"), ValidationError);
    CHECK_THROWS_AS(gripper_pose_from_detection(
                        make_det("cam1", "nope", Pose{Quat::Identity(), Vec3(0, 0, 1)}),
                        rig),
                    ValidationError);
  }

  SUBCASE("covariance scales with quality") {
    const MarkerDetection d0 =
        make_det("cam1", "m0", Pose{Quat::Identity(), Vec3(0, 0, 1)}, 0.0);
    const MarkerDetection d1 =
        make_det("cam1", "m0", Pose{Quat::Identity(), Vec3(0, 0, 1)}, 1.0);
    const auto o0 = gripper_pose_from_detection(d0, rig);
    const auto o1 = gripper_pose_from_detection(d1, rig);
    CHECK(o1.cov(0, 0) == doctest::Approx(2.0 * o0.cov(0, 0)));
    CHECK(o1.cov(5, 5) == doctest::Approx(2.0 * o0.cov(5, 5)));
  }

  SUBCASE("simulator round trip at zero noise") {
    const RigConfig desk = test::bundled_rig();
    ScenarioConfig sc = test::bundled_scenario();
    sc.noise_scale = 0.0;
    sc.apples.resize(1);
    const SyntheticDemo demo = generate_demo(sc, desk);
    REQUIRE(!demo.detections.empty());
    std::size_t checked = 0;
    for (const auto& d : demo.detections) {
      if (desk.find_camera(d.camera_id) == nullptr ||
          desk.find_marker(d.marker_id) == nullptr) {
        continue;
      }
      const auto obs = gripper_pose_from_detection(d, desk);
      const auto truth = sample_trajectory(demo.truth.trajectory, d.t);
      REQUIRE(truth.has_value());
      CHECK((obs.pose_wg.t - truth->t).norm() < 1e-9);
      CHECK(geodesic_angle(obs.pose_wg.q, truth->q) < 1e-9);
      ++checked;
    }
    CHECK(checked > 100);
  }

  SUBCASE("two markers on the same rigid gripper agree") {
    const RigConfig desk = test::bundled_rig();
    std::mt19937_64 rng(4);
    for (int i = 0; i < 50; ++i) {
      const Pose gripper = test::random_pose(rng);
      const CameraConfig& cam = desk.cameras[0];
      PoseObservation obs[2];
      for (int m = 0; m < 2; ++m) {
        const GripperMarker& marker = desk.gripper_markers[static_cast<std::size_t>(m)];
        MarkerDetection d;
        d.t = 0.0;
        d.camera_id = cam.camera_id;
        d.marker_id = marker.marker_id;
        d.pose_cm = compose(inverse(cam.pose_wc), compose(gripper, marker.pose_gm));
        obs[m] = gripper_pose_from_detection(d, desk);
      }
      CHECK((obs[0].pose_wg.t - obs[1].pose_wg.t).norm() < 1e-9);
      CHECK(geodesic_angle(obs[0].pose_wg.q, obs[1].pose_wg.q) < 1e-9);
    }
  }
}

TEST_CASE("fuse_simultaneous") {
  RigConfig rig = identity_rig();
  auto obs_at = [&](const Vec3& t, double sigma_t) {
    PoseObservation o;
    o.t = 1.0;
    o.pose_wg = Pose{Quat::Identity(), t};
    o.cov.setIdentity();
    o.cov.topLeftCorner<3, 3>() *= sigma_t * sigma_t;
    o.cov.bottomRightCorner<3, 3>() *= 1e-4;
    o.source = {"cam1:m0"};
    return o;
  };

  SUBCASE("empty list is an error") {
    CHECK_THROWS_AS(fuse_simultaneous({}), ValidationError);
  }

  SUBCASE("single observation returned unchanged") {
    const auto o = obs_at(Vec3(1, 2, 3), 0.01);
    const auto fused = fuse_simultaneous({o});
    CHECK((fused.pose_wg.t - o.pose_wg.t).norm() == 0.0);
    CHECK((fused.cov - o.cov).norm() == 0.0);
  }

  SUBCASE("two identical observations halve the translation covariance") {
    const auto o = obs_at(Vec3(0.5, 0, 0), 0.02);
    const auto fused = fuse_simultaneous({o, o});
    CHECK((fused.pose_wg.t - o.pose_wg.t).norm() < 1e-15);
    CHECK(fused.cov(0, 0) == doctest::Approx(0.5 * o.cov(0, 0)));
    CHECK(fused.t == doctest::Approx(o.t));
  }

  SUBCASE("symmetric offsets meet at the midpoint") {
    const auto a = obs_at(Vec3(0.01, 0, 0), 0.01);
    const auto b = obs_at(Vec3(-0.01, 0, 0), 0.01);
    const auto fused = fuse_simultaneous({a, b});
    CHECK(fused.pose_wg.t.norm() < 1e-12);
  }

  SUBCASE("opposite-sign quaternions fuse like same-sign ones") {
    auto a = obs_at(Vec3::Zero(), 0.01);
    auto b = a;
    b.pose_wg.q.coeffs() = -b.pose_wg.q.coeffs();
    const auto fused = fuse_simultaneous({a, b});
    CHECK(geodesic_angle(fused.pose_wg.q, a.pose_wg.q) < 1e-12);
  }

  SUBCASE("information never decreases") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> sd(0.002, 0.05);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<PoseObservation> obs;
      const int n = 2 + static_cast<int>(rng() % 4);
      double min_trace = 1e99;
      for (int i = 0; i < n; ++i) {
        auto o = obs_at(test::random_vec3(rng, 0.05), sd(rng));
        o.pose_wg.q = test::random_unit_quat(rng);
        obs.push_back(o);
        min_trace = std::min(min_trace, o.cov.topLeftCorner<3, 3>().trace());
      }
      const auto fused = fuse_simultaneous(obs);
      CHECK(fused.cov.topLeftCorner<3, 3>().trace() <= min_trace + 1e-12);
      // PSD within tolerance
      const Eigen::SelfAdjointEigenSolver<Mat6> eig(fused.cov);
      CHECK(eig.eigenvalues().minCoeff() > -1e-9);
      CHECK((fused.cov - fused.cov.transpose()).cwiseAbs().maxCoeff() < 1e-9);
    }
  }
}

TEST_CASE("storage_marker_distance") {
  const RigConfig rig = identity_rig();
  auto det = [&](const Vec3& t) {
    MarkerDetection d;
    d.camera_id = kOnboardCameraId;
    d.marker_id = "storage";
    d.pose_cm.t = t;
    return d;
  };
  CHECK(storage_marker_distance(det(Vec3(0, 0, 0.5)), rig) == doctest::Approx(0.5));
  CHECK(storage_marker_distance(det(Vec3(3, 4, 0)), rig) == doctest::Approx(5.0));
  CHECK(storage_marker_distance(det(Vec3::Zero()), rig) == 0.0);

  auto wrong = det(Vec3(0, 0, 1));
  wrong.marker_id = "m0";
  CHECK_THROWS_AS(storage_marker_distance(wrong, rig), ValidationError);
}
