#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "demofuse/geom.hpp"
#include "demofuse/sim.hpp"
#include "demofuse/streams.hpp"

namespace demofuse::test {

inline Quat random_unit_quat(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Quat q(g(rng), g(rng), g(rng), g(rng));
  return q.normalized();
}

inline Vec3 random_vec3(std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return Vec3(u(rng), u(rng), u(rng));
}

inline Pose random_pose(std::mt19937_64& rng, double scale = 1.0) {
  return {random_unit_quat(rng), random_vec3(rng, scale)};
}

inline bool pose_close(const Pose& a, const Pose& b, double tol_t, double tol_r) {
  return (a.t - b.t).norm() <= tol_t && geodesic_angle(a.q, b.q) <= tol_r;
}

/// Fresh scratch directory under the build tree's temp space.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "demofuse_tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::filesystem::path data_dir() { return DEMOFUSE_DATA_DIR; }

/// The bundled desk rig + three-apple scenario, loaded from data/.
inline RigConfig bundled_rig() {
  return load_rig_config(data_dir() / "rig_desk.json");
}
inline ScenarioConfig bundled_scenario() {
  return load_scenario(data_dir() / "scenario_three_apple.json");
}

}  // namespace demofuse::test
