#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "demofuse/eval.hpp"
#include "demofuse/segment.hpp"
#include "demofuse/sim.hpp"

namespace demofuse {

/// End-to-end run: simulate -> calibrate -> fuse (one trajectory per method)
/// -> segment -> evaluate -> method comparison. Everything is written under
/// out_dir; file names are fixed (see docs/formats.md).
struct PipelineOptions {
  std::filesystem::path scenario_path;
  std::filesystem::path rig_path;
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> noise_path;  // filter noise override
  std::optional<std::uint64_t> seed;                // scenario seed override
  std::vector<std::string> methods = {"ekf", "marker-only", "imu-only"};
  std::string anchor_camera;  // defaults to the first rig camera
};

struct PipelineResult {
  std::vector<TaskSample> segments;
  std::map<std::string, std::vector<TaskReport>> reports;  // incl. overall row
  ComparisonTable comparison;
  std::filesystem::path out_dir;
};

PipelineResult run_pipeline(const PipelineOptions& options);

/// Fuse stage shared by the CLI and the pipeline.
Trajectory fuse_with_method(const std::string& method,
                            const std::vector<MeasurementEvent>& events,
                            const RigConfig& rig, const NoiseParams& noise,
                            FilterLog* log);

}  // namespace demofuse
