#include "demofuse/pipeline.hpp"

#include <algorithm>

#include "demofuse/baselines.hpp"
#include "demofuse/calib.hpp"
#include "demofuse/errors.hpp"
#include "demofuse/json_io.hpp"

namespace demofuse {

Trajectory fuse_with_method(const std::string& method,
                            const std::vector<MeasurementEvent>& events,
                            const RigConfig& rig, const NoiseParams& noise,
                            FilterLog* log) {
  if (method == "ekf") {
    RunResult result = run_filter(events, rig, noise);
    if (log) *log = std::move(result.log);
    return std::move(result.trajectory);
  }
  if (method == "marker-only") {
    if (log) *log = FilterLog{};
    return baseline_marker_only(events, rig);
  }
  if (method == "imu-only") {
    if (log) *log = FilterLog{};
    return baseline_imu_only(events, rig, noise);
  }
  throw ValidationError("unknown fuse method: " + method);
}

namespace {

std::string method_file_stem(const std::string& method) {
  std::string stem = method;
  std::replace(stem.begin(), stem.end(), '-', '_');
  return stem;
}

}  // namespace

PipelineResult run_pipeline(const PipelineOptions& options) {
  ScenarioConfig sc = load_scenario(options.scenario_path);
  if (options.seed) sc.seed = *options.seed;
  RigConfig rig = load_rig_config(options.rig_path);
  const NoiseParams noise =
      options.noise_path ? load_noise_params(*options.noise_path) : rig.noise;

  std::error_code ec;
  std::filesystem::create_directories(options.out_dir, ec);
  if (ec) {
    throw IoError("cannot create directory " + options.out_dir.string() + ": " +
                  ec.message());
  }

  // 1. Simulate and persist the demo streams.
  const SyntheticDemo demo = generate_demo(sc, rig);
  write_demo(demo, options.out_dir);

  // 2. Calibrate: tag-chain initial extrinsics, then cross-camera refinement
  //    against the anchor. The refined rig feeds every later stage.
  std::vector<std::vector<MeasurementEvent>> det_stream(1);
  for (const auto& d : demo.detections) det_stream[0].push_back({d, 0});
  const std::vector<MeasurementEvent> det_events = merge_streams(det_stream);

  RigConfig refined = rig;
  for (auto& cam : refined.cameras) {
    std::vector<MarkerDetection> tag_dets;
    for (const auto& d : demo.detections) {
      if (d.camera_id == cam.camera_id && d.marker_id == cam.tag_id) {
        tag_dets.push_back(d);
      }
    }
    if (!tag_dets.empty()) {
      cam.pose_wc = camera_pose_from_tag(tag_dets, cam.tag_pose_wt);
    }
  }
  const std::string anchor =
      options.anchor_camera.empty() ? rig.cameras.front().camera_id
                                    : options.anchor_camera;
  for (const auto& est : refine_extrinsics(det_events, refined, anchor)) {
    for (auto& cam : refined.cameras) {
      if (cam.camera_id == est.camera_id) cam.pose_wc = est.pose_wc;
    }
  }
  save_rig_config(refined, options.out_dir / "rig_refined.json");

  // 3. Fuse with every requested method.
  std::vector<std::vector<MeasurementEvent>> streams(3);
  for (const auto& s : demo.imu) streams[0].push_back({s, 0});
  streams[1] = det_stream[0];
  for (const auto& s : demo.width_stream) streams[2].push_back({s, 0});
  const std::vector<MeasurementEvent> events = merge_streams(streams);

  std::map<std::string, Trajectory> trajectories;
  for (const auto& method : options.methods) {
    FilterLog log;
    Trajectory traj = fuse_with_method(method, events, refined, noise, &log);
    const std::string stem = method_file_stem(method);
    write_file_atomic(options.out_dir / ("traj_" + stem + ".jsonl"),
                      serialize_trajectory(traj));
    if (method == "ekf") {
      // Canonical outputs for the primary estimator.
      write_file_atomic(options.out_dir / "traj.jsonl", serialize_trajectory(traj));
      write_file_atomic(options.out_dir / "log.jsonl", serialize_filter_log(log));
    }
    trajectories.emplace(method, std::move(traj));
  }

  // 4. Segment on width + detections.
  PipelineResult result;
  result.out_dir = options.out_dir;
  result.segments = segment_demo(events, refined.thresholds, refined.storage_marker_id);
  write_file_atomic(options.out_dir / "segments.json",
                    serialize_segments(result.segments));

  // Per-task split of the primary trajectory.
  if (trajectories.count("ekf")) {
    const Trajectory& ekf_traj = trajectories.at("ekf");
    const std::filesystem::path task_dir = options.out_dir / "tasks";
    std::filesystem::create_directories(task_dir, ec);
    for (const auto& task : result.segments) {
      Trajectory slice;
      for (const auto& s : ekf_traj.samples) {
        const bool last = task.index == static_cast<int>(result.segments.size()) - 1;
        if (s.t >= task.t_start && (s.t < task.t_end || (last && s.t <= task.t_end))) {
          slice.samples.push_back(s);
        }
      }
      write_file_atomic(task_dir / ("task_" + std::to_string(task.index) + ".jsonl"),
                        serialize_trajectory(slice));
    }
  }

  // 5. Evaluate each method against ground truth.
  for (const auto& [method, traj] : trajectories) {
    const ErrorSeries series = error_series(traj, demo.truth.trajectory);
    std::vector<TaskReport> rows = per_task_report(series, result.segments);
    const TaskReport overall = overall_report(series);
    const std::string stem = method_file_stem(method);
    write_file_atomic(options.out_dir / ("errors_" + stem + ".csv"),
                      error_series_csv(series, result.segments, method));
    write_file_atomic(options.out_dir / ("report_" + stem + ".json"),
                      report_json(rows, overall, series.skipped));
    if (method == "ekf") {
      write_file_atomic(options.out_dir / "errors.csv",
                        error_series_csv(series, result.segments, method));
      write_file_atomic(options.out_dir / "report.json",
                        report_json(rows, overall, series.skipped));
    }
    rows.push_back(overall);
    result.reports.emplace(method, std::move(rows));
  }

  // 6. Method comparison.
  result.comparison = compare_methods(result.reports);
  write_file_atomic(options.out_dir / "comparison.txt",
                    result.comparison.render_text());
  write_file_atomic(options.out_dir / "comparison.csv",
                    result.comparison.render_csv());
  return result;
}

}  // namespace demofuse
