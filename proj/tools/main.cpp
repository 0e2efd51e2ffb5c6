#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "demofuse/baselines.hpp"
#include "demofuse/calib.hpp"
#include "demofuse/errors.hpp"
#include "demofuse/json_io.hpp"
#include "demofuse/pipeline.hpp"

namespace fs = std::filesystem;
using namespace demofuse;

namespace {

bool verbose_logging() {
  const char* level = std::getenv("DEMOFUSE_LOG");
  return level == nullptr || std::string(level) != "quiet";
}

void log_info(const std::string& msg) {
  if (verbose_logging()) std::cerr << "[demofuse] " << msg << "\n";
}

fs::path require_file(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("input file not found: " + path.string());
  return path;
}

/// Every run records its resolved configuration and input fingerprints next
/// to its outputs. No timestamps: re-runs must be byte-identical.
void write_manifest(const fs::path& manifest_path, const std::string& subcommand,
                    const Json& config,
                    const std::vector<fs::path>& inputs,
                    const std::vector<std::string>& outputs) {
  Json m;
  m["subcommand"] = subcommand;
  m["config"] = config;
  m["inputs"] = Json::object();
  for (const auto& p : inputs) m["inputs"][p.string()] = file_digest(p);
  m["outputs"] = outputs;
  write_file_atomic(manifest_path, m.dump(2) + "\n");
}

/// Directory-output commands get <dir>/run_manifest.json, file-output
/// commands a sibling <output>.manifest.json.
fs::path manifest_for_dir(const fs::path& dir) { return dir / "run_manifest.json"; }
fs::path manifest_for_file(const fs::path& out) {
  fs::path p = out;
  p += ".manifest.json";
  return p;
}

std::vector<MeasurementEvent> load_events(
    const std::optional<fs::path>& imu_path,
    const std::optional<fs::path>& det_path,
    const std::optional<fs::path>& width_path) {
  std::vector<std::vector<MeasurementEvent>> streams;
  if (imu_path) streams.push_back(parse_stream(require_file(*imu_path), StreamKind::imu));
  if (det_path) {
    streams.push_back(parse_stream(require_file(*det_path), StreamKind::detections));
  }
  if (width_path) {
    streams.push_back(parse_stream(require_file(*width_path), StreamKind::width));
  }
  return merge_streams(streams);
}

int run(int argc, char** argv) {
  CLI::App app{"Hand-held gripper demo toolkit: task-sample extraction and "
               "EKF trajectory generation on marker + IMU streams"};
  app.require_subcommand(1);

  // --- simulate ---
  auto* sim_cmd = app.add_subcommand("simulate", "Generate a synthetic demo");
  fs::path sim_scenario, sim_rig, sim_out;
  std::optional<std::uint64_t> sim_seed;
  sim_cmd->add_option("--scenario", sim_scenario, "Scenario JSON")->required();
  sim_cmd->add_option("--rig", sim_rig, "Rig config JSON")->required();
  sim_cmd->add_option("--seed", sim_seed, "Scenario seed override");
  sim_cmd->add_option("--out", sim_out, "Output directory")->required();

  // --- calibrate ---
  auto* cal_cmd = app.add_subcommand("calibrate", "Refine camera extrinsics");
  fs::path cal_rig, cal_dets, cal_out;
  std::string cal_anchor;
  cal_cmd->add_option("--rig", cal_rig, "Rig config JSON")->required();
  cal_cmd->add_option("--detections", cal_dets, "Detections JSONL")->required();
  cal_cmd->add_option("--anchor", cal_anchor, "Anchor camera id")->required();
  cal_cmd->add_option("--out", cal_out, "Refined rig output path")->required();

  // --- fuse ---
  auto* fuse_cmd = app.add_subcommand("fuse", "Estimate the gripper trajectory");
  fs::path fuse_rig, fuse_imu, fuse_dets, fuse_traj;
  std::optional<fs::path> fuse_noise, fuse_log;
  std::string fuse_method = "ekf";
  fuse_cmd->add_option("--rig", fuse_rig, "Rig config JSON")->required();
  fuse_cmd->add_option("--imu", fuse_imu, "IMU JSONL")->required();
  fuse_cmd->add_option("--detections", fuse_dets, "Detections JSONL")->required();
  fuse_cmd->add_option("--noise", fuse_noise, "Noise params JSON (default: rig noise)");
  fuse_cmd->add_option("--method", fuse_method, "ekf | marker-only | imu-only")
      ->check(CLI::IsMember({"ekf", "marker-only", "imu-only"}));
  fuse_cmd->add_option("--out", fuse_traj, "Trajectory output JSONL")->required();
  fuse_cmd->add_option("--log", fuse_log, "Filter log output JSONL");

  // --- segment ---
  auto* seg_cmd = app.add_subcommand("segment", "Extract task samples");
  fs::path seg_rig, seg_width, seg_dets, seg_out;
  seg_cmd->add_option("--rig", seg_rig, "Rig config JSON")->required();
  seg_cmd->add_option("--width", seg_width, "Width JSONL")->required();
  seg_cmd->add_option("--detections", seg_dets, "Detections JSONL")->required();
  seg_cmd->add_option("--out", seg_out, "Segments output JSON")->required();

  // --- evaluate ---
  auto* eval_cmd = app.add_subcommand("evaluate", "Trajectory error vs ground truth");
  fs::path eval_traj, eval_gt, eval_segments, eval_out;
  std::string eval_method = "method";
  eval_cmd->add_option("--traj", eval_traj, "Estimated trajectory JSONL")->required();
  eval_cmd->add_option("--gt", eval_gt, "Ground-truth JSONL")->required();
  eval_cmd->add_option("--segments", eval_segments, "Segments JSON")->required();
  eval_cmd->add_option("--method", eval_method, "Method label for the CSV");
  eval_cmd->add_option("--out-dir", eval_out, "Output directory")->required();

  // --- pipeline ---
  auto* pipe_cmd = app.add_subcommand(
      "pipeline", "simulate -> calibrate -> fuse (all methods) -> segment -> evaluate");
  fs::path pipe_scenario, pipe_rig, pipe_out;
  std::optional<fs::path> pipe_noise;
  std::optional<std::uint64_t> pipe_seed;
  std::string pipe_anchor;
  pipe_cmd->add_option("--scenario", pipe_scenario, "Scenario JSON")->required();
  pipe_cmd->add_option("--rig", pipe_rig, "Rig config JSON")->required();
  pipe_cmd->add_option("--noise", pipe_noise, "Filter noise params JSON");
  pipe_cmd->add_option("--seed", pipe_seed, "Scenario seed override");
  pipe_cmd->add_option("--anchor", pipe_anchor, "Anchor camera id");
  pipe_cmd->add_option("--out", pipe_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 1;
  }

  if (sim_cmd->parsed()) {
    ScenarioConfig sc = load_scenario(require_file(sim_scenario));
    if (sim_seed) sc.seed = *sim_seed;
    const RigConfig rig = load_rig_config(require_file(sim_rig));
    const SyntheticDemo demo = generate_demo(sc, rig);
    write_demo(demo, sim_out);
    Json cfg;
    cfg["scenario"] = load_json(sim_scenario);
    cfg["scenario"]["seed"] = sc.seed;
    cfg["rig"] = Json::parse(serialize_rig_config(rig));
    write_manifest(manifest_for_dir(sim_out), "simulate", cfg,
                   {sim_scenario, sim_rig},
                   {"imu.jsonl", "detections.jsonl", "width.jsonl", "gt.jsonl",
                    "truth.json"});
    log_info("simulate: wrote demo to " + sim_out.string());
    return 0;
  }

  if (cal_cmd->parsed()) {
    RigConfig rig = load_rig_config(require_file(cal_rig));
    const auto events = load_events(std::nullopt, cal_dets, std::nullopt);
    // Tag-derived initial extrinsics, then cross-camera refinement.
    const std::vector<MarkerDetection> dets = parse_detections(cal_dets);
    for (auto& cam : rig.cameras) {
      std::vector<MarkerDetection> tag_dets;
      for (const auto& d : dets) {
        if (d.camera_id == cam.camera_id && d.marker_id == cam.tag_id) {
          tag_dets.push_back(d);
        }
      }
      if (!tag_dets.empty()) {
        cam.pose_wc = camera_pose_from_tag(tag_dets, cam.tag_pose_wt);
      }
    }
    for (const auto& est : refine_extrinsics(events, rig, cal_anchor)) {
      for (auto& cam : rig.cameras) {
        if (cam.camera_id == est.camera_id) cam.pose_wc = est.pose_wc;
      }
      log_info("calibrate: " + est.camera_id +
               " residual=" + std::to_string(est.residual));
    }
    save_rig_config(rig, cal_out);
    Json cfg;
    cfg["anchor"] = cal_anchor;
    cfg["rig"] = Json::parse(serialize_rig_config(rig));
    write_manifest(manifest_for_file(cal_out), "calibrate", cfg,
                   {cal_rig, cal_dets}, {cal_out.string()});
    return 0;
  }

  if (fuse_cmd->parsed()) {
    const RigConfig rig = load_rig_config(require_file(fuse_rig));
    const NoiseParams noise =
        fuse_noise ? load_noise_params(require_file(*fuse_noise)) : rig.noise;
    const auto events = load_events(fuse_imu, fuse_dets, std::nullopt);
    FilterLog log;
    const Trajectory traj = fuse_with_method(fuse_method, events, rig, noise, &log);
    write_file_atomic(fuse_traj, serialize_trajectory(traj));
    if (fuse_log) write_file_atomic(*fuse_log, serialize_filter_log(log));
    Json cfg;
    cfg["method"] = fuse_method;
    cfg["noise"] = Json::parse(serialize_noise_params(noise));
    std::vector<fs::path> inputs = {fuse_rig, fuse_imu, fuse_dets};
    if (fuse_noise) inputs.push_back(*fuse_noise);
    write_manifest(manifest_for_file(fuse_traj), "fuse", cfg, inputs,
                   {fuse_traj.string()});
    log_info("fuse[" + fuse_method + "]: " +
             std::to_string(traj.samples.size()) + " trajectory samples");
    return 0;
  }

  if (seg_cmd->parsed()) {
    const RigConfig rig = load_rig_config(require_file(seg_rig));
    const auto events = load_events(std::nullopt, seg_dets, seg_width);
    const auto tasks = segment_demo(events, rig.thresholds, rig.storage_marker_id);
    write_file_atomic(seg_out, serialize_segments(tasks));
    Json cfg;
    cfg["thresholds"] = Json::parse(serialize_rig_config(rig))["thresholds"];
    write_manifest(manifest_for_file(seg_out), "segment", cfg,
                   {seg_rig, seg_width, seg_dets}, {seg_out.string()});
    log_info("segment: " + std::to_string(tasks.size()) + " task samples");
    return 0;
  }

  if (eval_cmd->parsed()) {
    Trajectory traj = parse_trajectory(require_file(eval_traj));
    const Trajectory gt = parse_trajectory(require_file(eval_gt));
    const auto tasks = parse_segments(require_file(eval_segments));
    if (tasks.empty()) throw ValidationError("segments file has no tasks");
    std::error_code ec;
    fs::create_directories(eval_out, ec);
    if (ec) throw IoError("cannot create directory " + eval_out.string());
    // The segment stage may have seen a shorter stream than the fuse stage
    // (it takes no IMU input); evaluate within the segmented span.
    std::erase_if(traj.samples, [&](const TrajectorySample& s) {
      return s.t < tasks.front().t_start || s.t > tasks.back().t_end;
    });
    const ErrorSeries series = error_series(traj, gt);
    const auto rows = per_task_report(series, tasks);
    write_file_atomic(eval_out / "errors.csv",
                      error_series_csv(series, tasks, eval_method));
    write_file_atomic(eval_out / "report.json",
                      report_json(rows, overall_report(series), series.skipped));
    Json cfg;
    cfg["method"] = eval_method;
    write_manifest(manifest_for_dir(eval_out), "evaluate", cfg,
                   {eval_traj, eval_gt, eval_segments},
                   {"errors.csv", "report.json"});
    return 0;
  }

  if (pipe_cmd->parsed()) {
    PipelineOptions opts;
    opts.scenario_path = require_file(pipe_scenario);
    opts.rig_path = require_file(pipe_rig);
    opts.noise_path = pipe_noise;
    if (pipe_noise) require_file(*pipe_noise);
    opts.seed = pipe_seed;
    opts.anchor_camera = pipe_anchor;
    opts.out_dir = pipe_out;
    const PipelineResult result = run_pipeline(opts);
    Json cfg;
    cfg["scenario"] = load_json(pipe_scenario);
    if (pipe_seed) cfg["scenario"]["seed"] = *pipe_seed;
    cfg["rig"] = load_json(pipe_rig);
    cfg["methods"] = opts.methods;
    std::vector<fs::path> inputs = {pipe_scenario, pipe_rig};
    if (pipe_noise) inputs.push_back(*pipe_noise);
    write_manifest(manifest_for_dir(pipe_out), "pipeline", cfg, inputs,
                   {"traj.jsonl", "segments.json", "errors.csv",
                    "comparison.txt", "comparison.csv"});
    log_info("pipeline: done, " + std::to_string(result.segments.size()) +
             " tasks, outputs in " + pipe_out.string());
    std::cout << result.comparison.render_text();
    return 0;
  }

  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
