#include "demofuse/segment.hpp"

#include <algorithm>

#include "demofuse/errors.hpp"
#include "demofuse/json_io.hpp"

namespace demofuse {

const char* to_string(EndReason r) {
  switch (r) {
    case EndReason::left_storage: return "left_storage";
    case EndReason::gap_timeout: return "gap_timeout";
    case EndReason::stream_end: return "stream_end";
  }
  return "unknown";
}

EndReason end_reason_from_string(const std::string& s) {
  if (s == "left_storage") return EndReason::left_storage;
  if (s == "gap_timeout") return EndReason::gap_timeout;
  if (s == "stream_end") return EndReason::stream_end;
  throw ValidationError("unknown end_reason: " + s);
}

namespace {

std::optional<Boundary> check_gap_timeout(SegmenterState& state, double now,
                                          const SegmenterConfig& cfg) {
  if (state.phase != SegmenterState::Phase::awaiting_departure) return {};
  if (!state.last_storage_t || !state.last_storage_distance) return {};
  if (*state.last_storage_distance > cfg.leave_distance) return {};
  // Timeout clock runs from the last storage sighting, or from the arming
  // edge when the marker was last seen before arming.
  const double deadline =
      std::max(*state.last_storage_t, state.arm_t) + cfg.detection_gap_timeout;
  if (now <= deadline) return {};
  // Stamped at the deadline regardless of which event made us notice it.
  Boundary b{deadline, EndReason::gap_timeout};
  state.phase = SegmenterState::Phase::seeking_release;
  state.width_latched_low = false;
  return b;
}

}  // namespace

std::optional<Boundary> segment_step(SegmenterState& state,
                                     const MeasurementEvent& event,
                                     const SegmenterConfig& cfg,
                                     const std::string& storage_marker_id) {
  std::optional<Boundary> boundary = check_gap_timeout(state, event.t(), cfg);

  if (event.is_width()) {
    const double w = event.width().width;
    if (state.phase == SegmenterState::Phase::seeking_release) {
      if (w < cfg.release_threshold - cfg.width_hysteresis) {
        state.width_latched_low = true;
      } else if (state.width_latched_low && w > cfg.release_threshold) {
        state.phase = SegmenterState::Phase::awaiting_departure;
        state.arm_t = event.t();
        state.width_latched_low = false;
      }
    }
    return boundary;
  }

  if (event.is_detection()) {
    const MarkerDetection& det = event.detection();
    if (det.camera_id != kOnboardCameraId || det.marker_id != storage_marker_id) {
      return boundary;
    }
    const double dist = det.pose_cm.t.norm();
    if (!boundary &&  // a timeout boundary already reset the phase
        state.phase == SegmenterState::Phase::awaiting_departure &&
        dist > cfg.leave_distance + cfg.leave_hysteresis) {
      boundary = Boundary{event.t(), EndReason::left_storage};
      state.phase = SegmenterState::Phase::seeking_release;
      state.width_latched_low = false;
    }
    state.last_storage_t = event.t();
    state.last_storage_distance = dist;
    return boundary;
  }

  return boundary;  // IMU events only matter for noticing the timeout
}

std::vector<TaskSample> segment_demo(const std::vector<MeasurementEvent>& events,
                                     const SegmenterConfig& cfg,
                                     const std::string& storage_marker_id) {
  if (events.empty()) {
    throw ValidationError("segment_demo: empty event stream");
  }
  cfg.validate();

  SegmenterState state;
  std::vector<Boundary> boundaries;
  for (const auto& e : events) {
    if (auto b = segment_step(state, e, cfg, storage_marker_id)) {
      boundaries.push_back(*b);
    }
  }

  const double t_first = events.front().t();
  const double t_last = events.back().t();

  std::vector<TaskSample> tasks;
  double start = t_first;
  for (const auto& b : boundaries) {
    tasks.push_back({static_cast<int>(tasks.size()), start, b.t, b.reason});
    start = b.t;
  }
  if (start < t_last) {
    tasks.push_back(
        {static_cast<int>(tasks.size()), start, t_last, EndReason::stream_end});
  }
  return tasks;
}

std::string serialize_segments(const std::vector<TaskSample>& tasks) {
  Json arr = Json::array();
  for (const auto& t : tasks) {
    Json j;
    j["index"] = t.index;
    j["t_start"] = t.t_start;
    j["t_end"] = t.t_end;
    j["end_reason"] = to_string(t.end_reason);
    arr.push_back(j);
  }
  return arr.dump(2) + "\n";
}

std::vector<TaskSample> parse_segments(const std::filesystem::path& path) {
  const Json j = load_json(path);
  if (!j.is_array()) {
    throw ValidationError(path.string() + ": segments file must be an array");
  }
  std::vector<TaskSample> out;
  for (const auto& tj : j) {
    TaskSample t;
    t.index = tj.at("index").get<int>();
    t.t_start = tj.at("t_start").get<double>();
    t.t_end = tj.at("t_end").get<double>();
    t.end_reason = end_reason_from_string(tj.at("end_reason").get<std::string>());
    out.push_back(t);
  }
  return out;
}

}  // namespace demofuse
