#pragma once

#include <optional>
#include <string>
#include <vector>

#include "demofuse/streams.hpp"

namespace demofuse {

enum class EndReason { left_storage, gap_timeout, stream_end };

const char* to_string(EndReason r);
EndReason end_reason_from_string(const std::string& s);

/// One extracted picking operation. Samples tile the demo: sample i+1 starts
/// exactly where sample i ends.
struct TaskSample {
  int index = 0;
  double t_start = 0.0;
  double t_end = 0.0;
  EndReason end_reason = EndReason::stream_end;
};

struct Boundary {
  double t = 0.0;
  EndReason reason = EndReason::left_storage;
};

/// Two-phase boundary detector:
///   SEEKING_RELEASE   width rising through release_threshold (armed only
///                     after the width was latched below threshold-hysteresis
///                     since the previous boundary) arms departure watch;
///   AWAITING_DEPARTURE  on-board storage-marker distance beyond
///                     leave_distance + leave_hysteresis emits the boundary,
///                     or the gap timeout fires when the marker goes unseen
///                     while last known to be near.
struct SegmenterState {
  enum class Phase { seeking_release, awaiting_departure };
  Phase phase = Phase::seeking_release;
  bool width_latched_low = false;
  double arm_t = 0.0;
  std::optional<double> last_storage_t;
  std::optional<double> last_storage_distance;
};

/// Pure transition function; IMU and unrelated detections are ignored.
std::optional<Boundary> segment_step(SegmenterState& state,
                                     const MeasurementEvent& event,
                                     const SegmenterConfig& cfg,
                                     const std::string& storage_marker_id);

/// Fold segment_step over an ordered event stream and tile the demo into
/// task samples. The final open sample is closed at the last event time
/// with reason stream_end.
std::vector<TaskSample> segment_demo(const std::vector<MeasurementEvent>& events,
                                     const SegmenterConfig& cfg,
                                     const std::string& storage_marker_id);

std::string serialize_segments(const std::vector<TaskSample>& tasks);
std::vector<TaskSample> parse_segments(const std::filesystem::path& path);

}  // namespace demofuse
