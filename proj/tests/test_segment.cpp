#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "demofuse/errors.hpp"
#include "demofuse/json_io.hpp"
#include "demofuse/segment.hpp"
#include "demofuse/sim.hpp"
#include "support.hpp"

using namespace demofuse;

namespace {

constexpr const char* kStorage = "storage_box";

MeasurementEvent width_event(double t, double w) {
  return {WidthSample{t, w}, 0};
}

MeasurementEvent storage_event(double t, double distance) {
  MarkerDetection d;
  d.t = t;
  d.camera_id = kOnboardCameraId;
  d.marker_id = kStorage;
  d.pose_cm.t = Vec3(0, 0, distance);
  return {d, 0};
}

MeasurementEvent imu_event(double t) {
  ImuSample s;
  s.t = t;
  s.accel = Vec3(0, 0, 9.81);
  return {s, 0};
}

SegmenterConfig config() {
  SegmenterConfig c;
  c.max_fruit_width = 0.08;
  c.max_open_width = 0.10;
  c.leave_distance = 0.35;
  c.apply_defaults();  // release 0.09, grasp 0.08
  return c;
}

// Hand-built pick cycle: grasp at t0, release at t1, departure detection at t2.
std::vector<MeasurementEvent> pick_cycle(double t0, double t1,
                                         std::optional<double> t2) {
  std::vector<MeasurementEvent> ev;
  ev.push_back(width_event(t0, 0.06));          // closed on the fruit
  ev.push_back(storage_event(t1 - 0.1, 0.10));  // near the box before opening
  ev.push_back(width_event(t1, 0.095));         // opens -> arms departure watch
  if (t2) {
    ev.push_back(storage_event(*t2 - 0.2, 0.20));  // still close
    ev.push_back(storage_event(*t2, 0.40));        // beyond leave + hysteresis
  }
  return ev;
}

}  // namespace

TEST_CASE("step: no release edge means no boundary") {
  const SegmenterConfig cfg = config();
  SegmenterState st;
  for (double t = 0.0; t < 10.0; t += 0.1) {
    auto b = segment_step(st, width_event(t, 0.06), cfg, kStorage);
    CHECK(!b.has_value());
  }
  CHECK(st.phase == SegmenterState::Phase::seeking_release);
}

TEST_CASE("step: hand-traced departure boundary at t=11.2") {
  const SegmenterConfig cfg = config();
  SegmenterState st;
  std::vector<MeasurementEvent> ev = {
      width_event(9.0, 0.06),     // latch low
      storage_event(9.9, 0.08),   // at the box
      width_event(10.0, 0.095),   // release edge arms the watch
      storage_event(10.6, 0.20),  // moving away, still below leave_distance
      storage_event(11.2, 0.45),  // beyond 0.35 + 0.02
  };
  std::optional<Boundary> got;
  for (const auto& e : ev) {
    if (auto b = segment_step(st, e, cfg, kStorage)) {
      CHECK(!got.has_value());
      got = b;
    }
  }
  REQUIRE(got.has_value());
  CHECK(got->t == doctest::Approx(11.2));
  CHECK(got->reason == EndReason::left_storage);
  CHECK(st.phase == SegmenterState::Phase::seeking_release);
}

TEST_CASE("step: hand-traced gap timeout at t=11.3") {
  const SegmenterConfig cfg = config();  // timeout 1.0
  SegmenterState st;
  std::vector<MeasurementEvent> ev = {
      width_event(9.0, 0.06),
      width_event(10.0, 0.095),   // arms at t=10
      storage_event(10.3, 0.10),  // last sighting, near the box
      imu_event(10.9),            // nothing yet
      imu_event(11.31),           // past 10.3 + 1.0
  };
  std::optional<Boundary> got;
  for (const auto& e : ev) {
    if (auto b = segment_step(st, e, cfg, kStorage)) got = b;
  }
  REQUIRE(got.has_value());
  CHECK(got->t == doctest::Approx(11.3));
  CHECK(got->reason == EndReason::gap_timeout);
}

TEST_CASE("step: storage sightings beyond leave_distance do not arm the timeout") {
  const SegmenterConfig cfg = config();
  SegmenterState st;
  segment_step(st, width_event(1.0, 0.06), cfg, kStorage);
  segment_step(st, width_event(2.0, 0.095), cfg, kStorage);  // armed
  // Marker seen, but already far: the gap rule requires the last sighting
  // to be near the box.
  segment_step(st, storage_event(2.1, 0.355), cfg, kStorage);  // in hysteresis band
  auto b = segment_step(st, imu_event(5.0), cfg, kStorage);
  CHECK(!b.has_value());
  CHECK(st.phase == SegmenterState::Phase::awaiting_departure);
}

TEST_CASE("segment_demo tiles the demo") {
  const SegmenterConfig cfg = config();

  SUBCASE("empty stream is an error") {
    CHECK_THROWS_AS(segment_demo({}, cfg, kStorage), ValidationError);
  }

  SUBCASE("fully open width forever gives one stream_end sample") {
    std::vector<MeasurementEvent> ev;
    for (double t = 0.0; t <= 5.0; t += 0.1) ev.push_back(width_event(t, 0.10));
    const auto tasks = segment_demo(ev, cfg, kStorage);
    REQUIRE(tasks.size() == 1);
    CHECK(tasks[0].t_start == 0.0);
    CHECK(tasks[0].t_end == doctest::Approx(5.0));
    CHECK(tasks[0].end_reason == EndReason::stream_end);
  }

  SUBCASE("two picks and a trailing tail") {
    std::vector<MeasurementEvent> ev;
    ev.push_back(width_event(0.0, 0.10));
    auto c1 = pick_cycle(1.0, 2.0, 3.0);
    auto c2 = pick_cycle(4.0, 5.0, 6.0);
    ev.insert(ev.end(), c1.begin(), c1.end());
    ev.insert(ev.end(), c2.begin(), c2.end());
    ev.push_back(imu_event(7.0));
    const auto tasks = segment_demo(ev, cfg, kStorage);
    REQUIRE(tasks.size() == 3);
    CHECK(tasks[0].t_end == doctest::Approx(3.0));
    CHECK(tasks[1].t_end == doctest::Approx(6.0));
    CHECK(tasks[2].end_reason == EndReason::stream_end);
    for (std::size_t i = 0; i + 1 < tasks.size(); ++i) {
      CHECK(tasks[i].t_end == tasks[i + 1].t_start);
      CHECK(tasks[i].t_start < tasks[i].t_end);
    }
  }
}

TEST_CASE("property: IMU inserts do not move boundaries") {
  const SegmenterConfig cfg = config();
  std::vector<MeasurementEvent> base;
  base.push_back(width_event(0.0, 0.10));
  auto c1 = pick_cycle(1.0, 2.0, 3.0);
  auto c2 = pick_cycle(4.0, 5.5, std::nullopt);  // second pick times out
  base.insert(base.end(), c1.begin(), c1.end());
  base.insert(base.end(), c2.begin(), c2.end());
  base.push_back(width_event(8.0, 0.10));

  const auto reference = segment_demo(base, cfg, kStorage);

  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> td(0.0, 8.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::vector<MeasurementEvent>> streams(2);
    streams[0] = base;
    for (int i = 0; i < 50; ++i) streams[1].push_back(imu_event(td(rng)));
    std::sort(streams[1].begin(), streams[1].end(),
              [](const MeasurementEvent& a, const MeasurementEvent& b) {
                return a.t() < b.t();
              });
    const auto merged = merge_streams(streams);
    const auto tasks = segment_demo(merged, cfg, kStorage);
    REQUIRE(tasks.size() == reference.size());
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      CHECK(tasks[i].t_end == doctest::Approx(reference[i].t_end).epsilon(1e-12));
      CHECK(tasks[i].end_reason == reference[i].end_reason);
    }
  }
}

TEST_CASE("property: common width scaling leaves boundaries unchanged") {
  std::vector<MeasurementEvent> base;
  base.push_back(width_event(0.0, 0.10));
  auto c1 = pick_cycle(1.0, 2.0, 3.0);
  base.insert(base.end(), c1.begin(), c1.end());
  base.push_back(imu_event(4.0));

  const SegmenterConfig cfg = config();
  const auto reference = segment_demo(base, cfg, kStorage);

  for (double scale : {0.5, 2.0, 7.3}) {
    SegmenterConfig scaled = cfg;
    scaled.max_fruit_width *= scale;
    scaled.max_open_width *= scale;
    scaled.release_threshold *= scale;
    scaled.grasp_threshold *= scale;
    scaled.width_hysteresis *= scale;
    std::vector<MeasurementEvent> ev = base;
    for (auto& e : ev) {
      if (e.is_width()) {
        e.payload = WidthSample{e.t(), e.width().width * scale};
      }
    }
    const auto tasks = segment_demo(ev, scaled, kStorage);
    REQUIRE(tasks.size() == reference.size());
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      CHECK(tasks[i].t_end == doctest::Approx(reference[i].t_end).epsilon(1e-12));
    }
  }
}

TEST_CASE("property: boundaries strictly increase and tile on simulated demos") {
  const RigConfig rig = test::bundled_rig();
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    ScenarioConfig sc = test::bundled_scenario();
    sc.seed = seed;
    const SyntheticDemo demo = generate_demo(sc, rig);
    std::vector<std::vector<MeasurementEvent>> streams(3);
    for (const auto& s : demo.imu) streams[0].push_back({s, 0});
    for (const auto& d : demo.detections) streams[1].push_back({d, 0});
    for (const auto& w : demo.width_stream) streams[2].push_back({w, 0});
    const auto events = merge_streams(streams);
    const auto tasks = segment_demo(events, rig.thresholds, rig.storage_marker_id);
    REQUIRE(!tasks.empty());
    CHECK(tasks.front().t_start == events.front().t());
    CHECK(tasks.back().t_end == events.back().t());
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      CHECK(tasks[i].t_start < tasks[i].t_end);
      if (i + 1 < tasks.size()) CHECK(tasks[i].t_end == tasks[i + 1].t_start);
    }
  }
}

TEST_CASE("on-board occlusion after release falls back to the gap timeout") {
  const RigConfig rig = test::bundled_rig();
  ScenarioConfig sc = test::bundled_scenario();
  // Blind the gripper camera from just before the first release until the
  // second grasp, so apple 1's leave-distance crossing is never observed.
  const GroundTruth gt = generate_ground_truth(sc, rig);
  const double release1 = gt.events[0].release;
  sc.occlusions.push_back({kOnboardCameraId, release1 - 0.3, gt.events[1].grasp});

  const SyntheticDemo demo = generate_demo(sc, rig);
  std::vector<std::vector<MeasurementEvent>> streams(3);
  for (const auto& s : demo.imu) streams[0].push_back({s, 0});
  for (const auto& d : demo.detections) streams[1].push_back({d, 0});
  for (const auto& w : demo.width_stream) streams[2].push_back({w, 0});
  const auto tasks = segment_demo(merge_streams(streams), rig.thresholds,
                                  rig.storage_marker_id);
  REQUIRE(tasks.size() == 3);
  CHECK(tasks[0].end_reason == EndReason::gap_timeout);
  // Timeout clock runs from the arming edge (the last sighting precedes it);
  // boundary lands about one timeout after the release crossing.
  CHECK(tasks[0].t_end > release1 + 0.8 * rig.thresholds.detection_gap_timeout);
  CHECK(tasks[0].t_end < release1 + rig.thresholds.detection_gap_timeout + 0.2);
  CHECK(tasks[1].end_reason == EndReason::left_storage);
  CHECK(tasks[2].end_reason == EndReason::stream_end);
}

TEST_CASE("segments file round trip") {
  const auto dir = test::scratch_dir("segment_io");
  std::vector<TaskSample> tasks = {{0, 0.0, 5.5, EndReason::left_storage},
                                   {1, 5.5, 9.25, EndReason::gap_timeout},
                                   {2, 9.25, 12.0, EndReason::stream_end}};
  write_file_atomic(dir / "segments.json", serialize_segments(tasks));
  const auto back = parse_segments(dir / "segments.json");
  REQUIRE(back.size() == 3);
  CHECK(back[1].t_end == 9.25);
  CHECK(back[1].end_reason == EndReason::gap_timeout);
}
