#pragma once

#include <map>
#include <string>
#include <vector>

#include "demofuse/ekf.hpp"
#include "demofuse/segment.hpp"

namespace demofuse {

struct ErrorPoint {
  double t = 0.0;
  double pos_err = 0.0;  // m
  double ori_err = 0.0;  // rad
};

struct ErrorSeries {
  std::vector<ErrorPoint> points;
  std::size_t skipped = 0;  // trajectory samples outside the gt time range
};

/// Per-sample error of traj against the interpolated ground truth (linear in
/// translation, slerp in rotation). The comparison direction is fixed:
/// estimates are evaluated at their own timestamps against gt.
ErrorSeries error_series(const Trajectory& traj, const Trajectory& gt);

struct TaskReport {
  int task_index = 0;  // -1 for the overall row
  double pos_rmse = 0.0, pos_max = 0.0;
  double ori_rmse = 0.0, ori_max = 0.0;
  std::size_t count = 0;
};

/// Assign every error point to its containing task and reduce to RMSE/max.
/// A point outside all tasks indicates inconsistent inputs and is an error.
std::vector<TaskReport> per_task_report(const ErrorSeries& series,
                                        const std::vector<TaskSample>& tasks);

TaskReport overall_report(const ErrorSeries& series);

/// Side-by-side comparison across methods sharing one task partition; the
/// best (lowest) method per metric is flagged, ties flag all.
struct ComparisonTable {
  std::vector<std::string> methods;
  std::vector<std::string> row_labels;  // "task N" rows then "overall"
  // [row][method] metric values
  std::vector<std::vector<TaskReport>> cells;

  std::string render_text() const;
  std::string render_csv() const;
};

ComparisonTable compare_methods(
    const std::map<std::string, std::vector<TaskReport>>& reports);

/// errors.csv with the fixed column order t,pos_err_m,ori_err_rad,task_index,method.
std::string error_series_csv(const ErrorSeries& series,
                             const std::vector<TaskSample>& tasks,
                             const std::string& method);

std::string report_json(const std::vector<TaskReport>& tasks,
                        const TaskReport& overall, std::size_t skipped);

}  // namespace demofuse
