#include "demofuse/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "demofuse/errors.hpp"
#include "demofuse/json_io.hpp"

namespace demofuse {

ErrorSeries error_series(const Trajectory& traj, const Trajectory& gt) {
  if (gt.samples.empty() || traj.samples.empty()) {
    throw ValidationError("error_series: empty trajectory");
  }
  ErrorSeries out;
  for (const auto& s : traj.samples) {
    const auto ref = sample_trajectory(gt, s.t);
    if (!ref) {
      ++out.skipped;
      continue;
    }
    ErrorPoint p;
    p.t = s.t;
    p.pos_err = (s.pose.t - ref->t).norm();
    p.ori_err = geodesic_angle(s.pose.q, ref->q);
    out.points.push_back(p);
  }
  if (out.points.empty()) {
    throw ValidationError("error_series: no overlap between trajectory and gt");
  }
  return out;
}

namespace {

int task_of(double t, const std::vector<TaskSample>& tasks) {
  for (const auto& task : tasks) {
    const bool last = task.index == static_cast<int>(tasks.size()) - 1;
    if (t >= task.t_start && (t < task.t_end || (last && t <= task.t_end))) {
      return task.index;
    }
  }
  return -1;
}

TaskReport reduce(int index, const std::vector<const ErrorPoint*>& pts) {
  TaskReport r;
  r.task_index = index;
  r.count = pts.size();
  double pos_sq = 0.0, ori_sq = 0.0;
  for (const ErrorPoint* p : pts) {
    pos_sq += p->pos_err * p->pos_err;
    ori_sq += p->ori_err * p->ori_err;
    r.pos_max = std::max(r.pos_max, p->pos_err);
    r.ori_max = std::max(r.ori_max, p->ori_err);
  }
  if (!pts.empty()) {
    r.pos_rmse = std::sqrt(pos_sq / static_cast<double>(pts.size()));
    r.ori_rmse = std::sqrt(ori_sq / static_cast<double>(pts.size()));
  }
  return r;
}

}  // namespace

std::vector<TaskReport> per_task_report(const ErrorSeries& series,
                                        const std::vector<TaskSample>& tasks) {
  if (tasks.empty()) throw ValidationError("per_task_report: no tasks");
  std::vector<std::vector<const ErrorPoint*>> buckets(tasks.size());
  for (const auto& p : series.points) {
    const int idx = task_of(p.t, tasks);
    if (idx < 0) {
      throw ValidationError("error-series point at t=" + std::to_string(p.t) +
                            " lies outside all tasks");
    }
    buckets[static_cast<std::size_t>(idx)].push_back(&p);
  }
  std::vector<TaskReport> out;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    out.push_back(reduce(tasks[i].index, buckets[i]));
  }
  return out;
}

TaskReport overall_report(const ErrorSeries& series) {
  std::vector<const ErrorPoint*> all;
  all.reserve(series.points.size());
  for (const auto& p : series.points) all.push_back(&p);
  return reduce(-1, all);
}

ComparisonTable compare_methods(
    const std::map<std::string, std::vector<TaskReport>>& reports) {
  if (reports.empty()) throw ValidationError("compare_methods: no methods");
  ComparisonTable table;
  std::size_t n_rows = 0;
  for (const auto& [method, rows] : reports) {
    table.methods.push_back(method);
    if (n_rows == 0) {
      n_rows = rows.size();
    } else if (rows.size() != n_rows) {
      throw ValidationError("compare_methods: mismatched task counts across methods");
    }
  }
  for (std::size_t r = 0; r < n_rows; ++r) {
    const int idx = reports.begin()->second[r].task_index;
    table.row_labels.push_back(idx < 0 ? "overall" : "task " + std::to_string(idx));
    std::vector<TaskReport> row;
    for (const auto& m : table.methods) row.push_back(reports.at(m)[r]);
    table.cells.push_back(std::move(row));
  }
  return table;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::vector<bool> best_flags(const std::vector<double>& values) {
  const double lo = *std::min_element(values.begin(), values.end());
  std::vector<bool> flags;
  for (double v : values) flags.push_back(v == lo);
  return flags;
}

}  // namespace

std::string ComparisonTable::render_text() const {
  std::string out;
  const char* metric_names[] = {"pos_rmse_m", "pos_max_m", "ori_rmse_rad",
                                "ori_max_rad"};
  for (std::size_t r = 0; r < cells.size(); ++r) {
    out += "== " + row_labels[r] + " ==\n";
    for (int metric = 0; metric < 4; ++metric) {
      std::vector<double> values;
      for (const auto& cell : cells[r]) {
        const double v = metric == 0   ? cell.pos_rmse
                         : metric == 1 ? cell.pos_max
                         : metric == 2 ? cell.ori_rmse
                                       : cell.ori_max;
        values.push_back(v);
      }
      const std::vector<bool> best = best_flags(values);
      out += "  ";
      out += metric_names[metric];
      out += ":";
      for (std::size_t m = 0; m < methods.size(); ++m) {
        out += "  " + methods[m] + "=" + fmt(values[m]);
        if (best[m]) out += "*";
      }
      out += "\n";
    }
  }
  out += "(* = best per metric; ties flag all)\n";
  return out;
}

std::string ComparisonTable::render_csv() const {
  std::string out = "row,method,pos_rmse_m,pos_max_m,ori_rmse_rad,ori_max_rad,"
                    "best_pos_rmse,best_ori_rmse\n";
  for (std::size_t r = 0; r < cells.size(); ++r) {
    std::vector<double> pos, ori;
    for (const auto& cell : cells[r]) {
      pos.push_back(cell.pos_rmse);
      ori.push_back(cell.ori_rmse);
    }
    const std::vector<bool> best_pos = best_flags(pos);
    const std::vector<bool> best_ori = best_flags(ori);
    for (std::size_t m = 0; m < methods.size(); ++m) {
      const TaskReport& c = cells[r][m];
      out += row_labels[r] + "," + methods[m] + "," + fmt(c.pos_rmse) + "," +
             fmt(c.pos_max) + "," + fmt(c.ori_rmse) + "," + fmt(c.ori_max) +
             "," + (best_pos[m] ? "1" : "0") + "," + (best_ori[m] ? "1" : "0") +
             "\n";
    }
  }
  return out;
}

std::string error_series_csv(const ErrorSeries& series,
                             const std::vector<TaskSample>& tasks,
                             const std::string& method) {
  std::string out = "t,pos_err_m,ori_err_rad,task_index,method\n";
  char buf[128];
  for (const auto& p : series.points) {
    const int idx = task_of(p.t, tasks);
    std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%.9g,%d,", p.t, p.pos_err,
                  p.ori_err, idx);
    out += buf;
    out += method;
    out += '\n';
  }
  return out;
}

std::string report_json(const std::vector<TaskReport>& tasks,
                        const TaskReport& overall, std::size_t skipped) {
  Json j;
  j["tasks"] = Json::array();
  auto to_json = [](const TaskReport& r) {
    Json rj;
    rj["task_index"] = r.task_index;
    rj["pos_rmse_m"] = r.pos_rmse;
    rj["pos_max_m"] = r.pos_max;
    rj["ori_rmse_rad"] = r.ori_rmse;
    rj["ori_max_rad"] = r.ori_max;
    rj["count"] = r.count;
    return rj;
  };
  for (const auto& r : tasks) j["tasks"].push_back(to_json(r));
  j["overall"] = to_json(overall);
  j["skipped_outside_gt"] = skipped;
  return j.dump(2) + "\n";
}

}  // namespace demofuse
