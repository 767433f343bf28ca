#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "vidyn/core/csv.hpp"
#include "vidyn/eval/metrics.hpp"

namespace vidyn {

// One (dataset, estimator-mode) cell of the comparison.
struct ModeRunMetrics {
  std::string dataset;
  std::string mode;
  double ate_t = 0;        // m
  double ate_r_deg = 0;    // deg
  double force_rmse_N = 0; // 0 when the mode estimates no force
  bool has_force = false;
};

namespace detail {

// **value** for the best entry of a column, *value* for the second best.
inline std::string mark(double v, const std::vector<double>& column) {
  std::vector<double> sorted = column;
  std::sort(sorted.begin(), sorted.end());
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  if (!sorted.empty() && v == sorted[0]) return "**" + std::string(buf) + "**";
  if (sorted.size() > 1 && v == sorted[1]) return "*" + std::string(buf) + "*";
  return buf;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

}  // namespace detail

// Comparison tables across estimator modes: report.md (per-dataset tables
// with best/second-best marking) and metrics.csv (one row per cell).
inline void compare_modes(const std::vector<ModeRunMetrics>& cells,
                          const std::string& report_path, const std::string& csv_path) {
  if (cells.empty()) throw std::invalid_argument("no metrics to compare");

  // every dataset must cover the same set of modes
  std::map<std::string, std::set<std::string>> per_ds;
  for (const auto& c : cells) {
    if (!per_ds[c.dataset].insert(c.mode).second)
      throw std::invalid_argument("duplicate cell " + c.dataset + "/" + c.mode);
  }
  const auto& ref_modes = per_ds.begin()->second;
  for (const auto& [ds, modes] : per_ds)
    if (modes != ref_modes)
      throw std::invalid_argument("mismatched mode lists across datasets (" + ds + ")");

  std::ofstream md(report_path);
  if (!md) throw std::runtime_error("cannot write " + report_path);
  md << "# Estimator comparison\n\n";
  md << "ATE_T in meters, ATE_R in degrees, force RMSE in Newtons (world frame).\n";
  md << "Best per column in bold, second best in italics.\n";
  for (const auto& [ds, modes] : per_ds) {
    std::vector<const ModeRunMetrics*> rows;
    for (const auto& c : cells)
      if (c.dataset == ds) rows.push_back(&c);
    std::vector<double> col_t, col_r, col_f;
    for (const auto* r : rows) {
      col_t.push_back(r->ate_t);
      col_r.push_back(r->ate_r_deg);
      if (r->has_force) col_f.push_back(r->force_rmse_N);
    }
    md << "\n## " << ds << "\n\n";
    md << "| mode | ATE_T [m] | ATE_R [deg] | force RMSE [N] |\n";
    md << "|---|---|---|---|\n";
    for (const auto* r : rows) {
      md << "| " << r->mode << " | " << detail::mark(r->ate_t, col_t) << " | "
         << detail::mark(r->ate_r_deg, col_r) << " | "
         << (r->has_force ? detail::mark(r->force_rmse_N, col_f) : std::string("-"))
         << " |\n";
    }
  }
  md.close();

  std::ofstream csv(csv_path);
  if (!csv) throw std::runtime_error("cannot write " + csv_path);
  csv << "dataset,mode,ate_t_m,ate_r_deg,force_rmse_N\n";
  for (const auto& c : cells) {
    csv << c.dataset << "," << c.mode << "," << detail::format_double(c.ate_t) << ","
        << detail::format_double(c.ate_r_deg) << ","
        << (c.has_force ? detail::format_double(c.force_rmse_N) : std::string("nan")) << "\n";
  }
}

}  // namespace vidyn
