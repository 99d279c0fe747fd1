#pragma once

#include <map>
#include <string>
#include <vector>

namespace vidcl::report {

// Everything a report needs, reloaded from a run folder's persisted
// artifacts (matrix.csv, metrics.json, run_manifest.json) so that reports
// regenerate identically after checkpoints are deleted.
struct RunSummary {
  std::string run_id;
  std::string method;
  std::string frames_per_video;  // "-", "ALL" or a count
  std::string frame_capacity;    // "-" or a count
  double acc = 0.0;
  double bwf = 0.0;
  std::vector<double> curve;
  std::map<int, double> per_class;
};

RunSummary load_run_summary(const std::string& run_dir);

// Benchmark-table layout: Model | Frames per video | Mem. Frame Capacity |
// Acc | BWF, percentages with two decimals.
std::string comparison_table_text(const std::vector<RunSummary>& runs);
std::string comparison_table_csv(const std::vector<RunSummary>& runs);

// Writes comparison table, accuracy-curve plot (+ CSV), and a per-class bar
// chart for the first two runs (+ CSV), sorted ascending by the second
// run's accuracy. Plots are skipped when with_plots is false.
std::vector<std::string> emit_report(const std::vector<std::string>& run_dirs,
                                     const std::string& out_dir, bool with_plots);

}  // namespace vidcl::report
