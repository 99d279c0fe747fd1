#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

namespace vidcl::metrics {

// Lower-triangular record: R[i][j] = accuracy on task j after training task
// i, defined for j <= i only.
struct AccuracyMatrix {
  std::vector<std::vector<double>> rows;  // rows[i] has i + 1 entries

  int n_tasks() const { return static_cast<int>(rows.size()); }
  double at(int i, int j) const { return rows.at(i).at(j); }
  void append_row(std::vector<double> row);
  void validate() const;

  bool operator==(const AccuracyMatrix&) const = default;
};

// Mean over j < i of R[j][j] - R[i][j]. Negative values indicate backward
// transfer. i = 0 reports 0 by convention.
double backward_forgetting(const AccuracyMatrix& R, int i);
inline double backward_forgetting(const AccuracyMatrix& R) {
  return backward_forgetting(R, R.n_tasks() - 1);
}

// Mean of the final row.
double final_average_accuracy(const AccuracyMatrix& R);

// Entry i = mean of row i: the average accuracy after each task.
std::vector<double> accuracy_curve(const AccuracyMatrix& R);

struct PerClassReport {
  std::map<int, double> accuracy;                 // class id -> correct fraction
  std::vector<std::pair<int, double>> ascending;  // hardest classes first
  std::vector<int> missing;                       // expected classes never seen
};

// predictions: (true class, predicted class) pairs. expected_classes may list
// classes that must appear; absent ones are reported separately.
PerClassReport per_class_report(const std::vector<std::pair<int, int>>& predictions,
                                const std::vector<int>& expected_classes = {});

// CSV with header "after_task, acc_task_0, ..." and empty cells above the
// diagonal. Values round-trip exactly.
std::string accuracy_matrix_to_csv(const AccuracyMatrix& R);
AccuracyMatrix accuracy_matrix_from_csv(const std::string& text);
void save_accuracy_matrix(const AccuracyMatrix& R, const std::string& path);
AccuracyMatrix load_accuracy_matrix(const std::string& path);

// {acc, bwf, curve, per_class}
std::string metrics_report_json(const AccuracyMatrix& R, const PerClassReport& per_class);

}  // namespace vidcl::metrics
