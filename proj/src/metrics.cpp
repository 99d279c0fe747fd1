#include "vidcl/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "vidcl/errors.hpp"

namespace vidcl::metrics {

using nlohmann::json;

void AccuracyMatrix::append_row(std::vector<double> row) {
  if (row.size() != rows.size() + 1)
    throw DataError("accuracy matrix row " + std::to_string(rows.size()) + " needs " +
                    std::to_string(rows.size() + 1) + " entries");
  rows.push_back(std::move(row));
  for (double v : rows.back())
    if (v < 0.0 || v > 1.0) throw DataError("accuracy values must lie in [0, 1]");
}

void AccuracyMatrix::validate() const {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != i + 1)
      throw DataError("accuracy matrix is not lower-triangular at row " +
                      std::to_string(i));
    for (double v : rows[i])
      if (v < 0.0 || v > 1.0) throw DataError("accuracy values must lie in [0, 1]");
  }
}

double backward_forgetting(const AccuracyMatrix& R, int i) {
  if (i < 0 || i >= R.n_tasks()) throw DataError("task index outside the matrix");
  if (i == 0) return 0.0;  // single-task convention
  double sum = 0.0;
  for (int j = 0; j < i; ++j) sum += R.at(j, j) - R.at(i, j);
  return sum / static_cast<double>(i);
}

double final_average_accuracy(const AccuracyMatrix& R) {
  if (R.n_tasks() == 0) throw DataError("accuracy matrix is empty");
  const auto& last = R.rows.back();
  double sum = 0.0;
  for (double v : last) sum += v;
  return sum / static_cast<double>(last.size());
}

std::vector<double> accuracy_curve(const AccuracyMatrix& R) {
  std::vector<double> curve;
  curve.reserve(R.rows.size());
  for (const auto& row : R.rows) {
    double sum = 0.0;
    for (double v : row) sum += v;
    curve.push_back(sum / static_cast<double>(row.size()));
  }
  return curve;
}

PerClassReport per_class_report(const std::vector<std::pair<int, int>>& predictions,
                                const std::vector<int>& expected_classes) {
  if (predictions.empty()) throw DataError("per-class report needs predictions");
  std::map<int, std::pair<int, int>> counts;  // class -> (correct, total)
  for (const auto& [truth, predicted] : predictions) {
    auto& c = counts[truth];
    c.first += truth == predicted ? 1 : 0;
    c.second += 1;
  }
  PerClassReport report;
  for (const auto& [cls, c] : counts)
    report.accuracy[cls] = static_cast<double>(c.first) / c.second;
  for (const auto& [cls, acc] : report.accuracy) report.ascending.emplace_back(cls, acc);
  std::stable_sort(report.ascending.begin(), report.ascending.end(),
                   [](const auto& a, const auto& b) { return a.second < b.second; });
  for (int cls : expected_classes)
    if (!counts.count(cls)) report.missing.push_back(cls);
  return report;
}

std::string accuracy_matrix_to_csv(const AccuracyMatrix& R) {
  R.validate();
  std::ostringstream out;
  out << "after_task";
  for (int j = 0; j < R.n_tasks(); ++j) out << ", acc_task_" << j;
  out << "\n";
  char buf[40];
  for (int i = 0; i < R.n_tasks(); ++i) {
    out << i;
    for (int j = 0; j < R.n_tasks(); ++j) {
      out << ", ";
      if (j <= i) {
        std::snprintf(buf, sizeof(buf), "%.17g", R.at(i, j));
        out << buf;
      }
    }
    out << "\n";
  }
  return out.str();
}

AccuracyMatrix accuracy_matrix_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("after_task", 0) != 0)
    throw DataError("accuracy matrix CSV is missing its header");
  AccuracyMatrix R;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream cells(line);
    std::string cell;
    bool first = true;
    while (std::getline(cells, cell, ',')) {
      if (first) {  // row index column
        first = false;
        continue;
      }
      const auto start = cell.find_first_not_of(" \t");
      if (start == std::string::npos) continue;  // above-diagonal blank
      row.push_back(std::stod(cell.substr(start)));
    }
    R.append_row(std::move(row));
  }
  R.validate();
  return R;
}

void save_accuracy_matrix(const AccuracyMatrix& R, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write accuracy matrix '" + path + "'");
  out << accuracy_matrix_to_csv(R);
}

AccuracyMatrix load_accuracy_matrix(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open accuracy matrix '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return accuracy_matrix_from_csv(buf.str());
}

std::string metrics_report_json(const AccuracyMatrix& R,
                                const PerClassReport& per_class) {
  json j{{"acc", final_average_accuracy(R)},
         {"bwf", backward_forgetting(R)},
         {"curve", accuracy_curve(R)},
         {"per_class", json::object()},
         {"per_class_missing", per_class.missing}};
  for (const auto& [cls, acc] : per_class.accuracy)
    j["per_class"][std::to_string(cls)] = acc;
  return j.dump(2) + "\n";
}

}  // namespace vidcl::metrics
