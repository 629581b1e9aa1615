// Copyright 2026 the gaussflow authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef GAUSSFLOW_HARNESS_METRICS_HPP_
#define GAUSSFLOW_HARNESS_METRICS_HPP_

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <optional>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

#include "gaussflow/errors.hpp"

namespace gaussflow::harness {

/// One emitted benchmark row. Optional fields render as empty CSV cells, so
/// a diverged run carries its flag without inventing metric values.
struct MetricRow {
  std::string experiment;
  std::string method;
  std::optional<double> sweep_value;
  int replicate = 0;
  std::optional<int> time_index;
  std::optional<double> ess;
  std::optional<double> rmse;
  std::optional<double> wall_ms;
  bool diverged = false;
  std::optional<double> steps_mean;
  std::optional<int> steps_max;
};

inline constexpr const char* kCsvHeader =
    "experiment,method,sweep_value,replicate,time_index,ess,rmse,wall_ms,diverged,"
    "steps_mean,steps_max";

/// Shortest round-trip decimal form of a double, so identical values always
/// print identically regardless of locale or stream state.
inline std::string format_double(double value) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

namespace internal {

inline void append_cell(std::string* line, const std::optional<double>& value) {
  line->push_back(',');
  if (value.has_value() && std::isfinite(*value)) line->append(format_double(*value));
}

inline void append_cell(std::string* line, const std::optional<int>& value) {
  line->push_back(',');
  if (value.has_value()) line->append(std::to_string(*value));
}

}  // namespace internal

inline std::string to_csv_line(const MetricRow& row) {
  std::string line;
  line.append(row.experiment);
  line.push_back(',');
  line.append(row.method);
  internal::append_cell(&line, row.sweep_value);
  line.push_back(',');
  line.append(std::to_string(row.replicate));
  internal::append_cell(&line, row.time_index);
  internal::append_cell(&line, row.ess);
  internal::append_cell(&line, row.rmse);
  internal::append_cell(&line, row.wall_ms);
  line.push_back(',');
  line.append(row.diverged ? "1" : "0");
  internal::append_cell(&line, row.steps_mean);
  internal::append_cell(&line, row.steps_max);
  return line;
}

/// Stable emission order: rows sort on (experiment, sweep value, replicate,
/// method, time index) so concurrent production order never shows in the file.
inline void sort_rows(std::vector<MetricRow>* rows) {
  const auto key = [](const MetricRow& r) {
    return std::make_tuple(r.experiment,
                           r.sweep_value.has_value() ? *r.sweep_value : -1e300,
                           r.replicate, r.method,
                           r.time_index.has_value() ? *r.time_index : -1);
  };
  std::stable_sort(rows->begin(), rows->end(),
                   [&](const MetricRow& a, const MetricRow& b) { return key(a) < key(b); });
}

inline void write_csv(std::ostream& out, const std::vector<MetricRow>& rows) {
  out << kCsvHeader << '\n';
  for (const MetricRow& row : rows) out << to_csv_line(row) << '\n';
}

/// Root mean squared Euclidean error over selected state components:
/// sqrt( mean_t | sel(estimate_t) - sel(truth_t) |^2 ). An empty selector
/// means all components.
inline double compute_rmse(const std::vector<Eigen::VectorXd>& estimates,
                           const std::vector<Eigen::VectorXd>& truths,
                           const std::vector<int>& components = {}) {
  if (estimates.size() != truths.size()) {
    throw Error("compute_rmse: estimate and truth series differ in length");
  }
  if (estimates.empty()) throw Error("compute_rmse: empty series");
  double total = 0.0;
  for (std::size_t t = 0; t < estimates.size(); ++t) {
    const Eigen::VectorXd& a = estimates[t];
    const Eigen::VectorXd& b = truths[t];
    if (a.size() != b.size()) throw Error("compute_rmse: dimension mismatch");
    if (components.empty()) {
      total += (a - b).squaredNorm();
    } else {
      for (const int c : components) {
        if (c < 0 || c >= a.size()) throw Error("compute_rmse: component out of range");
        const double diff = a[c] - b[c];
        total += diff * diff;
      }
    }
  }
  return std::sqrt(total / static_cast<double>(estimates.size()));
}

}  // namespace gaussflow::harness

#endif  // GAUSSFLOW_HARNESS_METRICS_HPP_
