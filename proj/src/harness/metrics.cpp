#include "daf/harness/metrics.hpp"

#include <string>

namespace daf::harness {

double AccuracyMatrix::at(Index t, Index j) const {
  if (t < 1 || t > tasks() || j < 1 || j > t) {
    throw ContractError("accuracy matrix: A_{" + std::to_string(t) + "," +
                        std::to_string(j) + "} is outside the lower triangle");
  }
  return rows[static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(j - 1)];
}

void validate_accuracy_matrix(const AccuracyMatrix& a) {
  if (a.rows.empty()) {
    throw ContractError("accuracy matrix: empty");
  }
  for (std::size_t t = 0; t < a.rows.size(); ++t) {
    if (a.rows[t].size() != t + 1) {
      throw ContractError("accuracy matrix: session " + std::to_string(t + 1) +
                          " has " + std::to_string(a.rows[t].size()) +
                          " entries, expected " + std::to_string(t + 1));
    }
    for (double v : a.rows[t]) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw ContractError("accuracy matrix: entry " + format_double(v) +
                            " outside [0, 1]");
      }
    }
  }
}

Metrics compute_metrics(const AccuracyMatrix& a) {
  validate_accuracy_matrix(a);
  const Index T = a.tasks();
  Metrics m;

  double session_sum = 0.0;
  for (Index t = 1; t <= T; ++t) {
    double row_sum = 0.0;
    for (Index j = 1; j <= t; ++j) row_sum += a.at(t, j);
    session_sum += row_sum / static_cast<double>(t);
  }
  m.avg_accuracy = session_sum / static_cast<double>(T);

  double final_sum = 0.0;
  for (Index j = 1; j <= T; ++j) final_sum += a.at(T, j);
  m.final_accuracy = final_sum / static_cast<double>(T);

  if (T > 1) {
    double old_sum = 0.0;
    for (Index j = 1; j < T; ++j) old_sum += a.at(T, j);
    m.stability = old_sum / static_cast<double>(T - 1);
  }

  double diag_sum = 0.0;
  for (Index t = 1; t <= T; ++t) diag_sum += a.at(t, t);
  m.plasticity = diag_sum / static_cast<double>(T);

  return m;
}

}  // namespace daf::harness
