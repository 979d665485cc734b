#pragma once

#include <optional>
#include <vector>

#include "daf/common.hpp"

// Continual-learning accuracy bookkeeping: the lower-triangular matrix of
// per-task accuracies after each session, and the four summary metrics
// derived from it.
namespace daf::harness {

// rows[t][j] is the accuracy on task j+1 after training task t+1 (0-based
// storage of the 1-based lower triangle).
struct AccuracyMatrix {
  std::vector<std::vector<double>> rows;

  [[nodiscard]] Index tasks() const {
    return static_cast<Index>(rows.size());
  }
  // 1-based session/task indices, mirroring the A_{t,j} notation.
  [[nodiscard]] double at(Index t, Index j) const;
};

// Throws ContractError unless row t has exactly t entries, all in [0, 1].
void validate_accuracy_matrix(const AccuracyMatrix& a);

struct Metrics {
  double avg_accuracy = 0.0;           // mean over sessions of session means
  double final_accuracy = 0.0;         // mean accuracy after the last session
  std::optional<double> stability;     // retention of earlier tasks; absent at T = 1
  double plasticity = 0.0;             // mean same-session accuracy
};

// avg = (1/T)·Σ_t (1/t)·Σ_{j<=t} A_{t,j};  final = (1/T)·Σ_j A_{T,j};
// stability = (1/(T−1))·Σ_{j<T} A_{T,j};   plasticity = (1/T)·Σ_j A_{j,j}.
[[nodiscard]] Metrics compute_metrics(const AccuracyMatrix& a);

}  // namespace daf::harness
