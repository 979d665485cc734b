#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "daf/data.hpp"

namespace daf::model {

// Cosine annealing over whole epochs: full rate at epoch 0, approaching
// zero at the final one.
[[nodiscard]] inline double cosine_lr(double base, int epoch,
                                      int total_epochs) {
  return base * 0.5 *
         (1.0 + std::cos(M_PI * static_cast<double>(epoch) /
                         static_cast<double>(total_epochs)));
}

// Seeded shuffle split into consecutive chunks; the trailing partial batch
// is kept.
[[nodiscard]] inline std::vector<std::vector<Index>> epoch_batches(
    Index n, Index batch, std::mt19937_64& rng) {
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<Index>> out;
  for (Index start = 0; start < n; start += batch) {
    const Index stop = std::min(n, start + batch);
    out.emplace_back(order.begin() + start, order.begin() + stop);
  }
  return out;
}

[[nodiscard]] inline LabeledDataset gather_rows(
    const LabeledDataset& data, const std::vector<Index>& rows) {
  LabeledDataset out;
  out.inputs.resize(static_cast<Index>(rows.size()), data.inputs.cols());
  out.labels.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.inputs.row(static_cast<Index>(i)) = data.inputs.row(rows[i]);
    out.labels[i] = data.labels[static_cast<std::size_t>(rows[i])];
  }
  return out;
}

}  // namespace daf::model
