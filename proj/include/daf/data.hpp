#pragma once

#include <vector>

#include "daf/common.hpp"

namespace daf {

// Row-per-sample dense dataset. Labels are whatever id space the caller
// uses: raw class ids in streams, 0-based head indices while training.
struct LabeledDataset {
  RowMatrixXd inputs;
  std::vector<int> labels;

  [[nodiscard]] Index size() const { return inputs.rows(); }
};

void validate_dataset(const LabeledDataset& data, const char* context);

}  // namespace daf
