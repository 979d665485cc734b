#pragma once

#include <cstdint>

#include "daf/data.hpp"
#include "daf/model/backbone.hpp"

// Per-task adapter training: momentum SGD with a cosine-annealed learning
// rate over the adapter and a fresh task head, the backbone held frozen.
namespace daf::harness {

struct TrainConfig {
  Index epochs = 20;
  double lr = 0.01;
  Index batch = 48;
  double momentum = 0.9;
  std::uint64_t seed = 0;
};

void validate_train_config(const TrainConfig& cfg);

struct TaskTrainResult {
  model::Adapter adapter;
  // The head is consumed once more for the fusion statistics and then
  // discarded; it never crosses a task boundary.
  model::TaskHead head;
  // Accuracy of (adapter, head) on the task's own training data.
  double train_accuracy = 0.0;
};

// Trains a copy of `init` on `data` (labels are 0-based head indices).
// epochs = 0 or lr = 0 return the initialization unchanged. Deterministic
// in cfg.seed. Throws ConfigError on empty data or out-of-range settings,
// ShapeError when the adapter layout does not match the backbone.
[[nodiscard]] TaskTrainResult train_task_adapter(
    const model::Backbone& backbone, const model::Adapter& init,
    const LabeledDataset& data, const TrainConfig& cfg);

}  // namespace daf::harness
