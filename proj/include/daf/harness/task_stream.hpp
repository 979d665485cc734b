#pragma once

#include <cstdint>
#include <vector>

#include "daf/data.hpp"

// Synthetic class-incremental protocol: Gaussian-blob classes with
// controlled separation, split into a pretraining pool (for the frozen
// backbone) and a sequence of tasks with pairwise-disjoint class sets.
namespace daf::harness {

struct Task {
  // Global class ids in local-label order: a sample with local label l
  // belongs to global class class_ids[l].
  std::vector<int> class_ids;
  LabeledDataset train;  // labels are local indices into class_ids
  LabeledDataset test;   // labels are local indices into class_ids
};

struct TaskStream {
  Index input_dim = 0;
  std::vector<int> pretrain_class_ids;
  LabeledDataset pretrain;  // labels are local pretrain indices
  std::vector<Task> tasks;
};

struct StreamConfig {
  Index num_tasks = 10;
  Index classes_per_task = 5;
  Index input_dim = 16;
  Index samples_per_class = 64;
  Index test_samples_per_class = 32;
  Index pretrain_classes = 10;
  Index pretrain_samples_per_class = 64;
  double separation = 4.0;  // center scale relative to unit class noise
  std::uint64_t seed = 1993;
};

// Throws ConfigError when any count is < 1 or separation <= 0.
void validate_stream_config(const StreamConfig& cfg);

// Deterministic in cfg.seed: class centers are separation-scaled standard
// normals, samples add unit noise, and a seeded shuffle assigns classes to
// the pretraining pool and then to tasks in order. Per-class sample draws
// use seeds derived from the global class id, so a class's data does not
// depend on where the shuffle placed it.
[[nodiscard]] TaskStream build_synthetic_stream(const StreamConfig& cfg);

}  // namespace daf::harness
