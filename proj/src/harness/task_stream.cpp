#include "daf/harness/task_stream.hpp"

#include <algorithm>
#include <numeric>
#include <random>

namespace daf::harness {

namespace {

constexpr std::uint64_t kCenterSalt = 0xce27;
constexpr std::uint64_t kShuffleSalt = 0xc1a55;
constexpr std::uint64_t kTrainSalt = 0x7a31;
constexpr std::uint64_t kTestSalt = 0x7e57;

Eigen::VectorXd class_center(Index dim, double separation, std::uint64_t seed,
                             int class_id) {
  std::mt19937_64 rng(
      derive_seed(seed, kCenterSalt, static_cast<std::uint64_t>(class_id)));
  std::normal_distribution<double> unit(0.0, 1.0);
  Eigen::VectorXd center(dim);
  for (Index j = 0; j < dim; ++j) center[j] = separation * unit(rng);
  return center;
}

// `count` noisy draws around the class center, appended as rows with the
// given local label.
void append_class_samples(LabeledDataset& out, const Eigen::VectorXd& center,
                          Index count, int local_label, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  const Index start = out.inputs.rows();
  out.inputs.conservativeResize(start + count, center.size());
  for (Index i = 0; i < count; ++i) {
    for (Index j = 0; j < center.size(); ++j) {
      out.inputs(start + i, j) = center[j] + unit(rng);
    }
    out.labels.push_back(local_label);
  }
}

}  // namespace

void validate_stream_config(const StreamConfig& cfg) {
  if (cfg.num_tasks < 1 || cfg.classes_per_task < 1 || cfg.input_dim < 1 ||
      cfg.samples_per_class < 1 || cfg.test_samples_per_class < 1 ||
      cfg.pretrain_classes < 1 || cfg.pretrain_samples_per_class < 1) {
    throw ConfigError("stream config: every count must be >= 1");
  }
  if (!(cfg.separation > 0.0)) {
    throw ConfigError("stream config: separation must be positive, got " +
                      format_double(cfg.separation));
  }
}

TaskStream build_synthetic_stream(const StreamConfig& cfg) {
  validate_stream_config(cfg);

  const Index total_classes =
      cfg.pretrain_classes + cfg.num_tasks * cfg.classes_per_task;
  std::vector<int> order(static_cast<std::size_t>(total_classes));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, kShuffleSalt));
  std::shuffle(order.begin(), order.end(), shuffle_rng);

  std::vector<Eigen::VectorXd> centers;
  centers.reserve(static_cast<std::size_t>(total_classes));
  for (Index k = 0; k < total_classes; ++k) {
    centers.push_back(class_center(cfg.input_dim, cfg.separation, cfg.seed,
                                   static_cast<int>(k)));
  }

  TaskStream stream;
  stream.input_dim = cfg.input_dim;

  std::size_t cursor = 0;
  stream.pretrain.inputs.resize(0, cfg.input_dim);
  for (Index local = 0; local < cfg.pretrain_classes; ++local, ++cursor) {
    const int class_id = order[cursor];
    stream.pretrain_class_ids.push_back(class_id);
    append_class_samples(
        stream.pretrain, centers[static_cast<std::size_t>(class_id)],
        cfg.pretrain_samples_per_class, static_cast<int>(local),
        derive_seed(cfg.seed, kTrainSalt,
                    static_cast<std::uint64_t>(class_id)));
  }

  for (Index t = 0; t < cfg.num_tasks; ++t) {
    Task task;
    task.train.inputs.resize(0, cfg.input_dim);
    task.test.inputs.resize(0, cfg.input_dim);
    for (Index local = 0; local < cfg.classes_per_task; ++local, ++cursor) {
      const int class_id = order[cursor];
      task.class_ids.push_back(class_id);
      append_class_samples(
          task.train, centers[static_cast<std::size_t>(class_id)],
          cfg.samples_per_class, static_cast<int>(local),
          derive_seed(cfg.seed, kTrainSalt,
                      static_cast<std::uint64_t>(class_id)));
      append_class_samples(
          task.test, centers[static_cast<std::size_t>(class_id)],
          cfg.test_samples_per_class, static_cast<int>(local),
          derive_seed(cfg.seed, kTestSalt,
                      static_cast<std::uint64_t>(class_id)));
    }
    stream.tasks.push_back(std::move(task));
  }
  return stream;
}

}  // namespace daf::harness
