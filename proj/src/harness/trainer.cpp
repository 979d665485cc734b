#include "daf/harness/trainer.hpp"

#include <random>
#include <utility>
#include <vector>

#include "daf/model/sgd.hpp"
#include "daf/numerics/tape.hpp"

namespace daf::harness {

namespace {
constexpr std::uint64_t kHeadSalt = 0x3ead;
constexpr std::uint64_t kShuffleSalt = 0x5481;
}  // namespace

void validate_train_config(const TrainConfig& cfg) {
  if (cfg.epochs < 0 || cfg.batch < 1 || cfg.lr < 0.0 ||
      !(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) {
    throw ConfigError("train config: require epochs >= 0, batch >= 1,"
                      " lr >= 0, momentum in [0, 1)");
  }
}

TaskTrainResult train_task_adapter(const model::Backbone& backbone,
                                   const model::Adapter& init,
                                   const LabeledDataset& data,
                                   const TrainConfig& cfg) {
  validate_train_config(cfg);
  if (data.size() == 0) {
    throw ConfigError("task training: empty dataset");
  }
  validate_dataset(data, "task training");
  if (init.layout != backbone.adapter_layout(init.layout.rank)) {
    throw ShapeError("task training: adapter layout " +
                     model::layout_string(init.layout) +
                     " does not fit backbone width " +
                     std::to_string(backbone.dim()));
  }

  int classes = 0;
  for (int y : data.labels) {
    if (y < 0) throw ContractError("task training: negative label");
    classes = std::max(classes, y + 1);
  }
  if (classes < 2) {
    throw ConfigError("task training: need at least 2 classes, got " +
                      std::to_string(classes));
  }

  TaskTrainResult result{init,
                         model::TaskHead::random_init(
                             backbone.dim(), classes,
                             derive_seed(cfg.seed, kHeadSalt)),
                         0.0};
  model::Adapter& adapter = result.adapter;
  model::TaskHead& head = result.head;

  if (cfg.epochs > 0) {
    // Flat blocks in tape-output order; slot index doubles as the velocity
    // slot, exactly as in backbone pretraining.
    std::vector<std::pair<double*, Index>> blocks;
    for (auto& layer : adapter.layers) {
      blocks.emplace_back(layer.down.data(), layer.down.size());
      blocks.emplace_back(layer.up.data(), layer.up.size());
    }
    blocks.emplace_back(head.w.data(), head.w.size());
    blocks.emplace_back(head.b.data(), head.b.size());
    std::vector<Eigen::ArrayXd> velocity;
    velocity.reserve(blocks.size());
    for (const auto& [ptr, n] : blocks) {
      (void)ptr;
      velocity.push_back(Eigen::ArrayXd::Zero(n));
    }

    std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, kShuffleSalt));
    for (Index epoch = 0; epoch < cfg.epochs; ++epoch) {
      const double lr = model::cosine_lr(cfg.lr, static_cast<int>(epoch),
                                         static_cast<int>(cfg.epochs));
      for (const auto& batch_rows :
           model::epoch_batches(data.size(), cfg.batch, shuffle_rng)) {
        const LabeledDataset batch = model::gather_rows(data, batch_rows);
        Tape tape;
        model::ModelGraph g = model::build_graph(
            tape, backbone, &adapter, &head, batch.inputs, &batch.labels);
        const auto grads = tape.backward(g.loss);
        std::vector<NodeId> order;
        for (std::size_t l = 0; l < adapter.layers.size(); ++l) {
          order.push_back(g.adapter_down[l]);
          order.push_back(g.adapter_up[l]);
        }
        order.push_back(g.head_w);
        order.push_back(g.head_b);
        for (std::size_t i = 0; i < order.size(); ++i) {
          const Eigen::ArrayXd& grad = grads.flat_at(order[i]);
          velocity[i] = cfg.momentum * velocity[i] + grad;
          Eigen::Map<Eigen::ArrayXd> w(blocks[i].first, blocks[i].second);
          w -= lr * velocity[i];
          if (!w.allFinite()) {
            throw NumericError("task training: non-finite weight at epoch " +
                               std::to_string(epoch));
          }
        }
      }
    }
  }

  result.train_accuracy = model::head_accuracy(backbone, &adapter, head, data);
  return result;
}

}  // namespace daf::harness
