#include "daf/model/backbone.hpp"

#include <cmath>
#include <random>
#include <string>

#include "daf/model/sgd.hpp"

namespace daf {

void validate_dataset(const LabeledDataset& data, const char* context) {
  if (data.inputs.rows() == 0) {
    throw ConfigError(std::string(context) + ": dataset is empty");
  }
  if (static_cast<Index>(data.labels.size()) != data.inputs.rows()) {
    throw ShapeError(std::string(context) + ": " +
                     std::to_string(data.labels.size()) + " labels for " +
                     std::to_string(data.inputs.rows()) + " rows");
  }
  if (!data.inputs.allFinite()) {
    throw NumericError(std::string(context) +
                       ": dataset contains a non-finite input");
  }
}

}  // namespace daf

namespace daf::model {

namespace {

void fill_uniform(RowMatrixXd& m, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = dist(rng);
  }
}

void hash_block(std::uint64_t& h, const double* p, Index n) {
  // Chained FNV over consecutive blocks: order-sensitive by design.
  h = fnv1a64(&h, sizeof(h)) ^
      fnv1a64(p, sizeof(double) * static_cast<std::size_t>(n));
}

Tensor vec_tensor(const Eigen::VectorXd& v) {
  return Tensor::from_vector(v.array());
}

}  // namespace

std::uint64_t Backbone::content_hash() const {
  std::uint64_t h = 0x6a09e667f3bcc908ull;
  hash_block(h, embed_w.data(), embed_w.size());
  hash_block(h, embed_b.data(), embed_b.size());
  hash_block(h, w1.data(), w1.size());
  hash_block(h, b1.data(), b1.size());
  hash_block(h, w2.data(), w2.size());
  hash_block(h, b2.data(), b2.size());
  return h;
}

Backbone Backbone::random_init(Index input_dim, Index dim,
                               std::uint64_t seed) {
  if (input_dim <= 0 || dim <= 0) {
    throw ShapeError("backbone dimensions must be positive, got input_dim=" +
                     std::to_string(input_dim) + " dim=" +
                     std::to_string(dim));
  }
  std::mt19937_64 rng(seed);
  Backbone b;
  b.embed_w.resize(input_dim, dim);
  fill_uniform(b.embed_w, 1.0 / std::sqrt(static_cast<double>(input_dim)),
               rng);
  b.embed_b = Eigen::VectorXd::Zero(dim);
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  b.w1.resize(dim, dim);
  fill_uniform(b.w1, bound, rng);
  b.b1 = Eigen::VectorXd::Zero(dim);
  b.w2.resize(dim, dim);
  fill_uniform(b.w2, bound, rng);
  b.b2 = Eigen::VectorXd::Zero(dim);
  b.frozen = true;
  return b;
}

TaskHead TaskHead::random_init(Index dim, Index classes, std::uint64_t seed) {
  if (dim <= 0 || classes <= 0) {
    throw ShapeError("task head dimensions must be positive");
  }
  std::mt19937_64 rng(seed);
  TaskHead h;
  h.w.resize(dim, classes);
  fill_uniform(h.w, 1.0 / std::sqrt(static_cast<double>(dim)), rng);
  h.b = Eigen::VectorXd::Zero(classes);
  return h;
}

NodeId adapter_layer_forward(Tape& tape, NodeId x, NodeId w, NodeId b,
                             NodeId down, NodeId up) {
  NodeId trunk = tape.relu(tape.add_bias(tape.matmul(x, w), b));
  NodeId branch = tape.matmul(tape.relu(tape.matmul(x, down)), up);
  return tape.add(trunk, branch);
}

ModelGraph build_graph(Tape& tape, const Backbone& backbone,
                       const Adapter* adapter, const TaskHead* head,
                       const RowMatrixXd& inputs,
                       const std::vector<int>* labels,
                       const GraphOptions& opts) {
  if (inputs.cols() != backbone.input_dim()) {
    throw ShapeError("inputs have width " + std::to_string(inputs.cols()) +
                     ", backbone expects " +
                     std::to_string(backbone.input_dim()));
  }
  if (opts.train_backbone && backbone.frozen) {
    throw ContractError("frozen backbone cannot enter the tape as trainable");
  }
  if (adapter != nullptr) {
    if (adapter->layout.layers != 2 || adapter->layout.dim != backbone.dim()) {
      throw ShapeError("adapter layout " + layout_string(adapter->layout) +
                       " does not fit a backbone of width " +
                       std::to_string(backbone.dim()));
    }
  }

  ModelGraph g;
  auto leaf = [&](const Tensor& t) {
    return opts.train_backbone ? tape.param(t) : tape.constant(t);
  };
  g.backbone.push_back(leaf(Tensor::from_matrix(backbone.embed_w)));
  g.backbone.push_back(leaf(vec_tensor(backbone.embed_b)));
  g.backbone.push_back(leaf(Tensor::from_matrix(backbone.w1)));
  g.backbone.push_back(leaf(vec_tensor(backbone.b1)));
  g.backbone.push_back(leaf(Tensor::from_matrix(backbone.w2)));
  g.backbone.push_back(leaf(vec_tensor(backbone.b2)));
  if (adapter != nullptr) {
    for (const auto& layer : adapter->layers) {
      g.adapter_down.push_back(tape.param(Tensor::from_matrix(layer.down)));
      g.adapter_up.push_back(tape.param(Tensor::from_matrix(layer.up)));
    }
  }

  g.input = tape.constant(Tensor::from_matrix(inputs));
  NodeId embed = tape.add_bias(tape.matmul(g.input, g.backbone[0]),
                               g.backbone[1]);
  NodeId h = embed;
  for (Index layer = 0; layer < 2; ++layer) {
    const NodeId w = g.backbone[static_cast<std::size_t>(2 + 2 * layer)];
    const NodeId b = g.backbone[static_cast<std::size_t>(3 + 2 * layer)];
    if (adapter != nullptr) {
      h = adapter_layer_forward(
          tape, h, w, b, g.adapter_down[static_cast<std::size_t>(layer)],
          g.adapter_up[static_cast<std::size_t>(layer)]);
    } else {
      h = tape.relu(tape.add_bias(tape.matmul(h, w), b));
    }
  }
  g.features = h;

  if (head != nullptr) {
    if (head->w.rows() != backbone.dim()) {
      throw ShapeError("head expects features of width " +
                       std::to_string(head->w.rows()) + ", backbone emits " +
                       std::to_string(backbone.dim()));
    }
    g.head_w = tape.param(Tensor::from_matrix(head->w));
    g.head_b = tape.param(vec_tensor(head->b));
    g.logits = tape.add_bias(tape.matmul(g.features, g.head_w), g.head_b);
    if (labels != nullptr) {
      g.loss = tape.softmax_cross_entropy(g.logits, *labels);
      if (opts.loss_scale != 1.0) {
        g.loss = tape.scale(g.loss, opts.loss_scale);
      }
    }
  } else if (labels != nullptr) {
    throw ContractError("labels supplied without a head");
  }
  return g;
}

RowMatrixXd features(const Backbone& backbone, const Adapter* adapter,
                     const RowMatrixXd& inputs) {
  Tape tape;
  ModelGraph g = build_graph(tape, backbone, adapter, nullptr, inputs, nullptr);
  return tape.value(g.features).mat();
}

RowMatrixXd adapter_forward(const Backbone& backbone, Index layer,
                            const LayerAdapter& adapter,
                            const RowMatrixXd& x) {
  if (layer < 0 || layer >= 2) {
    throw ContractError("adapter_forward: layer index " +
                        std::to_string(layer) + " outside [0, 2)");
  }
  if (x.cols() != backbone.dim()) {
    throw ShapeError("adapter_forward: input width " +
                     std::to_string(x.cols()) + " vs layer width " +
                     std::to_string(backbone.dim()));
  }
  if (adapter.down.rows() != backbone.dim() ||
      adapter.up.cols() != backbone.dim() ||
      adapter.down.cols() != adapter.up.rows()) {
    throw ShapeError("adapter_forward: adapter of shape [" +
                     std::to_string(adapter.down.rows()) + "x" +
                     std::to_string(adapter.down.cols()) + "],[" +
                     std::to_string(adapter.up.rows()) + "x" +
                     std::to_string(adapter.up.cols()) +
                     "] does not fit layer width " +
                     std::to_string(backbone.dim()));
  }
  Tape tape;
  NodeId nx = tape.constant(Tensor::from_matrix(x));
  NodeId w = tape.constant(
      Tensor::from_matrix(layer == 0 ? backbone.w1 : backbone.w2));
  NodeId b = tape.constant(vec_tensor(layer == 0 ? backbone.b1 : backbone.b2));
  NodeId down = tape.param(Tensor::from_matrix(adapter.down));
  NodeId up = tape.param(Tensor::from_matrix(adapter.up));
  return tape.value(adapter_layer_forward(tape, nx, w, b, down, up)).mat();
}

namespace {

// Momentum SGD state for one tape-bound parameter tensor.
struct ParamSlot {
  Eigen::ArrayXd* storage;  // flat view of the live weight buffer
  Eigen::ArrayXd velocity;
};

}  // namespace

PretrainResult pretrain_backbone(const LabeledDataset& data, Index input_dim,
                                 Index dim, const PretrainConfig& cfg) {
  validate_dataset(data, "pretrain_backbone");
  if (cfg.epochs < 0 || cfg.batch <= 0 || cfg.lr < 0.0) {
    throw ConfigError("pretrain_backbone: epochs/batch/lr out of range");
  }
  int classes = 0;
  for (int y : data.labels) {
    if (y < 0) throw ContractError("pretrain_backbone: negative label");
    classes = std::max(classes, y + 1);
  }

  Backbone bb = Backbone::random_init(input_dim, dim,
                                      derive_seed(cfg.seed, 0xb0d7));
  TaskHead head =
      TaskHead::random_init(dim, classes, derive_seed(cfg.seed, 0x6ead));
  if (cfg.epochs == 0) {
    return {bb, head_accuracy(bb, nullptr, head, data)};
  }

  bb.frozen = false;

  // Flat f64 buffers updated in place through maps; order fixes the
  // velocity slot assignment.
  std::vector<std::pair<double*, Index>> blocks = {
      {bb.embed_w.data(), bb.embed_w.size()}, {bb.embed_b.data(), dim},
      {bb.w1.data(), bb.w1.size()},           {bb.b1.data(), dim},
      {bb.w2.data(), bb.w2.size()},           {bb.b2.data(), dim},
      {head.w.data(), head.w.size()},         {head.b.data(), head.b.size()}};
  std::vector<Eigen::ArrayXd> velocity;
  for (const auto& [p, n] : blocks) {
    (void)p;
    velocity.push_back(Eigen::ArrayXd::Zero(n));
  }

  std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, 0x54f1e));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cosine_lr(cfg.lr, epoch, cfg.epochs);
    for (const auto& batch_rows :
         epoch_batches(data.size(), cfg.batch, shuffle_rng)) {
      const LabeledDataset batch = gather_rows(data, batch_rows);
      Tape tape;
      GraphOptions opts;
      opts.train_backbone = true;
      ModelGraph g = build_graph(tape, bb, nullptr, &head, batch.inputs,
                                 &batch.labels, opts);
      const auto grads = tape.backward(g.loss);
      const std::vector<NodeId> order = {g.backbone[0], g.backbone[1],
                                         g.backbone[2], g.backbone[3],
                                         g.backbone[4], g.backbone[5],
                                         g.head_w,      g.head_b};
      for (std::size_t i = 0; i < order.size(); ++i) {
        const Eigen::ArrayXd& grad = grads.flat_at(order[i]);
        velocity[i] = cfg.momentum * velocity[i] + grad;
        Eigen::Map<Eigen::ArrayXd> w(blocks[i].first, blocks[i].second);
        w -= lr * velocity[i];
        if (!w.allFinite()) {
          throw NumericError("pretrain_backbone: non-finite weight at epoch " +
                             std::to_string(epoch));
        }
      }
    }
  }
  bb.frozen = true;
  return {bb, head_accuracy(bb, nullptr, head, data)};
}

double head_accuracy(const Backbone& backbone, const Adapter* adapter,
                     const TaskHead& head, const LabeledDataset& data) {
  validate_dataset(data, "head_accuracy");
  Tape tape;
  ModelGraph g =
      build_graph(tape, backbone, adapter, &head, data.inputs, nullptr);
  const auto logits = tape.value(g.logits).mat();
  Index hits = 0;
  for (Index i = 0; i < logits.rows(); ++i) {
    Index best = 0;
    for (Index j = 1; j < logits.cols(); ++j) {
      if (logits(i, j) > logits(i, best)) best = j;
    }
    if (best == data.labels[static_cast<std::size_t>(i)]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(logits.rows());
}

}  // namespace daf::model
