#pragma once

#include <cstdint>

#include "daf/data.hpp"
#include "daf/model/adapter.hpp"
#include "daf/numerics/tape.hpp"

namespace daf::model {

// Two ReLU hidden layers of width d behind a linear input projection.
// The projection maps raw inputs into the shared width so both hidden
// layers (the adapted ones) see and emit d-dimensional activations.
struct Backbone {
  RowMatrixXd embed_w;  // d_in x d
  Eigen::VectorXd embed_b;
  RowMatrixXd w1;  // d x d
  Eigen::VectorXd b1;
  RowMatrixXd w2;  // d x d
  Eigen::VectorXd b2;
  bool frozen = true;

  [[nodiscard]] Index input_dim() const { return embed_w.rows(); }
  [[nodiscard]] Index dim() const { return embed_w.cols(); }
  [[nodiscard]] AdapterLayout adapter_layout(Index rank) const {
    return AdapterLayout{dim(), rank, 2};
  }
  // FNV-1a over all weight bytes; the frozen-backbone audit compares this
  // before and after a run.
  [[nodiscard]] std::uint64_t content_hash() const;

  static Backbone random_init(Index input_dim, Index dim, std::uint64_t seed);
};

// Linear classification layer trained per task and discarded afterwards.
struct TaskHead {
  RowMatrixXd w;  // d x classes
  Eigen::VectorXd b;

  [[nodiscard]] Index classes() const { return w.cols(); }

  static TaskHead random_init(Index dim, Index classes, std::uint64_t seed);
};

// Node handles into one forward construction. Invalid ids mean the piece
// was not requested (no head, no labels).
struct ModelGraph {
  NodeId input;
  NodeId features;
  NodeId logits;
  NodeId loss;
  std::vector<NodeId> adapter_down;
  std::vector<NodeId> adapter_up;
  std::vector<NodeId> backbone;  // embed_w, embed_b, w1, b1, w2, b2
  NodeId head_w;
  NodeId head_b;
};

struct GraphOptions {
  // Backbone weights enter the tape as detached constants unless this is
  // set (pretraining only); a frozen backbone refuses it.
  bool train_backbone = false;
  double loss_scale = 1.0;
};

// One adapted layer: relu(x W + b) + relu(x W_down) W_up.
NodeId adapter_layer_forward(Tape& tape, NodeId x, NodeId w, NodeId b,
                             NodeId down, NodeId up);

ModelGraph build_graph(Tape& tape, const Backbone& backbone,
                       const Adapter* adapter, const TaskHead* head,
                       const RowMatrixXd& inputs,
                       const std::vector<int>* labels,
                       const GraphOptions& opts = {});

// Eval-only feature extraction (single forward, no backward).
[[nodiscard]] RowMatrixXd features(const Backbone& backbone,
                                   const Adapter* adapter,
                                   const RowMatrixXd& inputs);

// Eq-for-one-layer evaluation used by the adapter unit contracts:
// layer 0 pairs with (w1, b1), layer 1 with (w2, b2); x is already d-wide.
[[nodiscard]] RowMatrixXd adapter_forward(const Backbone& backbone,
                                          Index layer,
                                          const LayerAdapter& adapter,
                                          const RowMatrixXd& x);

struct PretrainConfig {
  int epochs = 20;
  double lr = 0.01;
  Index batch = 48;
  double momentum = 0.9;
  std::uint64_t seed = 0;
};

struct PretrainResult {
  Backbone backbone;
  // Accuracy of the discarded pretrain head on its own training data;
  // recorded in run reports as a regression baseline. Near-chance when
  // epochs = 0 (the frozen-random ablation backbone).
  double train_accuracy = 0.0;
};

// Supervised warm-up on the held-out pretrain classes (labels must be
// 0-based head indices); returns a frozen backbone, head discarded.
[[nodiscard]] PretrainResult pretrain_backbone(const LabeledDataset& data,
                                               Index input_dim, Index dim,
                                               const PretrainConfig& cfg);

// Fraction of samples whose argmax logit matches the label (ties resolve
// to the smaller index).
[[nodiscard]] double head_accuracy(const Backbone& backbone,
                                   const Adapter* adapter,
                                   const TaskHead& head,
                                   const LabeledDataset& data);

}  // namespace daf::model
