#pragma once

#include <cstdint>
#include <vector>

#include "daf/numerics/tensor.hpp"

namespace daf {

struct NodeId {
  std::int32_t index = -1;
  [[nodiscard]] bool valid() const { return index >= 0; }
  friend bool operator==(NodeId a, NodeId b) { return a.index == b.index; }
};

enum class OpKind : std::uint8_t {
  kLeaf,
  kMatmul,
  kAdd,      // same-shape elementwise
  kAddBias,  // [n x d] plus [d], broadcast over rows
  kSub,
  kMul,  // elementwise
  kRelu,
  kScale,  // multiply by a fixed scalar
  kSum,    // reduce to scalar
  kSoftmaxCrossEntropy,  // mean NLL over rows, reduces to scalar
};

// Reverse-mode autodiff over a linear record of primitive operations.
// Construction order is the topological order: every operand id precedes its
// consumer, so backward is a single reverse sweep with no graph search.
class Tape {
 public:
  struct Node {
    OpKind op = OpKind::kLeaf;
    NodeId a;
    NodeId b;
    Tensor value;
    bool needs_grad = false;      // param leaf, or any input needs one
    double scalar = 0.0;          // kScale payload
    std::vector<int> labels;      // kSoftmaxCrossEntropy payload
  };

  // Leaves. Constants are detached: backward never accumulates into them and
  // nothing reached only through constants is visited.
  NodeId constant(Tensor v);
  NodeId param(Tensor v);

  NodeId matmul(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);
  NodeId add_bias(NodeId m, NodeId bias);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId relu(NodeId a);
  NodeId scale(NodeId a, double c);
  NodeId sum(NodeId a);
  NodeId softmax_cross_entropy(NodeId logits, std::vector<int> labels);

  [[nodiscard]] const Tensor& value(NodeId id) const;
  [[nodiscard]] std::size_t size() const { return nodes_.size(); }

  // Adjoints of a scalar loss for every node; nodes that do not reach the
  // loss (or are detached constants) read back as zero. A Gradients object
  // is a map node id -> tensor, realized as a dense per-node table.
  class Gradients {
   public:
    Gradients(std::vector<Eigen::ArrayXd> flat, const Tape* tape);
    [[nodiscard]] Tensor at(NodeId id) const;
    [[nodiscard]] const Eigen::ArrayXd& flat_at(NodeId id) const;

   private:
    std::vector<Eigen::ArrayXd> flat_;
    const Tape* tape_;
  };

  [[nodiscard]] Gradients backward(NodeId loss) const;

  // Recomputes every interior value from the leaves and compares bitwise
  // with the recorded values.
  [[nodiscard]] bool replay_bitwise_equal() const;

 private:
  const Node& node(NodeId id) const;
  NodeId push(Node n);
  [[nodiscard]] Tensor eval_op(const Node& n) const;
  void check_same_shape(const Tensor& a, const Tensor& b,
                        const char* op) const;

  std::vector<Node> nodes_;
};

}  // namespace daf
