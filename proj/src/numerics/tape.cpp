#include "daf/numerics/tape.hpp"

#include <cmath>
#include <cstring>
#include <string>
#include <utility>

namespace daf {

namespace {

Eigen::Map<const RowMatrixXd> as_mat(const Tensor& t) { return t.mat(); }

}  // namespace

const Tape::Node& Tape::node(NodeId id) const {
  if (!id.valid() || static_cast<std::size_t>(id.index) >= nodes_.size()) {
    throw ContractError("node id " + std::to_string(id.index) +
                        " is not on this tape");
  }
  return nodes_[static_cast<std::size_t>(id.index)];
}

NodeId Tape::push(Node n) {
  if (n.op != OpKind::kLeaf) {
    n.needs_grad = (n.a.valid() && node(n.a).needs_grad) ||
                   (n.b.valid() && node(n.b).needs_grad);
    n.value = eval_op(n);
  }
  nodes_.push_back(std::move(n));
  return NodeId{static_cast<std::int32_t>(nodes_.size() - 1)};
}

void Tape::check_same_shape(const Tensor& a, const Tensor& b,
                            const char* op) const {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shapes " + shape_string(a.shape()) +
                     " and " + shape_string(b.shape()) + " differ");
  }
}

NodeId Tape::constant(Tensor v) {
  Node n;
  n.value = std::move(v);
  n.needs_grad = false;
  return push(std::move(n));
}

NodeId Tape::param(Tensor v) {
  Node n;
  n.value = std::move(v);
  n.needs_grad = true;
  return push(std::move(n));
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  if (ta.rank() != 2 || tb.rank() != 2 || ta.cols() != tb.rows()) {
    throw ShapeError("matmul: incompatible shapes " +
                     shape_string(ta.shape()) + " and " +
                     shape_string(tb.shape()));
  }
  Node n;
  n.op = OpKind::kMatmul;
  n.a = a;
  n.b = b;
  return push(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) {
  check_same_shape(node(a).value, node(b).value, "add");
  Node n;
  n.op = OpKind::kAdd;
  n.a = a;
  n.b = b;
  return push(std::move(n));
}

NodeId Tape::add_bias(NodeId m, NodeId bias) {
  const Tensor& tm = node(m).value;
  const Tensor& tb = node(bias).value;
  if (tm.rank() != 2 || tb.rank() != 1 || tm.cols() != tb.size()) {
    throw ShapeError("add_bias: shapes " + shape_string(tm.shape()) + " and " +
                     shape_string(tb.shape()) + " are not [n x d] plus [d]");
  }
  Node n;
  n.op = OpKind::kAddBias;
  n.a = m;
  n.b = bias;
  return push(std::move(n));
}

NodeId Tape::sub(NodeId a, NodeId b) {
  check_same_shape(node(a).value, node(b).value, "sub");
  Node n;
  n.op = OpKind::kSub;
  n.a = a;
  n.b = b;
  return push(std::move(n));
}

NodeId Tape::mul(NodeId a, NodeId b) {
  check_same_shape(node(a).value, node(b).value, "mul");
  Node n;
  n.op = OpKind::kMul;
  n.a = a;
  n.b = b;
  return push(std::move(n));
}

NodeId Tape::relu(NodeId a) {
  Node n;
  n.op = OpKind::kRelu;
  n.a = a;
  return push(std::move(n));
}

NodeId Tape::scale(NodeId a, double c) {
  if (!std::isfinite(c)) {
    throw NumericError("scale: factor is non-finite");
  }
  Node n;
  n.op = OpKind::kScale;
  n.a = a;
  n.scalar = c;
  return push(std::move(n));
}

NodeId Tape::sum(NodeId a) {
  Node n;
  n.op = OpKind::kSum;
  n.a = a;
  return push(std::move(n));
}

NodeId Tape::softmax_cross_entropy(NodeId logits, std::vector<int> labels) {
  const Tensor& tl = node(logits).value;
  if (tl.rank() != 2) {
    throw ShapeError("softmax_cross_entropy: logits must be rank 2, got " +
                     shape_string(tl.shape()));
  }
  if (static_cast<Index>(labels.size()) != tl.rows()) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(tl.rows()) + " rows");
  }
  for (int y : labels) {
    if (y < 0 || y >= tl.cols()) {
      throw ContractError("softmax_cross_entropy: label " + std::to_string(y) +
                          " outside [0, " + std::to_string(tl.cols()) + ")");
    }
  }
  Node n;
  n.op = OpKind::kSoftmaxCrossEntropy;
  n.a = logits;
  n.labels = std::move(labels);
  return push(std::move(n));
}

const Tensor& Tape::value(NodeId id) const { return node(id).value; }

Tensor Tape::eval_op(const Node& n) const {
  const Tensor* a = n.a.valid() ? &node(n.a).value : nullptr;
  const Tensor* b = n.b.valid() ? &node(n.b).value : nullptr;
  switch (n.op) {
    case OpKind::kLeaf:
      return n.value;
    case OpKind::kMatmul: {
      RowMatrixXd c = as_mat(*a) * as_mat(*b);
      return Tensor::from_matrix(c);
    }
    case OpKind::kAdd:
      return Tensor(a->shape(), a->data() + b->data());
    case OpKind::kAddBias: {
      RowMatrixXd c = as_mat(*a);
      c.rowwise() += b->data().matrix().transpose();
      return Tensor::from_matrix(c);
    }
    case OpKind::kSub:
      return Tensor(a->shape(), a->data() - b->data());
    case OpKind::kMul:
      return Tensor(a->shape(), a->data() * b->data());
    case OpKind::kRelu:
      return Tensor(a->shape(), a->data().max(0.0));
    case OpKind::kScale:
      return Tensor(a->shape(), a->data() * n.scalar);
    case OpKind::kSum:
      return Tensor::scalar(a->data().sum());
    case OpKind::kSoftmaxCrossEntropy: {
      const auto z = as_mat(*a);
      const Index rows = z.rows();
      double total = 0.0;
      for (Index i = 0; i < rows; ++i) {
        const double m = z.row(i).maxCoeff();
        const double lse = m + std::log((z.row(i).array() - m).exp().sum());
        total += lse - z(i, n.labels[static_cast<std::size_t>(i)]);
      }
      return Tensor::scalar(total / static_cast<double>(rows));
    }
  }
  throw ContractError("eval_op: unknown op kind");
}

Tape::Gradients::Gradients(std::vector<Eigen::ArrayXd> flat, const Tape* tape)
    : flat_(std::move(flat)), tape_(tape) {}

Tensor Tape::Gradients::at(NodeId id) const {
  const Node& n = tape_->node(id);
  return Tensor(n.value.shape(), flat_[static_cast<std::size_t>(id.index)]);
}

const Eigen::ArrayXd& Tape::Gradients::flat_at(NodeId id) const {
  tape_->node(id);  // validates the id
  return flat_[static_cast<std::size_t>(id.index)];
}

Tape::Gradients Tape::backward(NodeId loss) const {
  const Node& ln = node(loss);
  if (!ln.value.is_scalar()) {
    throw ContractError("backward: loss node has shape " +
                        shape_string(ln.value.shape()) + ", expected a scalar");
  }
  std::vector<Eigen::ArrayXd> g(nodes_.size());
  auto ensure = [&](NodeId id) -> Eigen::ArrayXd& {
    auto& slot = g[static_cast<std::size_t>(id.index)];
    if (slot.size() == 0) {
      slot = Eigen::ArrayXd::Zero(node(id).value.size());
    }
    return slot;
  };
  ensure(loss)[0] = 1.0;

  for (std::int32_t i = loss.index; i >= 0; --i) {
    const Node& n = nodes_[static_cast<std::size_t>(i)];
    const auto& gi = g[static_cast<std::size_t>(i)];
    if (gi.size() == 0 || n.op == OpKind::kLeaf) continue;
    const Tensor& va = node(n.a).value;
    const bool into_a = node(n.a).needs_grad;
    const bool into_b = n.b.valid() && node(n.b).needs_grad;
    switch (n.op) {
      case OpKind::kMatmul: {
        Eigen::Map<const RowMatrixXd> gc(gi.data(), node(n.a).value.rows(),
                                         node(n.b).value.cols());
        if (into_a) {
          RowMatrixXd da = gc * as_mat(node(n.b).value).transpose();
          Eigen::Map<const Eigen::ArrayXd> flat(da.data(), da.size());
          ensure(n.a) += flat;
        }
        if (into_b) {
          RowMatrixXd db = as_mat(va).transpose() * gc;
          Eigen::Map<const Eigen::ArrayXd> flat(db.data(), db.size());
          ensure(n.b) += flat;
        }
        break;
      }
      case OpKind::kAdd:
        if (into_a) ensure(n.a) += gi;
        if (into_b) ensure(n.b) += gi;
        break;
      case OpKind::kAddBias: {
        if (into_a) ensure(n.a) += gi;
        if (into_b) {
          Eigen::Map<const RowMatrixXd> gc(gi.data(), va.rows(), va.cols());
          ensure(n.b) += gc.colwise().sum().transpose().array();
        }
        break;
      }
      case OpKind::kSub:
        if (into_a) ensure(n.a) += gi;
        if (into_b) ensure(n.b) -= gi;
        break;
      case OpKind::kMul:
        if (into_a) ensure(n.a) += gi * node(n.b).value.data();
        if (into_b) ensure(n.b) += gi * va.data();
        break;
      case OpKind::kRelu:
        // Subgradient at exactly zero is zero: strict comparison.
        if (into_a) ensure(n.a) += gi * (va.data() > 0.0).cast<double>();
        break;
      case OpKind::kScale:
        if (into_a) ensure(n.a) += gi * n.scalar;
        break;
      case OpKind::kSum:
        if (into_a) ensure(n.a) += gi[0];
        break;
      case OpKind::kSoftmaxCrossEntropy: {
        if (!into_a) break;
        const auto z = as_mat(va);
        const Index rows = z.rows();
        const double u = gi[0] / static_cast<double>(rows);
        RowMatrixXd dz(rows, z.cols());
        for (Index r = 0; r < rows; ++r) {
          const double m = z.row(r).maxCoeff();
          Eigen::ArrayXd e = (z.row(r).array() - m).exp();
          dz.row(r) = (e / e.sum()).matrix().transpose();
          dz(r, n.labels[static_cast<std::size_t>(r)]) -= 1.0;
        }
        Eigen::Map<const Eigen::ArrayXd> flat(dz.data(), dz.size());
        ensure(n.a) += flat * u;
        break;
      }
      case OpKind::kLeaf:
        break;
    }
  }

  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    auto& slot = g[i];
    if (slot.size() == 0) {
      slot = Eigen::ArrayXd::Zero(nodes_[i].value.size());
    } else if (!slot.allFinite()) {
      throw NumericError("backward produced a non-finite gradient at node " +
                         std::to_string(i));
    }
  }
  return Gradients(std::move(g), this);
}

bool Tape::replay_bitwise_equal() const {
  for (const Node& n : nodes_) {
    if (n.op == OpKind::kLeaf) continue;
    Tensor again = eval_op(n);
    if (!bitwise_equal(again, n.value)) return false;
  }
  return true;
}

}  // namespace daf
