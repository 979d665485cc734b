#include "daf/numerics/tensor.hpp"

#include <cstdio>
#include <cstring>
#include <sstream>

namespace daf {

std::string shape_string(std::span<const Index> shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != 0) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

Index checked_numel(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) {
    if (d <= 0) {
      throw ShapeError("tensor shape " + shape_string(shape) +
                       " has a non-positive dimension");
    }
    n *= d;
  }
  return n;
}

}  // namespace

Tensor::Tensor(Shape shape, Eigen::ArrayXd data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  const Index n = checked_numel(shape_);
  if (n != data_.size()) {
    throw ShapeError("tensor shape " + shape_string(shape_) + " expects " +
                     std::to_string(n) + " entries, got " +
                     std::to_string(data_.size()));
  }
  if (!data_.allFinite()) {
    throw NumericError("tensor of shape " + shape_string(shape_) +
                       " contains a non-finite entry");
  }
}

Tensor Tensor::zeros(Shape shape) {
  const Index n = checked_numel(shape);
  return Tensor(std::move(shape), Eigen::ArrayXd::Zero(n));
}

Tensor Tensor::scalar(double v) {
  return Tensor(Shape{1}, Eigen::ArrayXd::Constant(1, v));
}

Tensor Tensor::from_matrix(const RowMatrixXd& m) {
  Eigen::ArrayXd flat(m.size());
  std::memcpy(flat.data(), m.data(), sizeof(double) * m.size());
  return Tensor(Shape{m.rows(), m.cols()}, std::move(flat));
}

Tensor Tensor::from_vector(const Eigen::ArrayXd& v) {
  return Tensor(Shape{v.size()}, v);
}

Tensor Tensor::full(Shape shape, double v) {
  const Index n = checked_numel(shape);
  return Tensor(std::move(shape), Eigen::ArrayXd::Constant(n, v));
}

double Tensor::scalar_value() const {
  if (!is_scalar()) {
    throw ShapeError("expected a scalar tensor, got shape " +
                     shape_string(shape_));
  }
  return data_[0];
}

Index Tensor::rows() const {
  if (rank() != 2) {
    throw ShapeError("rows() requires rank 2, got shape " +
                     shape_string(shape_));
  }
  return shape_[0];
}

Index Tensor::cols() const {
  if (rank() != 2) {
    throw ShapeError("cols() requires rank 2, got shape " +
                     shape_string(shape_));
  }
  return shape_[1];
}

Eigen::Map<const RowMatrixXd> Tensor::mat() const {
  if (rank() != 2) {
    throw ShapeError("matrix view requires rank 2, got shape " +
                     shape_string(shape_));
  }
  return {data_.data(), shape_[0], shape_[1]};
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) return false;
  return std::memcmp(a.data().data(), b.data().data(),
                     sizeof(double) * a.size()) == 0;
}

}  // namespace daf
