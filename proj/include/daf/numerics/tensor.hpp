#pragma once

#include <Eigen/Core>

#include <initializer_list>
#include <vector>

#include "daf/common.hpp"

namespace daf {

using Shape = std::vector<Index>;

// Dense f64 value with explicit shape and contiguous row-major storage.
// Invariants: every dimension is positive, storage length equals the shape
// product, and all entries are finite after any public operation (enforced
// in the constructors, the single chokepoint every operation funnels through).
class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, Eigen::ArrayXd data);

  static Tensor zeros(Shape shape);
  static Tensor scalar(double v);
  static Tensor from_matrix(const RowMatrixXd& m);
  static Tensor from_vector(const Eigen::ArrayXd& v);
  static Tensor full(Shape shape, double v);

  [[nodiscard]] const Shape& shape() const { return shape_; }
  [[nodiscard]] Index rank() const { return static_cast<Index>(shape_.size()); }
  [[nodiscard]] Index size() const { return data_.size(); }
  [[nodiscard]] const Eigen::ArrayXd& data() const { return data_; }
  [[nodiscard]] Eigen::ArrayXd& data() { return data_; }

  [[nodiscard]] bool is_scalar() const { return data_.size() == 1; }
  [[nodiscard]] double scalar_value() const;

  [[nodiscard]] Index rows() const;
  [[nodiscard]] Index cols() const;

  // Rank-2 view over the flat storage; throws ShapeError for other ranks.
  [[nodiscard]] Eigen::Map<const RowMatrixXd> mat() const;

  [[nodiscard]] bool same_shape(const Tensor& other) const {
    return shape_ == other.shape_;
  }

 private:
  Shape shape_;
  Eigen::ArrayXd data_;
};

[[nodiscard]] bool bitwise_equal(const Tensor& a, const Tensor& b);

}  // namespace daf
