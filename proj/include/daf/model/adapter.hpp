#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "daf/common.hpp"

namespace daf::model {

// Shape descriptor shared by every adapter-sized flat vector. Two vectors
// are fusable only if their layouts compare equal.
struct AdapterLayout {
  Index dim = 0;     // feature width d of each adapted layer
  Index rank = 0;    // bottleneck width r
  Index layers = 0;  // number of adapted layers

  [[nodiscard]] Index per_layer() const { return 2 * dim * rank; }
  [[nodiscard]] Index size() const { return layers * per_layer(); }
  [[nodiscard]] Index down_offset(Index layer) const {
    return layer * per_layer();
  }
  [[nodiscard]] Index up_offset(Index layer) const {
    return layer * per_layer() + dim * rank;
  }
  friend bool operator==(const AdapterLayout&, const AdapterLayout&) = default;
};

[[nodiscard]] std::string layout_string(const AdapterLayout& l);

// Flat f64 view of one adapter-shaped quantity (parameters, gradients,
// Fisher diagonals). Segment order per layer: W_down row-major, then W_up
// row-major.
struct ParameterVector {
  AdapterLayout layout;
  Eigen::ArrayXd data;

  ParameterVector() = default;
  ParameterVector(AdapterLayout layout_, Eigen::ArrayXd data_);

  static ParameterVector zeros(const AdapterLayout& layout);
};

// Throws ShapeError naming both layouts when they differ.
void require_same_layout(const ParameterVector& a, const ParameterVector& b,
                         const char* context);

// One bottleneck pair: projects d -> r, rectifies, expands r -> d.
struct LayerAdapter {
  RowMatrixXd down;  // d x r
  RowMatrixXd up;    // r x d
};

struct Adapter {
  AdapterLayout layout;
  std::vector<LayerAdapter> layers;

  static Adapter zero(const AdapterLayout& layout);
  // Task-start state: W_down ~ U(-1/sqrt(d), 1/sqrt(d)), W_up = 0, so the
  // adapter branch starts as an exact no-op.
  static Adapter random_init(const AdapterLayout& layout, std::uint64_t seed);
};

[[nodiscard]] ParameterVector flatten(const Adapter& a);
[[nodiscard]] Adapter unflatten(const ParameterVector& v);

}  // namespace daf::model
