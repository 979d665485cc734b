#include "daf/model/adapter.hpp"

#include <cmath>
#include <cstring>
#include <random>
#include <sstream>

namespace daf::model {

std::string layout_string(const AdapterLayout& l) {
  std::ostringstream os;
  os << "{d=" << l.dim << ", r=" << l.rank << ", layers=" << l.layers << "}";
  return os.str();
}

namespace {

void check_layout(const AdapterLayout& l) {
  if (l.dim <= 0 || l.rank <= 0 || l.layers <= 0) {
    throw ShapeError("adapter layout " + layout_string(l) +
                     " has a non-positive field");
  }
}

}  // namespace

ParameterVector::ParameterVector(AdapterLayout layout_, Eigen::ArrayXd data_)
    : layout(layout_), data(std::move(data_)) {
  check_layout(layout);
  if (data.size() != layout.size()) {
    throw ShapeError("parameter vector of length " +
                     std::to_string(data.size()) + " does not match layout " +
                     layout_string(layout) + " (expected " +
                     std::to_string(layout.size()) + ")");
  }
  if (!data.allFinite()) {
    throw NumericError("parameter vector contains a non-finite entry");
  }
}

ParameterVector ParameterVector::zeros(const AdapterLayout& layout) {
  check_layout(layout);
  return ParameterVector(layout, Eigen::ArrayXd::Zero(layout.size()));
}

void require_same_layout(const ParameterVector& a, const ParameterVector& b,
                         const char* context) {
  if (!(a.layout == b.layout)) {
    throw ShapeError(std::string(context) + ": layouts " +
                     layout_string(a.layout) + " and " +
                     layout_string(b.layout) + " differ");
  }
}

Adapter Adapter::zero(const AdapterLayout& layout) {
  check_layout(layout);
  Adapter a;
  a.layout = layout;
  for (Index l = 0; l < layout.layers; ++l) {
    a.layers.push_back({RowMatrixXd::Zero(layout.dim, layout.rank),
                        RowMatrixXd::Zero(layout.rank, layout.dim)});
  }
  return a;
}

Adapter Adapter::random_init(const AdapterLayout& layout, std::uint64_t seed) {
  Adapter a = zero(layout);
  std::mt19937_64 rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(layout.dim));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& layer : a.layers) {
    for (Index i = 0; i < layer.down.rows(); ++i) {
      for (Index j = 0; j < layer.down.cols(); ++j) {
        layer.down(i, j) = dist(rng);
      }
    }
  }
  return a;
}

ParameterVector flatten(const Adapter& a) {
  check_layout(a.layout);
  if (static_cast<Index>(a.layers.size()) != a.layout.layers) {
    throw ShapeError("adapter holds " + std::to_string(a.layers.size()) +
                     " layers, layout says " + std::to_string(a.layout.layers));
  }
  Eigen::ArrayXd flat(a.layout.size());
  for (Index l = 0; l < a.layout.layers; ++l) {
    const auto& layer = a.layers[static_cast<std::size_t>(l)];
    if (layer.down.rows() != a.layout.dim ||
        layer.down.cols() != a.layout.rank ||
        layer.up.rows() != a.layout.rank ||
        layer.up.cols() != a.layout.dim) {
      throw ShapeError("adapter layer " + std::to_string(l) +
                       " does not match layout " + layout_string(a.layout));
    }
    std::memcpy(flat.data() + a.layout.down_offset(l), layer.down.data(),
                sizeof(double) * layer.down.size());
    std::memcpy(flat.data() + a.layout.up_offset(l), layer.up.data(),
                sizeof(double) * layer.up.size());
  }
  return ParameterVector(a.layout, std::move(flat));
}

Adapter unflatten(const ParameterVector& v) {
  Adapter a = Adapter::zero(v.layout);
  for (Index l = 0; l < v.layout.layers; ++l) {
    auto& layer = a.layers[static_cast<std::size_t>(l)];
    std::memcpy(layer.down.data(), v.data.data() + v.layout.down_offset(l),
                sizeof(double) * layer.down.size());
    std::memcpy(layer.up.data(), v.data.data() + v.layout.up_offset(l),
                sizeof(double) * layer.up.size());
  }
  return a;
}

}  // namespace daf::model
