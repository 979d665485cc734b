#include "daf/classifier/prototype.hpp"

#include <cmath>
#include <random>

namespace daf::classifier {

namespace {
constexpr std::uint64_t kAlignSalt = 0xa119;
}

void validate_prototype(const ClassPrototype& p, const std::string& context) {
  if (p.class_id < 0) {
    throw ContractError(context + ": negative class id " +
                        std::to_string(p.class_id));
  }
  if (p.w.size() == 0) {
    throw ContractError(context + ": empty prototype for class " +
                        std::to_string(p.class_id));
  }
  if (!p.w.allFinite()) {
    throw ContractError(context + ": non-finite prototype for class " +
                        std::to_string(p.class_id));
  }
  const double norm = p.w.norm();
  if (std::abs(norm - 1.0) > 1e-10) {
    throw ContractError(context + ": prototype for class " +
                        std::to_string(p.class_id) + " has norm " +
                        format_double(norm) + ", expected 1");
  }
}

void validate_class_gaussian(const ClassGaussian& g, double variance_floor,
                             const std::string& context) {
  if (g.class_id < 0) {
    throw ContractError(context + ": negative class id " +
                        std::to_string(g.class_id));
  }
  if (g.mu.size() == 0 || g.mu.size() != g.var.size()) {
    throw ContractError(context + ": class " + std::to_string(g.class_id) +
                        " has mean size " + std::to_string(g.mu.size()) +
                        " and variance size " + std::to_string(g.var.size()));
  }
  if (!g.mu.allFinite() || !g.var.allFinite()) {
    throw ContractError(context + ": non-finite Gaussian for class " +
                        std::to_string(g.class_id));
  }
  if ((g.var.array() < variance_floor).any()) {
    throw ContractError(context + ": class " + std::to_string(g.class_id) +
                        " has variance below the floor " +
                        format_double(variance_floor));
  }
}

ClassPrototype compute_prototype(int class_id, const RowMatrixXd& features) {
  if (features.rows() == 0 || features.cols() == 0) {
    throw ContractError("prototype: no features for class " +
                        std::to_string(class_id));
  }
  Eigen::VectorXd mean = features.colwise().mean().transpose();
  const double norm = mean.norm();
  if (!(norm > 0.0)) {
    throw NumericError("prototype: class " + std::to_string(class_id) +
                       " has an all-zero centroid, cannot normalize");
  }
  ClassPrototype p;
  p.class_id = class_id;
  p.w = mean / norm;
  if (!p.w.allFinite()) {
    throw NumericError("prototype: normalization overflowed for class " +
                       std::to_string(class_id));
  }
  return p;
}

ClassGaussian fit_gaussian(int class_id, const RowMatrixXd& features,
                           double variance_floor) {
  if (!(variance_floor > 0.0)) {
    throw ConfigError("gaussian fit: variance floor must be positive, got " +
                      format_double(variance_floor));
  }
  if (features.rows() == 0 || features.cols() == 0) {
    throw ContractError("gaussian fit: no features for class " +
                        std::to_string(class_id));
  }
  const Index n = features.rows();
  ClassGaussian g;
  g.class_id = class_id;
  g.mu = features.colwise().mean().transpose();
  if (n < 2) {
    g.var = Eigen::VectorXd::Constant(features.cols(), variance_floor);
    return g;
  }
  const RowMatrixXd centered = features.rowwise() - g.mu.transpose();
  Eigen::VectorXd var = (centered.array().square().colwise().sum() /
                         static_cast<double>(n - 1))
                            .transpose()
                            .matrix();
  g.var = var.array().max(variance_floor).matrix();
  return g;
}

RowMatrixXd sample_features(const ClassGaussian& g, Index count,
                            std::uint64_t seed) {
  if (count < 1) {
    throw ConfigError("feature sampling: sample count must be >= 1, got " +
                      std::to_string(count));
  }
  validate_class_gaussian(g, 0.0, "feature sampling");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  const Eigen::ArrayXd sigma = g.var.array().sqrt();
  RowMatrixXd out(count, g.mu.size());
  for (Index i = 0; i < count; ++i) {
    for (Index j = 0; j < g.mu.size(); ++j) {
      out(i, j) = g.mu[j] + sigma[j] * unit(rng);
    }
  }
  return out;
}

PrototypeStore align_old_prototypes(const GaussianStore& gaussians,
                                    Index samples_per_class,
                                    std::uint64_t seed) {
  if (samples_per_class < 1) {
    throw ConfigError("prototype alignment: samples_per_class must be >= 1,"
                      " got " +
                      std::to_string(samples_per_class));
  }
  PrototypeStore out;
  for (const auto& [class_id, gaussian] : gaussians) {
    if (class_id != gaussian.class_id) {
      throw ContractError("prototype alignment: store key " +
                          std::to_string(class_id) +
                          " disagrees with record id " +
                          std::to_string(gaussian.class_id));
    }
    const std::uint64_t class_seed =
        derive_seed(seed, kAlignSalt, static_cast<std::uint64_t>(class_id));
    const RowMatrixXd pseudo =
        sample_features(gaussian, samples_per_class, class_seed);
    out.emplace(class_id, compute_prototype(class_id, pseudo));
  }
  return out;
}

int classify(const Eigen::VectorXd& feature, const PrototypeStore& prototypes) {
  if (prototypes.empty()) {
    throw ContractError("classify: empty prototype store");
  }
  const double norm = feature.norm();
  if (!(norm > 0.0)) {
    throw NumericError("classify: zero feature vector");
  }
  const Eigen::VectorXd unit = feature / norm;
  bool first = true;
  int best_class = 0;
  double best_score = 0.0;
  for (const auto& [class_id, prototype] : prototypes) {
    if (prototype.w.size() != unit.size()) {
      throw ShapeError("classify: feature has " + std::to_string(unit.size()) +
                       " dimensions but class " + std::to_string(class_id) +
                       " prototype has " + std::to_string(prototype.w.size()));
    }
    const double score = prototype.w.dot(unit);
    if (first || score > best_score) {
      first = false;
      best_class = class_id;
      best_score = score;
    }
  }
  return best_class;
}

}  // namespace daf::classifier
