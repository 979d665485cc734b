#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "daf/common.hpp"

// Prototype-based unified classifier. Each class is represented by the
// unit-normalized centroid of its features; old classes additionally store
// a diagonal Gaussian of their feature distribution so their prototypes can
// be re-estimated from synthetic samples after the feature extractor moves.
namespace daf::classifier {

struct ClassPrototype {
  int class_id = 0;
  Eigen::VectorXd w;  // unit L2 norm
};

struct ClassGaussian {
  int class_id = 0;
  Eigen::VectorXd mu;
  Eigen::VectorXd var;  // per-dimension, floored at variance_floor
};

using PrototypeStore = std::map<int, ClassPrototype>;
using GaussianStore = std::map<int, ClassGaussian>;

inline constexpr double kDefaultVarianceFloor = 1e-6;
inline constexpr Index kDefaultSamplesPerClass = 256;

// Unit norm within 1e-10, finite entries, nonnegative id. ContractError.
void validate_prototype(const ClassPrototype& p, const std::string& context);
// Sizes match, entries finite, var >= floor everywhere. ContractError.
void validate_class_gaussian(const ClassGaussian& g, double variance_floor,
                             const std::string& context);

// L2-normalized mean of the feature rows. Throws ContractError on an empty
// matrix and NumericError when the centroid is zero (nothing to normalize).
[[nodiscard]] ClassPrototype compute_prototype(int class_id,
                                               const RowMatrixXd& features);

// Per-dimension sample mean and unbiased (n-1) variance, floored at
// variance_floor. A single feature yields the floor everywhere. Throws
// ContractError on empty input, ConfigError on a nonpositive floor.
[[nodiscard]] ClassGaussian fit_gaussian(
    int class_id, const RowMatrixXd& features,
    double variance_floor = kDefaultVarianceFloor);

// `count` rows drawn from N(mu, diag(var)); deterministic in `seed`.
[[nodiscard]] RowMatrixXd sample_features(const ClassGaussian& g, Index count,
                                          std::uint64_t seed);

// Re-estimate every stored class's prototype from `samples_per_class`
// synthetic feature draws. Each class uses a seed derived from (seed,
// class id), so the result for one class is independent of which other
// classes are present. Throws ConfigError if samples_per_class < 1.
[[nodiscard]] PrototypeStore align_old_prototypes(
    const GaussianStore& gaussians, Index samples_per_class,
    std::uint64_t seed);

// Argmax over classes of cosine similarity between the feature and each
// prototype; exact ties go to the smallest class id. Throws ContractError
// on an empty store, NumericError on a zero feature, ShapeError on a
// dimension mismatch.
[[nodiscard]] int classify(const Eigen::VectorXd& feature,
                           const PrototypeStore& prototypes);

}  // namespace daf::classifier
