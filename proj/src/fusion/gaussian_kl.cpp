#include "daf/fusion/gaussian_kl.hpp"

#include <cmath>

namespace daf::fusion {

void validate_gaussian(const DiagonalGaussian& g, const std::string& context) {
  if (g.mean.size() == 0) {
    throw ContractError(context + ": empty Gaussian record");
  }
  if (g.mean.size() != g.variance.size()) {
    throw ContractError(context + ": mean has " +
                        std::to_string(g.mean.size()) +
                        " coordinates but variance has " +
                        std::to_string(g.variance.size()));
  }
  if (!g.mean.allFinite() || !g.variance.allFinite()) {
    throw ContractError(context + ": non-finite Gaussian parameter");
  }
  if ((g.variance <= 0.0).any()) {
    throw ContractError(context + ": nonpositive variance");
  }
}

double kl_divergence(const DiagonalGaussian& p, const DiagonalGaussian& q) {
  validate_gaussian(p, "kl divergence lhs");
  validate_gaussian(q, "kl divergence rhs");
  if (p.mean.size() != q.mean.size()) {
    throw ShapeError("kl divergence: dimension mismatch, " +
                     std::to_string(p.mean.size()) + " vs " +
                     std::to_string(q.mean.size()));
  }
  const Eigen::ArrayXd ratio = p.variance / q.variance;
  const Eigen::ArrayXd shift = (p.mean - q.mean).square() / q.variance;
  return 0.5 * ((q.variance / p.variance).log() + ratio + shift - 1.0).sum();
}

namespace {

DiagonalGaussian concatenate(const DiagonalGaussian& a,
                             const DiagonalGaussian& b) {
  DiagonalGaussian out;
  out.mean.resize(a.mean.size() + b.mean.size());
  out.variance.resize(out.mean.size());
  out.mean << a.mean, b.mean;
  out.variance << a.variance, b.variance;
  return out;
}

}  // namespace

double kl_additivity_check(const DiagonalGaussian& q_s,
                           const DiagonalGaussian& p_init,
                           const DiagonalGaussian& q_g,
                           const DiagonalGaussian& q_g_prev) {
  const double joint =
      kl_divergence(concatenate(q_s, q_g), concatenate(p_init, q_g_prev));
  const double parts =
      kl_divergence(q_s, p_init) + kl_divergence(q_g, q_g_prev);
  return std::abs(joint - parts);
}

}  // namespace daf::fusion
