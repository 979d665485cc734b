#pragma once

#include <string>

#include "daf/common.hpp"

// Closed-form KL divergence between diagonal Gaussians, and the additivity
// check that justifies fusing coordinates independently: the KL between
// product distributions equals the sum of the factor KLs.
namespace daf::fusion {

struct DiagonalGaussian {
  Eigen::ArrayXd mean;
  Eigen::ArrayXd variance;
};

// Throws ContractError if mean/variance sizes differ, the record is empty,
// any variance is nonpositive, or any entry is not finite.
void validate_gaussian(const DiagonalGaussian& g, const std::string& context);

// KL(p ‖ q) = ½·Σ_i [ log(σq²/σp²) + σp²/σq² + (μp − μq)²/σq² − 1 ].
// Throws ShapeError if p and q have different dimension.
[[nodiscard]] double kl_divergence(const DiagonalGaussian& p,
                                   const DiagonalGaussian& q);

// | KL(q_s ⊗ q_g ‖ p_init ⊗ q_g_prev) − KL(q_s ‖ p_init) − KL(q_g ‖ q_g_prev) |
// with the joint KL evaluated over the concatenated coordinates. Zero up to
// floating-point reassociation for every valid input.
[[nodiscard]] double kl_additivity_check(const DiagonalGaussian& q_s,
                                         const DiagonalGaussian& p_init,
                                         const DiagonalGaussian& q_g,
                                         const DiagonalGaussian& q_g_prev);

}  // namespace daf::fusion
