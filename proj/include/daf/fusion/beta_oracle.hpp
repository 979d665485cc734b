#pragma once

#include "daf/fusion/fusion.hpp"

// Independent checks for the closed-form coefficient: a brute-force grid
// minimizer of the underlying scalar objective, and a second β
// implementation that goes through the explicit curvature vector instead of
// the single fused expression. Both exist solely to disagree loudly if the
// production formula drifts.
namespace daf::fusion {

// Quadratic model of the task loss around θ_t: first and second derivative
// at the trained parameter (the expansion is exact for quadratics).
struct QuadraticLoss {
  double first_derivative = 0.0;
  double second_derivative = 0.0;
};

// Scalar brute force: evaluate, over an even grid of β ∈ (0, 1), the
// objective  L(θ*) − L(θ_t) + ½·(θ* − θ*_{t−1} + θ_t − θ_p)²  with
// θ*(β) = β·θ_p + β·θ*_{t−1} + (1 − 2β)·θ_t, and return the grid argmin
// (first minimum on ties). Throws ContractError if resolution < 2 or the
// loss inputs are not finite.
[[nodiscard]] double beta_oracle_grid_search(double theta_p,
                                             double theta_prev_star,
                                             double theta_t,
                                             const QuadraticLoss& loss,
                                             Index resolution);

// Two-step reference for compute_beta: build the curvature vector L″ first,
// then β = (D − L′)/(D·(L″ + 1)) per coordinate, with the identical
// fallback and clipping rules. Algebraically equal to compute_beta; any
// elementwise gap beyond rounding indicates a defect in one of the two.
[[nodiscard]] BetaVector compute_beta_reference(
    const ParameterVector& theta_p, const ParameterVector& theta_prev_star,
    const ParameterVector& theta_t, const stats::FusionStatistics& stats,
    const FusionConfig& cfg = {});

}  // namespace daf::fusion
