#pragma once

#include "daf/model/adapter.hpp"
#include "daf/stats/fusion_stats.hpp"

// Closed-form fusion of per-task adapters into a single global adapter.
// Given the prior vector θ_p, the previous global adapter θ*_{t−1}, and the
// freshly trained task adapter θ_t, an element-wise coefficient vector β is
// computed from first/second-order loss statistics and the three vectors are
// blended as θ*_t = β·θ_p + β·θ*_{t−1} + (1 − 2β)·θ_t.
namespace daf::fusion {

using model::ParameterVector;

struct FusionConfig {
  double alpha = 1.25;          // spread of the scaled curvature above 1
  double gamma = 0.5;           // prior-vs-previous balance in fuse_gamma
  double clip_lo = 0.001;       // lower clip bound for β
  double clip_hi = 0.499;       // upper clip bound for β
  double denom_epsilon = 1e-12; // |D| below this falls back to 1/(L″+1)
};

// Throws ConfigError unless alpha > 0, gamma ∈ [0,1],
// 0 < clip_lo < clip_hi < 0.5, and denom_epsilon > 0.
void validate_fusion_config(const FusionConfig& cfg);

// Per-task accounting of how β was produced; emitted in run reports.
struct BetaDiagnostics {
  double beta_min = 0.0;   // post-clip extremes and mean
  double beta_mean = 0.0;
  double beta_max = 0.0;
  Index clipped_low = 0;   // coordinates raised to clip_lo
  Index clipped_high = 0;  // coordinates lowered to clip_hi
  Index denominator_fallbacks = 0;  // coordinates with |D| < denom_epsilon
  bool degenerate_fisher = false;   // f_mean == f_min: constant curvature
};

struct BetaVector {
  ParameterVector values;  // every entry ∈ [clip_lo, clip_hi]
  BetaDiagnostics diagnostics;
};

// The state retained between tasks: the global adapter and the running
// average of past task adapters. Nothing else survives a task boundary.
struct GlobalState {
  ParameterVector theta_star;
  ParameterVector theta_avg;
  Index task_index = 0;

  static GlobalState initialize(const ParameterVector& theta_init);

  // One task boundary: adopt the fused adapter, fold θ_t into the running
  // average, and advance the task counter — in that order, atomically.
  void advance(const ParameterVector& fused, const ParameterVector& theta_t);
};

// Element-wise curvature proxy L″ = α·(F − f_min)/(f_mean − f_min) + 1,
// mapping the Fisher diagonal onto [1, 1 + α]. A degenerate Fisher
// (f_mean == f_min) yields the constant midpoint 1 + α/2.
[[nodiscard]] Eigen::ArrayXd scaled_curvature(const Eigen::ArrayXd& fisher,
                                              double f_min, double f_mean,
                                              double alpha);

// Element-wise closed form
//   β = (f_mean − f_min)·(D − L′) / (D·[α·F − α·f_min + 2·f_mean − 2·f_min])
// with D = θ_p + θ*_{t−1} − 2·θ_t, then clipped to [clip_lo, clip_hi].
// Coordinates with |D| < denom_epsilon use the approximation 1/(L″ + 1);
// a degenerate Fisher routes through the constant-curvature form.
[[nodiscard]] BetaVector compute_beta(const ParameterVector& theta_p,
                                      const ParameterVector& theta_prev_star,
                                      const ParameterVector& theta_t,
                                      const stats::FusionStatistics& stats,
                                      const FusionConfig& cfg = {});

// The closed form before the stability window is applied: entries may be
// negative or exceed 0.5 when the gradient term dominates D. Diagnostics
// carry the raw extremes and zero clip counts.
[[nodiscard]] BetaVector compute_beta_unclipped(
    const ParameterVector& theta_p, const ParameterVector& theta_prev_star,
    const ParameterVector& theta_t, const stats::FusionStatistics& stats,
    const FusionConfig& cfg = {});

// The clamp stage of compute_beta, factored out so audits can drive it with
// windows the config contract refuses: clamps every entry into [lo, hi],
// counts strictly-outside coordinates on top of the incoming diagnostics,
// and refreshes the summary fields. Throws ContractError unless the window
// is finite with lo < hi.
[[nodiscard]] BetaVector clip_beta(const BetaVector& raw, double lo,
                                   double hi);

// θ*_t = β·θ_p + β·θ*_{t−1} + (1 − 2β)·θ_t, computed in residual form
// θ_t + β·(θ_p − θ_t) + β·(θ*_{t−1} − θ_t) so that equal inputs pass
// through bit-exactly and β = 0 returns θ_t unchanged.
[[nodiscard]] ParameterVector fuse(const ParameterVector& theta_p,
                                   const ParameterVector& theta_prev_star,
                                   const ParameterVector& theta_t,
                                   const ParameterVector& beta);
[[nodiscard]] ParameterVector fuse(const ParameterVector& theta_p,
                                   const ParameterVector& theta_prev_star,
                                   const ParameterVector& theta_t,
                                   const BetaVector& beta);

// Asymmetric variant θ*_t = 2γβ·θ_p + 2(1−γ)β·θ*_{t−1} + (1 − 2β)·θ_t.
// gamma = 0.5 reproduces fuse bitwise. Throws ConfigError off [0, 1].
[[nodiscard]] ParameterVector fuse_gamma(const ParameterVector& theta_p,
                                         const ParameterVector& theta_prev_star,
                                         const ParameterVector& theta_t,
                                         const ParameterVector& beta,
                                         double gamma);
[[nodiscard]] ParameterVector fuse_gamma(const ParameterVector& theta_p,
                                         const ParameterVector& theta_prev_star,
                                         const ParameterVector& theta_t,
                                         const BetaVector& beta, double gamma);

// θ_avg^t = ((t−1)/t)·θ_avg^{t−1} + (1/t)·θ_t for t ≥ 1; recursively equal
// to the arithmetic mean of θ_1..θ_t. Throws ContractError for t < 1.
[[nodiscard]] ParameterVector update_running_average(
    const ParameterVector& theta_avg_prev, const ParameterVector& theta_t,
    Index t);

// Stability-constraint residual max |Δθ + θ*_{t−1} + θ_p − θ_t − θ*_t|,
// where Δθ = (β − 1)·(θ_p + θ*_{t−1} − 2·θ_t) is reconstructed from β
// independently of θ*_t, so a perturbed fused vector is detected.
[[nodiscard]] double verify_constraint(const ParameterVector& theta_p,
                                       const ParameterVector& theta_prev_star,
                                       const ParameterVector& theta_t,
                                       const ParameterVector& theta_star,
                                       const ParameterVector& beta);

// Residual of the pullback identity θ*_t − θ_t = (β/(β−1))·Δθ with θ*_t
// from fuse and Δθ = θ*_t − θ*_{t−1} + θ_t − θ_p taken by definition.
[[nodiscard]] double verify_delta_relation(
    const ParameterVector& theta_p, const ParameterVector& theta_prev_star,
    const ParameterVector& theta_t, const ParameterVector& beta);

}  // namespace daf::fusion
