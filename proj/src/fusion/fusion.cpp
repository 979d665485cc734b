#include "daf/fusion/fusion.hpp"

#include <cmath>
#include <string>

#include "daf/fusion/beta_oracle.hpp"

namespace daf::fusion {

using model::require_same_layout;

void validate_fusion_config(const FusionConfig& cfg) {
  if (!(cfg.alpha > 0.0)) {
    throw ConfigError("fusion config: alpha must be positive, got " +
                      format_double(cfg.alpha));
  }
  if (!(cfg.gamma >= 0.0 && cfg.gamma <= 1.0)) {
    throw ConfigError("fusion config: gamma must lie in [0, 1], got " +
                      format_double(cfg.gamma));
  }
  if (!(cfg.clip_lo > 0.0 && cfg.clip_lo < cfg.clip_hi &&
        cfg.clip_hi < 0.5)) {
    throw ConfigError("fusion config: clip range must satisfy 0 < lo < hi"
                      " < 0.5, got [" +
                      format_double(cfg.clip_lo) + ", " +
                      format_double(cfg.clip_hi) + "]");
  }
  if (!(cfg.denom_epsilon > 0.0)) {
    throw ConfigError(
        "fusion config: denominator epsilon must be positive, got " +
        format_double(cfg.denom_epsilon));
  }
}

GlobalState GlobalState::initialize(const ParameterVector& theta_init) {
  GlobalState state;
  state.theta_star = theta_init;
  state.theta_avg = theta_init;
  state.task_index = 0;
  return state;
}

void GlobalState::advance(const ParameterVector& fused,
                          const ParameterVector& theta_t) {
  require_same_layout(theta_star, fused, "global state advance");
  require_same_layout(theta_star, theta_t, "global state advance");
  theta_star = fused;
  theta_avg = update_running_average(theta_avg, theta_t, task_index + 1);
  ++task_index;
}

Eigen::ArrayXd scaled_curvature(const Eigen::ArrayXd& fisher, double f_min,
                                double f_mean, double alpha) {
  if (!(alpha > 0.0)) {
    throw ConfigError("scaled curvature: alpha must be positive, got " +
                      format_double(alpha));
  }
  if (fisher.size() == 0) {
    throw ContractError("scaled curvature: empty Fisher vector");
  }
  if (f_mean < f_min) {
    throw ContractError("scaled curvature: f_mean " + format_double(f_mean) +
                        " below f_min " + format_double(f_min));
  }
  if (f_mean == f_min) {
    return Eigen::ArrayXd::Constant(fisher.size(), 1.0 + alpha / 2.0);
  }
  return 1.0 + alpha * (fisher - f_min) / (f_mean - f_min);
}

namespace {

// Shared skeleton for the production and reference β computations: the two
// differ only in the non-degenerate per-coordinate formula, injected here.
// Produces raw (unclipped) coefficients; clip_beta applies the window.
template <typename CoordinateFormula>
BetaVector compute_beta_impl(const ParameterVector& theta_p,
                             const ParameterVector& theta_prev_star,
                             const ParameterVector& theta_t,
                             const stats::FusionStatistics& mstats,
                             const FusionConfig& cfg,
                             CoordinateFormula&& formula) {
  validate_fusion_config(cfg);
  require_same_layout(theta_p, theta_prev_star, "beta computation");
  require_same_layout(theta_p, theta_t, "beta computation");
  require_same_layout(theta_p, mstats.grad, "beta computation");
  stats::validate_statistics(mstats);

  const Eigen::ArrayXd d =
      theta_p.data + theta_prev_star.data - 2.0 * theta_t.data;
  const bool degenerate = mstats.f_mean == mstats.f_min;
  const Eigen::ArrayXd curvature = scaled_curvature(
      mstats.fisher.data, mstats.f_min, mstats.f_mean, cfg.alpha);

  BetaDiagnostics diag;
  diag.degenerate_fisher = degenerate;
  Eigen::ArrayXd beta(d.size());
  for (Index i = 0; i < d.size(); ++i) {
    double value;
    if (std::abs(d[i]) < cfg.denom_epsilon) {
      value = 1.0 / (curvature[i] + 1.0);
      ++diag.denominator_fallbacks;
    } else if (degenerate) {
      // The spread-scaled form is 0/0 here; the constant-curvature
      // closed form stays well defined.
      value = (d[i] - mstats.grad.data[i]) / (d[i] * (curvature[i] + 1.0));
    } else {
      value = formula(d[i], mstats.grad.data[i], mstats.fisher.data[i],
                      curvature[i]);
    }
    if (!std::isfinite(value)) {
      throw NumericError("beta computation: non-finite coefficient at"
                         " coordinate " +
                         std::to_string(i));
    }
    beta[i] = value;
  }

  const auto [lo, mean] = stats::summarize(beta);
  diag.beta_min = lo;
  diag.beta_mean = mean;
  diag.beta_max = beta.maxCoeff();
  return BetaVector{ParameterVector(theta_p.layout, std::move(beta)), diag};
}

}  // namespace

BetaVector compute_beta_unclipped(const ParameterVector& theta_p,
                                  const ParameterVector& theta_prev_star,
                                  const ParameterVector& theta_t,
                                  const stats::FusionStatistics& stats,
                                  const FusionConfig& cfg) {
  const double spread = stats.f_mean - stats.f_min;
  const double alpha = cfg.alpha;
  const double f_min = stats.f_min;
  return compute_beta_impl(
      theta_p, theta_prev_star, theta_t, stats, cfg,
      [spread, alpha, f_min](double d, double grad, double fisher,
                             double /*curvature*/) {
        return spread * (d - grad) /
               (d * (alpha * fisher - alpha * f_min + 2.0 * spread));
      });
}

BetaVector clip_beta(const BetaVector& raw, double lo, double hi) {
  if (!(std::isfinite(lo) && std::isfinite(hi) && lo < hi)) {
    throw ContractError("beta clip: window must be finite with lo < hi,"
                        " got [" +
                        format_double(lo) + ", " + format_double(hi) + "]");
  }
  BetaVector out = raw;
  for (Index i = 0; i < out.values.data.size(); ++i) {
    double& value = out.values.data[i];
    if (value < lo) {
      value = lo;
      ++out.diagnostics.clipped_low;
    } else if (value > hi) {
      value = hi;
      ++out.diagnostics.clipped_high;
    }
  }
  const auto [min_beta, mean_beta] = stats::summarize(out.values.data);
  out.diagnostics.beta_min = min_beta;
  out.diagnostics.beta_mean = mean_beta;
  out.diagnostics.beta_max = out.values.data.maxCoeff();
  return out;
}

BetaVector compute_beta(const ParameterVector& theta_p,
                        const ParameterVector& theta_prev_star,
                        const ParameterVector& theta_t,
                        const stats::FusionStatistics& stats,
                        const FusionConfig& cfg) {
  return clip_beta(
      compute_beta_unclipped(theta_p, theta_prev_star, theta_t, stats, cfg),
      cfg.clip_lo, cfg.clip_hi);
}

BetaVector compute_beta_reference(const ParameterVector& theta_p,
                                  const ParameterVector& theta_prev_star,
                                  const ParameterVector& theta_t,
                                  const stats::FusionStatistics& stats,
                                  const FusionConfig& cfg) {
  return clip_beta(
      compute_beta_impl(
          theta_p, theta_prev_star, theta_t, stats, cfg,
          [](double d, double grad, double /*fisher*/, double curvature) {
            return (d - grad) / (d * (curvature + 1.0));
          }),
      cfg.clip_lo, cfg.clip_hi);
}

ParameterVector fuse(const ParameterVector& theta_p,
                     const ParameterVector& theta_prev_star,
                     const ParameterVector& theta_t,
                     const ParameterVector& beta) {
  require_same_layout(theta_p, theta_prev_star, "fuse");
  require_same_layout(theta_p, theta_t, "fuse");
  require_same_layout(theta_p, beta, "fuse");
  Eigen::ArrayXd out = theta_t.data +
                       beta.data * (theta_p.data - theta_t.data) +
                       beta.data * (theta_prev_star.data - theta_t.data);
  return ParameterVector(theta_t.layout, std::move(out));
}

ParameterVector fuse(const ParameterVector& theta_p,
                     const ParameterVector& theta_prev_star,
                     const ParameterVector& theta_t, const BetaVector& beta) {
  return fuse(theta_p, theta_prev_star, theta_t, beta.values);
}

ParameterVector fuse_gamma(const ParameterVector& theta_p,
                           const ParameterVector& theta_prev_star,
                           const ParameterVector& theta_t,
                           const ParameterVector& beta, double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw ConfigError("fuse_gamma: gamma must lie in [0, 1], got " +
                      format_double(gamma));
  }
  require_same_layout(theta_p, theta_prev_star, "fuse_gamma");
  require_same_layout(theta_p, theta_t, "fuse_gamma");
  require_same_layout(theta_p, beta, "fuse_gamma");
  // At gamma = 0.5 both scales are exactly 1.0, reproducing fuse bitwise.
  const double prior_scale = 2.0 * gamma;
  const double previous_scale = 2.0 * (1.0 - gamma);
  Eigen::ArrayXd out =
      theta_t.data +
      prior_scale * (beta.data * (theta_p.data - theta_t.data)) +
      previous_scale * (beta.data * (theta_prev_star.data - theta_t.data));
  return ParameterVector(theta_t.layout, std::move(out));
}

ParameterVector fuse_gamma(const ParameterVector& theta_p,
                           const ParameterVector& theta_prev_star,
                           const ParameterVector& theta_t,
                           const BetaVector& beta, double gamma) {
  return fuse_gamma(theta_p, theta_prev_star, theta_t, beta.values, gamma);
}

ParameterVector update_running_average(const ParameterVector& theta_avg_prev,
                                       const ParameterVector& theta_t,
                                       Index t) {
  if (t < 1) {
    throw ContractError("running average: task index must be >= 1, got " +
                        std::to_string(t));
  }
  require_same_layout(theta_avg_prev, theta_t, "running average");
  const double td = static_cast<double>(t);
  Eigen::ArrayXd out =
      ((td - 1.0) / td) * theta_avg_prev.data + (1.0 / td) * theta_t.data;
  return ParameterVector(theta_t.layout, std::move(out));
}

double verify_constraint(const ParameterVector& theta_p,
                         const ParameterVector& theta_prev_star,
                         const ParameterVector& theta_t,
                         const ParameterVector& theta_star,
                         const ParameterVector& beta) {
  require_same_layout(theta_p, theta_prev_star, "constraint check");
  require_same_layout(theta_p, theta_t, "constraint check");
  require_same_layout(theta_p, theta_star, "constraint check");
  require_same_layout(theta_p, beta, "constraint check");
  // Δθ is reconstructed from β rather than from θ*_t, so the residual is a
  // genuine cross-check of the fused vector instead of a tautology.
  const Eigen::ArrayXd delta =
      (beta.data - 1.0) *
      (theta_p.data + theta_prev_star.data - 2.0 * theta_t.data);
  return (delta + theta_prev_star.data + theta_p.data - theta_t.data -
          theta_star.data)
      .abs()
      .maxCoeff();
}

double verify_delta_relation(const ParameterVector& theta_p,
                             const ParameterVector& theta_prev_star,
                             const ParameterVector& theta_t,
                             const ParameterVector& beta) {
  const ParameterVector star = fuse(theta_p, theta_prev_star, theta_t, beta);
  const Eigen::ArrayXd delta =
      star.data - theta_prev_star.data + theta_t.data - theta_p.data;
  const Eigen::ArrayXd lhs = star.data - theta_t.data;
  const Eigen::ArrayXd rhs = (beta.data / (beta.data - 1.0)) * delta;
  return (lhs - rhs).abs().maxCoeff();
}

}  // namespace daf::fusion
