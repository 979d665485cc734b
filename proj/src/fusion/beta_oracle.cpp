#include "daf/fusion/beta_oracle.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace daf::fusion {

double beta_oracle_grid_search(double theta_p, double theta_prev_star,
                               double theta_t, const QuadraticLoss& loss,
                               Index resolution) {
  if (resolution < 2) {
    throw ContractError("grid search: resolution must be at least 2, got " +
                        std::to_string(resolution));
  }
  if (!std::isfinite(theta_p) || !std::isfinite(theta_prev_star) ||
      !std::isfinite(theta_t) || !std::isfinite(loss.first_derivative) ||
      !std::isfinite(loss.second_derivative)) {
    throw ContractError("grid search: inputs must be finite");
  }

  double best_beta = 0.0;
  double best_value = std::numeric_limits<double>::infinity();
  for (Index k = 1; k < resolution; ++k) {
    const double beta =
        static_cast<double>(k) / static_cast<double>(resolution);
    // The candidate fused parameter, straight from the blend definition.
    const double star = beta * theta_p + beta * theta_prev_star +
                        (1.0 - 2.0 * beta) * theta_t;
    const double step = star - theta_t;
    const double loss_change = loss.first_derivative * step +
                               0.5 * loss.second_derivative * step * step;
    const double drift = star - theta_prev_star + theta_t - theta_p;
    const double value = loss_change + 0.5 * drift * drift;
    if (value < best_value) {
      best_value = value;
      best_beta = beta;
    }
  }
  return best_beta;
}

}  // namespace daf::fusion
