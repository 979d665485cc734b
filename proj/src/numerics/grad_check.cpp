#include "daf/numerics/grad_check.hpp"

#include <cmath>
#include <string>

namespace daf {

double finite_diff_check(const std::function<double(const Eigen::ArrayXd&)>& f,
                         const Eigen::ArrayXd& theta,
                         const Eigen::ArrayXd& gradient, double h) {
  if (h <= 0.0) {
    throw ContractError("finite_diff_check: step must be positive");
  }
  if (gradient.size() != theta.size()) {
    throw ShapeError("finite_diff_check: gradient size " +
                     std::to_string(gradient.size()) + " vs parameter size " +
                     std::to_string(theta.size()));
  }
  if (!std::isfinite(f(theta))) {
    throw NumericError("finite_diff_check: f is non-finite at theta");
  }
  double worst = 0.0;
  Eigen::ArrayXd probe = theta;
  for (Index i = 0; i < theta.size(); ++i) {
    probe[i] = theta[i] + h;
    const double up = f(probe);
    probe[i] = theta[i] - h;
    const double down = f(probe);
    probe[i] = theta[i];
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("finite_diff_check: f is non-finite near theta");
    }
    const double fd = (up - down) / (2.0 * h);
    const double err = std::abs(gradient[i] - fd) / std::max(1.0, std::abs(fd));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace daf
