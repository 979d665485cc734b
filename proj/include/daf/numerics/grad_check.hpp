#pragma once

#include <Eigen/Core>

#include <functional>

#include "daf/common.hpp"

namespace daf {

// Central-difference audit of a gradient: for f scalar on R^n, compares the
// supplied gradient against (f(x + h e_i) - f(x - h e_i)) / 2h coordinate by
// coordinate and returns max_i |g_i - fd_i| / max(1, |fd_i|).
//
// Only meaningful where f is differentiable: the caller must keep kink points
// (ReLU pre-activations) at least a few orders of magnitude beyond h.
[[nodiscard]] double finite_diff_check(
    const std::function<double(const Eigen::ArrayXd&)>& f,
    const Eigen::ArrayXd& theta, const Eigen::ArrayXd& gradient,
    double h = 1e-5);

}  // namespace daf
