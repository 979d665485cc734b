#include "daf/verify/checks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <random>
#include <utility>

#include "daf/fusion/beta_oracle.hpp"
#include "daf/fusion/fusion.hpp"
#include "daf/fusion/gaussian_kl.hpp"
#include "daf/model/backbone.hpp"
#include "daf/numerics/grad_check.hpp"
#include "daf/stats/fusion_stats.hpp"

namespace daf::verify {
namespace {

// Per-check RNG stream salts: adding instances to one check never shifts the
// draws of another.
constexpr std::uint64_t kConstraintSalt = 0x5c01;
constexpr std::uint64_t kDeltaSalt = 0xde17;
constexpr std::uint64_t kGridSalt = 0x9a1d;
constexpr std::uint64_t kFormulaSalt = 0xf0a2;
constexpr std::uint64_t kKlSalt = 0x41a2;
constexpr std::uint64_t kAverageSalt = 0xa264;
constexpr std::uint64_t kGradSalt = 0x6fd1;
constexpr std::uint64_t kFisherSalt = 0xf154;
constexpr std::uint64_t kClipSalt = 0xc119;

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Eigen::ArrayXd uniform_array(std::mt19937_64& rng, Index n, double lo,
                             double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Eigen::ArrayXd out(n);
  for (Index i = 0; i < n; ++i) {
    out[i] = dist(rng);
  }
  return out;
}

template <typename Body>
CheckResult timed(std::string name, double tolerance, Body&& body) {
  CheckResult result;
  result.name = std::move(name);
  result.tolerance = tolerance;
  const auto start = std::chrono::steady_clock::now();
  result.residual = body();
  result.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  result.passed = result.residual <= result.tolerance;
  return result;
}

// Rotates through a few adapter shapes, widened until the flat size reaches
// min_dim, so the identity checks see more than one layout.
model::AdapterLayout cycled_layout(Index which, Index min_dim) {
  constexpr Index dims[] = {5, 7, 9, 6};
  constexpr Index ranks[] = {5, 4, 3, 5};
  const Index k = which % 4;
  model::AdapterLayout layout{dims[k], ranks[k], 2};
  while (layout.size() < min_dim) {
    ++layout.rank;
  }
  return layout;
}

struct FusedInstance {
  model::ParameterVector theta_p;
  model::ParameterVector theta_prev_star;
  model::ParameterVector theta_t;
  stats::FusionStatistics statistics;
};

FusedInstance random_fused_instance(std::mt19937_64& rng,
                                    const model::AdapterLayout& layout) {
  const Index n = layout.size();
  FusedInstance inst;
  inst.theta_p = model::ParameterVector(layout, uniform_array(rng, n, -2, 2));
  inst.theta_prev_star =
      model::ParameterVector(layout, uniform_array(rng, n, -2, 2));
  inst.theta_t = model::ParameterVector(layout, uniform_array(rng, n, -2, 2));
  inst.statistics.grad =
      model::ParameterVector(layout, uniform_array(rng, n, -1, 1));
  inst.statistics.fisher = model::ParameterVector(
      layout, uniform_array(rng, n, -1.2, 1.2).square());
  const auto [f_min, f_mean] = stats::summarize(inst.statistics.fisher.data);
  inst.statistics.f_min = f_min;
  inst.statistics.f_mean = f_mean;
  return inst;
}

// A small classification problem whose ReLU pre-activations all sit safely
// away from zero, plus the flat parameter vector (adapter segments, then
// head weights row-major, then head bias) the finite-difference probes move.
struct SmoothProblem {
  model::Backbone backbone;
  model::AdapterLayout layout;
  RowMatrixXd inputs;
  std::vector<int> labels;
  Index classes = 0;
  Eigen::ArrayXd theta;
};

// Narrowest |pre-activation| across both adapted layers, recomputed with
// plain Eigen so the margin estimate does not depend on the tape under test.
double kink_margin(const model::Backbone& backbone,
                   const model::Adapter& adapter, const RowMatrixXd& inputs) {
  RowMatrixXd h =
      (inputs * backbone.embed_w).rowwise() + backbone.embed_b.transpose();
  double margin = std::numeric_limits<double>::infinity();
  for (Index layer = 0; layer < 2; ++layer) {
    const RowMatrixXd& w = layer == 0 ? backbone.w1 : backbone.w2;
    const Eigen::VectorXd& b = layer == 0 ? backbone.b1 : backbone.b2;
    const RowMatrixXd trunk_pre = (h * w).rowwise() + b.transpose();
    const RowMatrixXd bneck_pre = h * adapter.layers[layer].down;
    margin = std::min({margin, trunk_pre.cwiseAbs().minCoeff(),
                       bneck_pre.cwiseAbs().minCoeff()});
    h = trunk_pre.cwiseMax(0.0) +
        bneck_pre.cwiseMax(0.0) * adapter.layers[layer].up;
  }
  return margin;
}

model::TaskHead head_from_flat(const Eigen::ArrayXd& theta,
                               const model::AdapterLayout& layout, Index dim,
                               Index classes) {
  model::TaskHead head;
  head.w = Eigen::Map<const RowMatrixXd>(theta.data() + layout.size(), dim,
                                         classes);
  head.b = Eigen::Map<const Eigen::VectorXd>(
      theta.data() + layout.size() + dim * classes, classes);
  return head;
}

model::Adapter adapter_from_flat(const Eigen::ArrayXd& theta,
                                 const model::AdapterLayout& layout) {
  return model::unflatten(
      model::ParameterVector(layout, theta.head(layout.size())));
}

SmoothProblem random_smooth_problem(std::mt19937_64& rng, Index which) {
  SmoothProblem p;
  const Index input_dim = 3 + which % 4;
  const Index dim = 4 + which % 3;
  const Index rank = 1 + which % 3;
  p.classes = 2 + which % 3;
  const Index samples = 3 + which % 6;
  p.backbone = model::Backbone::random_init(input_dim, dim, rng());
  p.layout = p.backbone.adapter_layout(rank);
  const Index total = p.layout.size() + dim * p.classes + p.classes;
  p.labels.resize(static_cast<std::size_t>(samples));
  for (auto& label : p.labels) {
    label = static_cast<int>(rng() % static_cast<std::uint64_t>(p.classes));
  }
  // Redraw inputs and parameters until every pre-activation clears the kink
  // guard; the finite-difference step (1e-5) then never crosses a ReLU.
  for (int attempt = 0;; ++attempt) {
    if (attempt >= 500) {
      throw ContractError(
          "gradient check: could not sample a kink-free configuration");
    }
    p.inputs = RowMatrixXd(samples, input_dim);
    for (Index r = 0; r < samples; ++r) {
      for (Index c = 0; c < input_dim; ++c) {
        p.inputs(r, c) = uniform(rng, -1.0, 1.0);
      }
    }
    p.theta = uniform_array(rng, total, -0.8, 0.8);
    const model::Adapter adapter = adapter_from_flat(p.theta, p.layout);
    if (kink_margin(p.backbone, adapter, p.inputs) > 1e-3) {
      return p;
    }
  }
}

}  // namespace

CheckResult check_stability_constraint(std::uint64_t seed, Index instances,
                                       Index min_dim) {
  return timed("stability_constraint", 1e-10, [&] {
    std::mt19937_64 rng(derive_seed(seed, kConstraintSalt));
    double worst = 0.0;
    for (Index i = 0; i < instances; ++i) {
      const FusedInstance inst =
          random_fused_instance(rng, cycled_layout(i, min_dim));
      const fusion::BetaVector beta = fusion::compute_beta(
          inst.theta_p, inst.theta_prev_star, inst.theta_t, inst.statistics);
      const model::ParameterVector star =
          fusion::fuse(inst.theta_p, inst.theta_prev_star, inst.theta_t, beta);
      worst = std::max(
          worst, fusion::verify_constraint(inst.theta_p, inst.theta_prev_star,
                                           inst.theta_t, star, beta.values));
    }
    return worst;
  });
}

CheckResult check_delta_relation(std::uint64_t seed, Index instances,
                                 Index min_dim) {
  return timed("delta_relation", 1e-10, [&] {
    std::mt19937_64 rng(derive_seed(seed, kDeltaSalt));
    double worst = 0.0;
    for (Index i = 0; i < instances; ++i) {
      const FusedInstance inst =
          random_fused_instance(rng, cycled_layout(i, min_dim));
      const fusion::BetaVector beta = fusion::compute_beta(
          inst.theta_p, inst.theta_prev_star, inst.theta_t, inst.statistics);
      worst = std::max(worst, fusion::verify_delta_relation(
                                  inst.theta_p, inst.theta_prev_star,
                                  inst.theta_t, beta.values));
    }
    return worst;
  });
}

CheckResult check_beta_grid_oracle(std::uint64_t seed, Index instances,
                                   Index resolution) {
  // The grid argmin of the strictly convex objective is the grid point
  // nearest the optimum, so agreement within two grid steps is the honest
  // bound; the closed form itself contributes only rounding.
  return timed("beta_grid_oracle", 2.0 / static_cast<double>(resolution), [&] {
    std::mt19937_64 rng(derive_seed(seed, kGridSalt));
    const model::AdapterLayout layout{1, 1, 1};
    const Index n = layout.size();
    const double alpha = fusion::FusionConfig{}.alpha;
    double worst = 0.0;
    Index done = 0;
    while (done < instances) {
      // Fisher pair with a clearly non-degenerate spread.
      const Eigen::ArrayXd fisher = uniform_array(rng, n, 0.1, 2.0);
      if (std::abs(fisher[0] - fisher[1]) < 0.2) {
        continue;
      }
      const auto [f_min, f_mean] = stats::summarize(fisher);
      // Curvature written out independently of the production helper.
      Eigen::ArrayXd curvature(n);
      for (Index i = 0; i < n; ++i) {
        curvature[i] = 1.0 + alpha * (fisher[i] - f_min) / (f_mean - f_min);
      }
      // Choose an interior target coefficient, then solve for the gradient
      // that places the quadratic optimum exactly there.
      Eigen::ArrayXd grad(n);
      Eigen::ArrayXd drift(n);
      Eigen::ArrayXd theta_t(n);
      Eigen::ArrayXd prev(n);
      Eigen::ArrayXd theta_p(n);
      for (Index i = 0; i < n; ++i) {
        const double target = uniform(rng, 0.05, 0.95);
        const double magnitude = uniform(rng, 0.5, 2.0);
        drift[i] = (rng() & 1u) != 0 ? magnitude : -magnitude;
        grad[i] = drift[i] - target * drift[i] * (curvature[i] + 1.0);
        theta_t[i] = uniform(rng, -1.0, 1.0);
        prev[i] = uniform(rng, -1.0, 1.0);
        theta_p[i] = drift[i] + 2.0 * theta_t[i] - prev[i];
      }
      stats::FusionStatistics st;
      st.grad = model::ParameterVector(layout, grad);
      st.fisher = model::ParameterVector(layout, fisher);
      st.f_min = f_min;
      st.f_mean = f_mean;
      const fusion::BetaVector raw = fusion::compute_beta_unclipped(
          model::ParameterVector(layout, theta_p),
          model::ParameterVector(layout, prev),
          model::ParameterVector(layout, theta_t), st);
      for (Index i = 0; i < n && done < instances; ++i, ++done) {
        const double oracle = fusion::beta_oracle_grid_search(
            theta_p[i], prev[i], theta_t[i],
            fusion::QuadraticLoss{grad[i], curvature[i]}, resolution);
        worst = std::max(worst, std::abs(raw.values.data[i] - oracle));
      }
    }
    return worst;
  });
}

CheckResult check_beta_formula_consistency(std::uint64_t seed,
                                           Index instances) {
  return timed("beta_formula_consistency", 1e-12, [&] {
    std::mt19937_64 rng(derive_seed(seed, kFormulaSalt));
    const model::AdapterLayout layout{4, 2, 2};
    double worst = 0.0;
    for (Index i = 0; i < instances; ++i) {
      const FusedInstance inst = random_fused_instance(rng, layout);
      const fusion::BetaVector a = fusion::compute_beta(
          inst.theta_p, inst.theta_prev_star, inst.theta_t, inst.statistics);
      const fusion::BetaVector b = fusion::compute_beta_reference(
          inst.theta_p, inst.theta_prev_star, inst.theta_t, inst.statistics);
      worst = std::max(worst,
                       (a.values.data - b.values.data).abs().maxCoeff());
    }
    return worst;
  });
}

CheckResult check_kl_additivity(std::uint64_t seed, Index instances) {
  return timed("kl_additivity", 1e-10, [&] {
    std::mt19937_64 rng(derive_seed(seed, kKlSalt));
    const auto random_gaussian = [&rng](Index dim) {
      return fusion::DiagonalGaussian{uniform_array(rng, dim, -2.0, 2.0),
                                      uniform_array(rng, dim, 0.3, 2.5)};
    };
    double worst = 0.0;
    for (Index i = 0; i < instances; ++i) {
      const Index specific_dim = 2 + i % 5;
      const Index global_dim = 2 + (i / 5) % 5;
      const fusion::DiagonalGaussian q_s = random_gaussian(specific_dim);
      const fusion::DiagonalGaussian p_init = random_gaussian(specific_dim);
      const fusion::DiagonalGaussian q_g = random_gaussian(global_dim);
      const fusion::DiagonalGaussian q_g_prev = random_gaussian(global_dim);
      worst = std::max(worst,
                       fusion::kl_additivity_check(q_s, p_init, q_g, q_g_prev));
    }
    return worst;
  });
}

CheckResult check_average_recursion(std::uint64_t seed, Index max_length) {
  return timed("average_recursion", 1e-12, [&] {
    std::mt19937_64 rng(derive_seed(seed, kAverageSalt));
    const model::AdapterLayout layout{2, 2, 2};
    const Index n = layout.size();
    double worst = 0.0;
    for (Index length = 1; length <= max_length; ++length) {
      model::ParameterVector running = model::ParameterVector::zeros(layout);
      // Independent batch route: plain sum divided by the count.
      Eigen::ArrayXd total = Eigen::ArrayXd::Zero(n);
      for (Index t = 1; t <= length; ++t) {
        const model::ParameterVector theta(layout,
                                           uniform_array(rng, n, -2.0, 2.0));
        running = fusion::update_running_average(running, theta, t);
        total += theta.data;
      }
      const Eigen::ArrayXd batch = total / static_cast<double>(length);
      const Eigen::ArrayXd rel =
          (running.data - batch).abs() / batch.abs().max(1.0);
      worst = std::max(worst, rel.maxCoeff());
    }
    return worst;
  });
}

CheckResult check_gradient_finite_difference(std::uint64_t seed,
                                             Index configurations) {
  return timed("gradient_finite_difference", 1e-4, [&] {
    std::mt19937_64 rng(derive_seed(seed, kGradSalt));
    double worst = 0.0;
    for (Index c = 0; c < configurations; ++c) {
      const SmoothProblem p = random_smooth_problem(rng, c);
      const Index dim = p.backbone.dim();

      const auto loss_at = [&p, dim](const Eigen::ArrayXd& theta) {
        const model::Adapter adapter = adapter_from_flat(theta, p.layout);
        const model::TaskHead head =
            head_from_flat(theta, p.layout, dim, p.classes);
        Tape tape;
        const model::ModelGraph graph = model::build_graph(
            tape, p.backbone, &adapter, &head, p.inputs, &p.labels);
        return tape.value(graph.loss).scalar_value();
      };

      // Reverse-mode gradient, flattened in the same order as theta.
      const model::Adapter adapter = adapter_from_flat(p.theta, p.layout);
      const model::TaskHead head =
          head_from_flat(p.theta, p.layout, dim, p.classes);
      Tape tape;
      const model::ModelGraph graph = model::build_graph(
          tape, p.backbone, &adapter, &head, p.inputs, &p.labels);
      const Tape::Gradients grads = tape.backward(graph.loss);
      Eigen::ArrayXd gradient(p.theta.size());
      for (Index layer = 0; layer < p.layout.layers; ++layer) {
        gradient.segment(p.layout.down_offset(layer),
                         p.layout.dim * p.layout.rank) =
            grads.flat_at(graph.adapter_down[static_cast<std::size_t>(layer)]);
        gradient.segment(p.layout.up_offset(layer),
                         p.layout.rank * p.layout.dim) =
            grads.flat_at(graph.adapter_up[static_cast<std::size_t>(layer)]);
      }
      gradient.segment(p.layout.size(), dim * p.classes) =
          grads.flat_at(graph.head_w);
      gradient.segment(p.layout.size() + dim * p.classes, p.classes) =
          grads.flat_at(graph.head_b);

      worst = std::max(worst, finite_diff_check(loss_at, p.theta, gradient));
    }
    return worst;
  });
}

CheckResult check_fisher_oracle(std::uint64_t seed, Index instances) {
  return timed("fisher_oracle", 1e-12, [&] {
    std::mt19937_64 rng(derive_seed(seed, kFisherSalt));
    double worst = 0.0;
    for (Index i = 0; i < instances; ++i) {
      const Index input_dim = 3 + i % 3;
      const Index dim = 4 + i % 2;
      const Index rank = 1 + i % 3;
      const Index classes = 2 + i % 2;
      const Index samples = 6 + 2 * (i % 4);
      const model::Backbone backbone =
          model::Backbone::random_init(input_dim, dim, rng());
      const model::AdapterLayout layout = backbone.adapter_layout(rank);
      const model::Adapter adapter = model::unflatten(model::ParameterVector(
          layout, uniform_array(rng, layout.size(), -0.8, 0.8)));
      const model::TaskHead head =
          model::TaskHead::random_init(dim, classes, rng());
      LabeledDataset data;
      data.inputs = RowMatrixXd(samples, input_dim);
      for (Index r = 0; r < samples; ++r) {
        for (Index col = 0; col < input_dim; ++col) {
          data.inputs(r, col) = uniform(rng, -1.0, 1.0);
        }
      }
      data.labels.resize(static_cast<std::size_t>(samples));
      for (auto& label : data.labels) {
        label = static_cast<int>(rng() % static_cast<std::uint64_t>(classes));
      }

      const model::ParameterVector production =
          stats::compute_fisher_diagonal(backbone, adapter, head, data);

      // Independent route: one sample at a time, squaring and averaging with
      // local flattening arithmetic instead of the layout helpers.
      Eigen::ArrayXd square_sum = Eigen::ArrayXd::Zero(layout.size());
      for (Index s = 0; s < samples; ++s) {
        const RowMatrixXd row = data.inputs.row(s);
        const std::vector<int> label = {data.labels[static_cast<std::size_t>(s)]};
        Tape tape;
        const model::ModelGraph graph =
            model::build_graph(tape, backbone, &adapter, &head, row, &label);
        const Tape::Gradients grads = tape.backward(graph.loss);
        Eigen::ArrayXd flat(layout.size());
        for (Index layer = 0; layer < 2; ++layer) {
          const Index base = layer * 2 * dim * rank;
          flat.segment(base, dim * rank) =
              grads.flat_at(graph.adapter_down[static_cast<std::size_t>(layer)]);
          flat.segment(base + dim * rank, rank * dim) =
              grads.flat_at(graph.adapter_up[static_cast<std::size_t>(layer)]);
        }
        square_sum += flat.square();
      }
      const Eigen::ArrayXd oracle = square_sum / static_cast<double>(samples);
      worst =
          std::max(worst, (production.data - oracle).abs().maxCoeff());
    }
    return worst;
  });
}

CheckResult check_beta_clipping(
    std::uint64_t seed, Index instances,
    std::optional<std::pair<double, double>> window) {
  const double lo = window ? window->first : 0.001;
  const double hi = window ? window->second : 0.499;
  return timed("beta_clipping", 0.0, [&] {
    std::mt19937_64 rng(derive_seed(seed, kClipSalt));
    double worst = 0.0;
    for (Index i = 0; i < instances; ++i) {
      const FusedInstance inst =
          random_fused_instance(rng, cycled_layout(i, 100));
      const fusion::BetaVector raw = fusion::compute_beta_unclipped(
          inst.theta_p, inst.theta_prev_star, inst.theta_t, inst.statistics);
      const fusion::BetaVector clipped = fusion::clip_beta(raw, lo, hi);
      // Distance by which the clipped coefficients escape the canonical
      // stability window; zero when the clamp does its job.
      worst = std::max({worst, 0.001 - clipped.values.data.minCoeff(),
                        clipped.values.data.maxCoeff() - 0.499, 0.0});
    }
    return worst;
  });
}

std::optional<std::pair<double, double>> clip_window_from_environment() {
  const char* raw = std::getenv("DAF_TEST_CLIP_RANGE");
  if (raw == nullptr || *raw == '\0') {
    return std::nullopt;
  }
  double lo = 0.0;
  double hi = 0.0;
  char trailing = '\0';
  if (std::sscanf(raw, " %lf , %lf %c", &lo, &hi, &trailing) != 2) {
    throw ConfigError(
        std::string("DAF_TEST_CLIP_RANGE: expected \"lo,hi\", got \"") + raw +
        "\"");
  }
  return std::make_pair(lo, hi);
}

std::vector<CheckResult> run_all_checks(std::uint64_t seed) {
  const std::optional<std::pair<double, double>> window =
      clip_window_from_environment();
  std::vector<CheckResult> results;
  results.push_back(check_stability_constraint(seed));
  results.push_back(check_delta_relation(seed));
  results.push_back(check_beta_grid_oracle(seed));
  results.push_back(check_beta_formula_consistency(seed));
  results.push_back(check_kl_additivity(seed));
  results.push_back(check_average_recursion(seed));
  results.push_back(check_gradient_finite_difference(seed));
  results.push_back(check_fisher_oracle(seed));
  results.push_back(check_beta_clipping(seed, 200, window));
  return results;
}

}  // namespace daf::verify
