#pragma once

#include <utility>
#include <vector>

#include "daf/data.hpp"
#include "daf/model/backbone.hpp"

namespace daf::stats {

struct LayerFisherSummary {
  double f_min = 0.0;
  double f_mean = 0.0;
};

// Post-training curvature snapshot of one task adapter: mean cross-entropy
// gradient and the empirical Fisher diagonal (mean squared per-sample
// gradient), plus the global Fisher extremes the fusion coefficients need.
struct FusionStatistics {
  model::ParameterVector grad;
  model::ParameterVector fisher;
  double f_min = 0.0;
  double f_mean = 0.0;
  // Optional per-layer extremes (experimental scaling variant); empty when
  // the global statistics are in use.
  std::vector<LayerFisherSummary> per_layer;
};

// Exact (min, mean) over every entry; order-stable left-to-right summation.
[[nodiscard]] std::pair<double, double> summarize(const Eigen::ArrayXd& fisher);

struct StatsOptions {
  double loss_scale = 1.0;  // diagnostic knob for homogeneity audits
  bool per_layer = false;
};

// Mean of per-sample loss gradients w.r.t. adapter parameters, accumulated
// one sample at a time in dataset index order.
[[nodiscard]] model::ParameterVector compute_gradient(
    const model::Backbone& backbone, const model::Adapter& adapter,
    const model::TaskHead& head, const LabeledDataset& data,
    double loss_scale = 1.0);

// Mean of elementwise squared per-sample gradients (diagonal empirical
// Fisher); same accumulation discipline as compute_gradient.
[[nodiscard]] model::ParameterVector compute_fisher_diagonal(
    const model::Backbone& backbone, const model::Adapter& adapter,
    const model::TaskHead& head, const LabeledDataset& data,
    double loss_scale = 1.0);

// One pass producing grad, fisher, and the Fisher summaries together.
[[nodiscard]] FusionStatistics compute_fusion_statistics(
    const model::Backbone& backbone, const model::Adapter& adapter,
    const model::TaskHead& head, const LabeledDataset& data,
    const StatsOptions& opts = {});

void validate_statistics(const FusionStatistics& stats);

}  // namespace daf::stats
