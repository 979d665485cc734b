#include "daf/stats/fusion_stats.hpp"

#include <string>

#include "daf/numerics/tape.hpp"

namespace daf::stats {

namespace {

using model::Adapter;
using model::AdapterLayout;
using model::Backbone;
using model::ModelGraph;
using model::ParameterVector;
using model::TaskHead;

Eigen::ArrayXd flatten_adapter_grads(const Tape::Gradients& grads,
                                     const ModelGraph& graph,
                                     const AdapterLayout& layout) {
  Eigen::ArrayXd flat(layout.size());
  for (Index l = 0; l < layout.layers; ++l) {
    const auto sl = static_cast<std::size_t>(l);
    flat.segment(layout.down_offset(l), layout.dim * layout.rank) =
        grads.flat_at(graph.adapter_down[sl]);
    flat.segment(layout.up_offset(l), layout.rank * layout.dim) =
        grads.flat_at(graph.adapter_up[sl]);
  }
  return flat;
}

struct Accumulated {
  Eigen::ArrayXd grad_sum;
  Eigen::ArrayXd square_sum;
  Index count = 0;
};

// Batch-of-one backward passes in dataset index order; sums stay in f64
// from the first sample on.
Accumulated accumulate(const Backbone& backbone, const Adapter& adapter,
                       const TaskHead& head, const LabeledDataset& data,
                       double loss_scale) {
  validate_dataset(data, "fusion statistics");
  const AdapterLayout layout = adapter.layout;
  Accumulated acc;
  acc.grad_sum = Eigen::ArrayXd::Zero(layout.size());
  acc.square_sum = Eigen::ArrayXd::Zero(layout.size());
  acc.count = data.size();
  model::GraphOptions opts;
  opts.loss_scale = loss_scale;
  for (Index i = 0; i < data.size(); ++i) {
    const RowMatrixXd row = data.inputs.row(i);
    const std::vector<int> label = {data.labels[static_cast<std::size_t>(i)]};
    Tape tape;
    ModelGraph g =
        model::build_graph(tape, backbone, &adapter, &head, row, &label, opts);
    const auto grads = tape.backward(g.loss);
    const Eigen::ArrayXd flat = flatten_adapter_grads(grads, g, layout);
    acc.grad_sum += flat;
    acc.square_sum += flat * flat;
  }
  return acc;
}

}  // namespace

std::pair<double, double> summarize(const Eigen::ArrayXd& fisher) {
  if (fisher.size() == 0) {
    throw ContractError("summarize: empty Fisher vector");
  }
  double lo = fisher[0];
  double total = 0.0;
  for (Index i = 0; i < fisher.size(); ++i) {
    lo = std::min(lo, fisher[i]);
    total += fisher[i];
  }
  return {lo, total / static_cast<double>(fisher.size())};
}

model::ParameterVector compute_gradient(const model::Backbone& backbone,
                                        const model::Adapter& adapter,
                                        const model::TaskHead& head,
                                        const LabeledDataset& data,
                                        double loss_scale) {
  Accumulated acc = accumulate(backbone, adapter, head, data, loss_scale);
  return ParameterVector(adapter.layout,
                         acc.grad_sum / static_cast<double>(acc.count));
}

model::ParameterVector compute_fisher_diagonal(const model::Backbone& backbone,
                                               const model::Adapter& adapter,
                                               const model::TaskHead& head,
                                               const LabeledDataset& data,
                                               double loss_scale) {
  Accumulated acc = accumulate(backbone, adapter, head, data, loss_scale);
  return ParameterVector(adapter.layout,
                         acc.square_sum / static_cast<double>(acc.count));
}

FusionStatistics compute_fusion_statistics(const model::Backbone& backbone,
                                           const model::Adapter& adapter,
                                           const model::TaskHead& head,
                                           const LabeledDataset& data,
                                           const StatsOptions& opts) {
  Accumulated acc = accumulate(backbone, adapter, head, data, opts.loss_scale);
  const double n = static_cast<double>(acc.count);
  FusionStatistics stats;
  stats.grad = ParameterVector(adapter.layout, acc.grad_sum / n);
  stats.fisher = ParameterVector(adapter.layout, acc.square_sum / n);
  std::tie(stats.f_min, stats.f_mean) = summarize(stats.fisher.data);
  if (opts.per_layer) {
    const AdapterLayout& layout = adapter.layout;
    for (Index l = 0; l < layout.layers; ++l) {
      const auto [lo, mean] = summarize(
          stats.fisher.data.segment(layout.down_offset(l), layout.per_layer()));
      stats.per_layer.push_back({lo, mean});
    }
  }
  validate_statistics(stats);
  return stats;
}

void validate_statistics(const FusionStatistics& stats) {
  require_same_layout(stats.grad, stats.fisher, "fusion statistics");
  if ((stats.fisher.data < 0.0).any()) {
    throw ContractError("fusion statistics: negative Fisher entry");
  }
  if (stats.f_min > stats.f_mean) {
    throw ContractError("fusion statistics: f_min " +
                        format_double(stats.f_min) + " exceeds f_mean " +
                        format_double(stats.f_mean));
  }
  const auto [lo, mean] = summarize(stats.fisher.data);
  if (stats.f_min != lo || stats.f_mean != mean) {
    throw ContractError(
        "fusion statistics: stored summaries (" + format_double(stats.f_min) +
        ", " + format_double(stats.f_mean) +
        ") disagree with the Fisher vector (" + format_double(lo) + ", " +
        format_double(mean) + ")");
  }
}

}  // namespace daf::stats
