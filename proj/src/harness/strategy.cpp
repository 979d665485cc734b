#include "daf/harness/strategy.hpp"

#include <algorithm>
#include <utility>

namespace daf::harness {

namespace {

constexpr std::uint64_t kGlobalInitSalt = 0x61b1;
constexpr std::uint64_t kTaskInitSalt = 0xad17;
constexpr std::uint64_t kTrainSalt = 0x7aa1;
constexpr std::uint64_t kAlignSalt = 0xa164;

using fusion::ParameterVector;
using model::Adapter;
using model::AdapterLayout;

bool known_tag(const std::vector<std::string>& tags, const std::string& tag) {
  return std::find(tags.begin(), tags.end(), tag) != tags.end();
}

// Fraction of one task's test samples that the prototype classifier maps to
// their true global class.
double evaluate_task(const model::Backbone& backbone, const Adapter& adapter,
                     const classifier::PrototypeStore& prototypes,
                     const Task& task) {
  const RowMatrixXd feats =
      model::features(backbone, &adapter, task.test.inputs);
  Index hits = 0;
  for (Index i = 0; i < feats.rows(); ++i) {
    const Eigen::VectorXd f = feats.row(i).transpose();
    const int predicted = classifier::classify(f, prototypes);
    const int truth = task.class_ids[static_cast<std::size_t>(
        task.test.labels[static_cast<std::size_t>(i)])];
    if (predicted == truth) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(feats.rows());
}

}  // namespace

void validate_strategy_config(const StrategyConfig& cfg) {
  if (!known_tag(strategy_tags(), cfg.strategy)) {
    throw ConfigError("strategy config: unknown strategy \"" + cfg.strategy +
                      "\"");
  }
  if (!known_tag(init_tags(), cfg.init)) {
    throw ConfigError("strategy config: unknown init \"" + cfg.init + "\"");
  }
  if (!(cfg.beta_static > 0.0 && cfg.beta_static < 0.5)) {
    throw ConfigError("strategy config: beta_static must lie in (0, 0.5),"
                      " got " +
                      format_double(cfg.beta_static));
  }
  if (!(cfg.ema_decay >= 0.0 && cfg.ema_decay < 1.0)) {
    throw ConfigError("strategy config: ema_decay must lie in [0, 1), got " +
                      format_double(cfg.ema_decay));
  }
  fusion::validate_fusion_config(cfg.fusion);
  if (cfg.rank < 1) {
    throw ConfigError("strategy config: rank must be >= 1");
  }
  validate_train_config(
      TrainConfig{cfg.epochs, cfg.lr, cfg.batch, cfg.momentum, 0});
  if (cfg.replay_samples_per_class < 1) {
    throw ConfigError("strategy config: replay_samples_per_class must be"
                      " >= 1");
  }
  if (!(cfg.variance_floor > 0.0)) {
    throw ConfigError("strategy config: variance_floor must be positive");
  }
}

RunResult run_strategy(const TaskStream& stream,
                       const model::Backbone& backbone,
                       const StrategyConfig& cfg) {
  validate_strategy_config(cfg);
  if (stream.tasks.empty()) {
    throw ConfigError("run: stream has no tasks");
  }
  const AdapterLayout layout = backbone.adapter_layout(cfg.rank);

  RunResult result;
  result.backbone_hash_before = backbone.content_hash();

  // Shared starting point: global adapter and history average both at the
  // initialization vector, task counter at zero.
  const ParameterVector theta_init = model::flatten(
      Adapter::random_init(layout, derive_seed(cfg.seed, kGlobalInitSalt)));
  fusion::GlobalState state = fusion::GlobalState::initialize(theta_init);
  std::optional<ParameterVector> theta_last;
  classifier::GaussianStore gaussians;
  classifier::PrototypeStore prototypes;

  const Index num_tasks = static_cast<Index>(stream.tasks.size());
  for (Index t = 1; t <= num_tasks; ++t) {
    try {
      const Task& task = stream.tasks[static_cast<std::size_t>(t - 1)];

      // Where this task's SGD starts (the initialization ablation).
      ParameterVector start = [&] {
        if (cfg.init == "previous_task" && theta_last.has_value()) {
          return *theta_last;
        }
        if (cfg.init == "robust" && t > 1) {
          return state.theta_avg;
        }
        return model::flatten(Adapter::random_init(
            layout, derive_seed(cfg.seed, kTaskInitSalt,
                                static_cast<std::uint64_t>(t))));
      }();

      // The fusion prior is the historical average regardless of where
      // training starts; at t = 1 that is the shared init vector.
      const ParameterVector theta_p = state.theta_avg;
      const ParameterVector theta_prev_star = state.theta_star;

      TrainConfig train_cfg{cfg.epochs, cfg.lr, cfg.batch, cfg.momentum,
                            derive_seed(cfg.seed, kTrainSalt,
                                        static_cast<std::uint64_t>(t))};
      TaskTrainResult trained = train_task_adapter(
          backbone, model::unflatten(start), task.train, train_cfg);
      const ParameterVector theta_t = model::flatten(trained.adapter);

      TaskReport report;
      report.task_index = t;
      report.train_accuracy = trained.train_accuracy;

      ParameterVector new_star;
      if (cfg.strategy == "daf" || cfg.strategy == "daf_gamma") {
        const stats::FusionStatistics statistics =
            stats::compute_fusion_statistics(backbone, trained.adapter,
                                             trained.head, task.train);
        const fusion::BetaVector beta = fusion::compute_beta(
            theta_p, theta_prev_star, theta_t, statistics, cfg.fusion);
        new_star = cfg.strategy == "daf_gamma"
                       ? fusion::fuse_gamma(theta_p, theta_prev_star, theta_t,
                                            beta, cfg.fusion.gamma)
                       : fusion::fuse(theta_p, theta_prev_star, theta_t,
                                      beta);
        report.beta = beta.diagnostics;
        if (cfg.record_fusion_inputs) {
          result.fusion_records.push_back({t, theta_p, theta_prev_star,
                                           theta_t, statistics, beta.values,
                                           new_star});
        }
      } else if (cfg.strategy == "static_fusion") {
        const ParameterVector beta(
            layout,
            Eigen::ArrayXd::Constant(layout.size(), cfg.beta_static));
        new_star = fusion::fuse(theta_p, theta_prev_star, theta_t, beta);
        fusion::BetaDiagnostics diag;
        diag.beta_min = diag.beta_mean = diag.beta_max = cfg.beta_static;
        report.beta = diag;
      } else if (cfg.strategy == "ema") {
        new_star = ParameterVector(
            layout, cfg.ema_decay * theta_prev_star.data +
                        (1.0 - cfg.ema_decay) * theta_t.data);
      } else {  // finetune, last_task: the new adapter replaces the global
        new_star = theta_t;
      }

      state.advance(new_star, theta_t);
      if (cfg.init == "previous_task") {
        theta_last = theta_t;
      }

      // Feature Gaussians for the new classes, taken with the task adapter
      // before it is discarded — the only moment these features exist.
      const RowMatrixXd train_feats =
          model::features(backbone, &trained.adapter, task.train.inputs);
      for (std::size_t local = 0; local < task.class_ids.size(); ++local) {
        std::vector<Index> rows;
        for (std::size_t i = 0; i < task.train.labels.size(); ++i) {
          if (task.train.labels[i] == static_cast<int>(local)) {
            rows.push_back(static_cast<Index>(i));
          }
        }
        RowMatrixXd class_feats(static_cast<Index>(rows.size()),
                                train_feats.cols());
        for (std::size_t i = 0; i < rows.size(); ++i) {
          class_feats.row(static_cast<Index>(i)) = train_feats.row(rows[i]);
        }
        const int class_id = task.class_ids[local];
        gaussians[class_id] = classifier::fit_gaussian(class_id, class_feats,
                                                       cfg.variance_floor);
      }

      // Refresh every class prototype from its stored Gaussian.
      prototypes = classifier::align_old_prototypes(
          gaussians, cfg.replay_samples_per_class,
          derive_seed(cfg.seed, kAlignSalt, static_cast<std::uint64_t>(t)));

      // Score all seen tasks with the retained global adapter. The
      // last-task paradigm evaluates with theta_t, which IS theta_star
      // under that strategy.
      const Adapter eval_adapter = model::unflatten(state.theta_star);
      std::vector<double> row;
      for (Index j = 1; j <= t; ++j) {
        row.push_back(evaluate_task(
            backbone, eval_adapter, prototypes,
            stream.tasks[static_cast<std::size_t>(j - 1)]));
      }
      result.accuracy.rows.push_back(std::move(row));

      report.retained = {"theta_star", "theta_avg"};
      if (theta_last.has_value()) {
        report.retained.push_back("theta_last");
      }
      result.task_reports.push_back(std::move(report));
    } catch (const NumericError& e) {
      throw NumericError("task " + std::to_string(t) + ": " + e.what());
    }
  }

  result.metrics = compute_metrics(result.accuracy);
  result.final_state = std::move(state);
  result.gaussians = std::move(gaussians);
  result.prototypes = std::move(prototypes);
  result.backbone_hash_after = backbone.content_hash();
  return result;
}

}  // namespace daf::harness
