#pragma once

#include <optional>
#include <string>
#include <vector>

#include "daf/classifier/prototype.hpp"
#include "daf/fusion/fusion.hpp"
#include "daf/harness/metrics.hpp"
#include "daf/harness/task_stream.hpp"
#include "daf/harness/trainer.hpp"

// Full class-incremental runs: per task, initialize and train an adapter,
// reduce it into the single retained global adapter under the configured
// strategy, refresh the prototype classifier from stored feature Gaussians,
// and score every seen task.
namespace daf::harness {

// How the global adapter absorbs each task.
inline const std::vector<std::string>& strategy_tags();
// Where each task's SGD starts.
inline const std::vector<std::string>& init_tags();

struct StrategyConfig {
  // daf: closed-form element-wise fusion coefficients.
  // daf_gamma: same coefficients, asymmetric prior/previous blend.
  // static_fusion: constant beta for every coordinate and task.
  // ema: exponential moving average of task adapters.
  // finetune / last_task: the newest task adapter simply replaces the
  // global one (two names for the same reduction; the latter labels the
  // evaluate-with-the-last-adapter paradigm).
  std::string strategy = "daf";
  // random: fresh draw per task. previous_task: start from the last task's
  // trained adapter. robust: start from the running average (random at
  // t = 1, when no history exists).
  std::string init = "robust";

  double beta_static = 1.0 / 3.0;
  double ema_decay = 0.9;
  fusion::FusionConfig fusion;

  Index rank = 4;
  Index epochs = 20;
  double lr = 0.01;
  Index batch = 48;
  double momentum = 0.9;

  Index replay_samples_per_class = classifier::kDefaultSamplesPerClass;
  double variance_floor = classifier::kDefaultVarianceFloor;

  std::uint64_t seed = 0;
  // Retain (theta_p, theta_prev_star, theta_t, statistics, beta, fused) per
  // task for offline bitwise replay of the fusion step. Instrumentation
  // only: not part of the algorithm's retained state.
  bool record_fusion_inputs = false;
};

void validate_strategy_config(const StrategyConfig& cfg);

// Everything the fusion step consumed and produced for one task.
struct FusionRecord {
  Index task_index = 0;
  fusion::ParameterVector theta_p;
  fusion::ParameterVector theta_prev_star;
  fusion::ParameterVector theta_t;
  stats::FusionStatistics statistics;
  fusion::ParameterVector beta;
  fusion::ParameterVector fused;
};

struct TaskReport {
  Index task_index = 0;  // 1-based
  double train_accuracy = 0.0;
  // Present for the fusing strategies (daf, daf_gamma, static_fusion).
  std::optional<fusion::BetaDiagnostics> beta;
  // Names of the adapter-shaped vectors still held after the task ended —
  // the memory contract says exactly {theta_star, theta_avg}, plus
  // theta_last under the previous_task initialization.
  std::vector<std::string> retained;
};

struct RunResult {
  AccuracyMatrix accuracy;
  Metrics metrics;
  std::vector<TaskReport> task_reports;
  std::vector<FusionRecord> fusion_records;  // empty unless recording
  fusion::GlobalState final_state;
  classifier::GaussianStore gaussians;
  classifier::PrototypeStore prototypes;
  std::uint64_t backbone_hash_before = 0;
  std::uint64_t backbone_hash_after = 0;
};

// Executes the stream under one strategy/initialization pair against a
// frozen backbone. Deterministic in (stream, backbone, cfg). A non-finite
// value anywhere aborts with a NumericError naming the failing task.
[[nodiscard]] RunResult run_strategy(const TaskStream& stream,
                                     const model::Backbone& backbone,
                                     const StrategyConfig& cfg);

inline const std::vector<std::string>& strategy_tags() {
  static const std::vector<std::string> tags = {
      "daf", "static_fusion", "ema", "finetune", "last_task", "daf_gamma"};
  return tags;
}

inline const std::vector<std::string>& init_tags() {
  static const std::vector<std::string> tags = {"random", "previous_task",
                                                "robust"};
  return tags;
}

}  // namespace daf::harness
