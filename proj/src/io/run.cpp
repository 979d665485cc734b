#include "daf/io/run.hpp"

#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "daf/io/fs.hpp"

namespace daf::io {
namespace {

using nlohmann::ordered_json;

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

ordered_json beta_json(const fusion::BetaDiagnostics& d) {
  return {{"beta_min", d.beta_min},
          {"beta_mean", d.beta_mean},
          {"beta_max", d.beta_max},
          {"clipped_low", d.clipped_low},
          {"clipped_high", d.clipped_high},
          {"denominator_fallbacks", d.denominator_fallbacks},
          {"degenerate_fisher", d.degenerate_fisher}};
}

// Bitwise replay of each recorded fusion step plus the stability-constraint
// residual; any gap is a VerifyFailure naming the run and task. The
// constraint identity is a property of the symmetric blend, so it is
// checked for the asymmetric variant only at the balanced setting (where
// the two coincide bit for bit); the replay checks cover every blend.
void audit_fusion_records(const std::string& run_name,
                          const harness::StrategyConfig& cfg,
                          const std::vector<harness::FusionRecord>& records) {
  const bool symmetric_blend =
      cfg.strategy != "daf_gamma" || cfg.fusion.gamma == 0.5;
  for (const harness::FusionRecord& record : records) {
    const std::string where =
        run_name + " task " + std::to_string(record.task_index);
    const fusion::BetaVector replayed_beta =
        fusion::compute_beta(record.theta_p, record.theta_prev_star,
                             record.theta_t, record.statistics, cfg.fusion);
    if ((replayed_beta.values.data != record.beta.data).any()) {
      throw VerifyFailure("fusion audit: " + where +
                          ": replayed coefficients differ from the recorded "
                          "ones");
    }
    const model::ParameterVector replayed_fused =
        cfg.strategy == "daf_gamma"
            ? fusion::fuse_gamma(record.theta_p, record.theta_prev_star,
                                 record.theta_t, replayed_beta,
                                 cfg.fusion.gamma)
            : fusion::fuse(record.theta_p, record.theta_prev_star,
                           record.theta_t, replayed_beta);
    if ((replayed_fused.data != record.fused.data).any()) {
      throw VerifyFailure("fusion audit: " + where +
                          ": replayed fused vector differs from the recorded "
                          "one");
    }
    if (symmetric_blend) {
      const double residual =
          fusion::verify_constraint(record.theta_p, record.theta_prev_star,
                                    record.theta_t, record.fused, record.beta);
      if (!(residual <= 1e-10)) {
        throw VerifyFailure("fusion audit: " + where +
                            ": stability constraint residual " +
                            format_double(residual) + " exceeds 1e-10");
      }
    }
  }
}

ordered_json run_report_json(const RunSpec& spec,
                             const harness::RunResult& result,
                             double pretrain_accuracy,
                             const std::vector<std::string>& fusion_files,
                             bool audited) {
  ordered_json report;
  report["format_version"] = 1;
  report["name"] = spec.name;
  report["strategy"] = spec.strategy.strategy;
  report["init"] = spec.strategy.init;
  report["seed"] = spec.strategy.seed;
  report["metrics"] = {
      {"avg_accuracy", result.metrics.avg_accuracy},
      {"final_accuracy", result.metrics.final_accuracy},
      {"stability", result.metrics.stability
                        ? ordered_json(*result.metrics.stability)
                        : ordered_json(nullptr)},
      {"plasticity", result.metrics.plasticity}};
  report["tasks"] = ordered_json::array();
  for (const harness::TaskReport& task : result.task_reports) {
    ordered_json entry;
    entry["task"] = task.task_index;
    entry["train_accuracy"] = task.train_accuracy;
    entry["beta"] = task.beta ? beta_json(*task.beta) : ordered_json(nullptr);
    entry["retained"] = task.retained;
    report["tasks"].push_back(std::move(entry));
  }
  report["pretrain_accuracy"] = pretrain_accuracy;
  report["backbone_hash"] = hash_hex(result.backbone_hash_after);
  report["fusion_identities_audited"] = audited;
  report["files"] = {{"accuracy_csv", spec.name + ".accuracy.csv"},
                     {"checkpoint", spec.name + ".checkpoint"}};
  if (!fusion_files.empty()) {
    report["files"]["fusion_inputs"] = fusion_files;
  }
  return report;
}

}  // namespace

std::string resolve_output_dir(const std::string& configured) {
  if (!configured.empty()) {
    return configured;
  }
  if (const char* root = std::getenv(kOutputRootEnvVar);
      root != nullptr && *root != '\0') {
    return root;
  }
  return ".";
}

std::string accuracy_matrix_csv(const harness::AccuracyMatrix& a) {
  std::string out =
      "# accuracy matrix: line t lists accuracy on tasks 1..t after session "
      "t\n";
  for (Index t = 1; t <= a.tasks(); ++t) {
    out += std::to_string(t);
    for (Index j = 1; j <= t; ++j) {
      out += "," + format_double(a.at(t, j));
    }
    out += "\n";
  }
  return out;
}

harness::AccuracyMatrix parse_accuracy_matrix_csv(const std::string& text) {
  harness::AccuracyMatrix matrix;
  std::istringstream lines(text);
  std::string line;
  Index expected_session = 1;
  while (std::getline(lines, line)) {
    if (line.empty() || line.front() == '#') {
      continue;
    }
    std::istringstream fields(line);
    std::string field;
    std::vector<double> values;
    bool first = true;
    while (std::getline(fields, field, ',')) {
      if (first) {
        if (field != std::to_string(expected_session)) {
          throw ConfigError("accuracy csv: expected session " +
                            std::to_string(expected_session) + ", got \"" +
                            field + "\"");
        }
        first = false;
        continue;
      }
      std::size_t used = 0;
      double value = 0.0;
      try {
        value = std::stod(field, &used);
      } catch (const std::exception&) {
        throw ConfigError("accuracy csv: cannot parse \"" + field + "\"");
      }
      if (used != field.size()) {
        throw ConfigError("accuracy csv: cannot parse \"" + field + "\"");
      }
      values.push_back(value);
    }
    if (first) {
      throw ConfigError("accuracy csv: blank data line");
    }
    matrix.rows.push_back(std::move(values));
    ++expected_session;
  }
  harness::validate_accuracy_matrix(matrix);
  return matrix;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  validate_experiment_config(cfg);

  ExperimentResult result;
  result.output_dir = resolve_output_dir(cfg.output_dir);
  std::filesystem::create_directories(result.output_dir);
  const auto out_path = [&result](const std::string& name) {
    return result.output_dir + "/" + name;
  };

  const harness::TaskStream stream = harness::build_synthetic_stream(cfg.stream);
  const model::PretrainResult pretrained = model::pretrain_backbone(
      stream.pretrain, stream.input_dim, cfg.backbone.dim,
      cfg.backbone.pretrain);
  result.pretrain_accuracy = pretrained.train_accuracy;

  for (const RunSpec& spec : cfg.runs) {
    harness::StrategyConfig strategy = spec.strategy;
    strategy.record_fusion_inputs = strategy.record_fusion_inputs ||
                                    cfg.record_fusion_inputs ||
                                    cfg.verify_fusion_identities;

    const harness::RunResult run =
        harness::run_strategy(stream, pretrained.backbone, strategy);

    if (cfg.verify_fusion_identities) {
      audit_fusion_records(spec.name, strategy, run.fusion_records);
    }

    RunArtifacts artifacts;
    artifacts.name = spec.name;
    artifacts.strategy = strategy.strategy;
    artifacts.init = strategy.init;
    artifacts.metrics = run.metrics;

    const std::string csv_name = spec.name + ".accuracy.csv";
    write_file_atomic(out_path(csv_name), accuracy_matrix_csv(run.accuracy));
    artifacts.files.push_back(csv_name);

    const std::string checkpoint_base = spec.name + ".checkpoint";
    save_checkpoint(make_state_checkpoint(strategy.strategy, run.final_state,
                                          run.gaussians, run.prototypes),
                    out_path(checkpoint_base));
    artifacts.files.push_back(checkpoint_base + ".json");
    artifacts.files.push_back(checkpoint_base + ".bin");

    std::vector<std::string> fusion_files;
    for (const harness::FusionRecord& record : run.fusion_records) {
      const std::string base =
          spec.name + ".fusion.task" + std::to_string(record.task_index);
      save_checkpoint(make_fusion_inputs_checkpoint(strategy.strategy, record),
                      out_path(base));
      fusion_files.push_back(base);
      artifacts.files.push_back(base + ".json");
      artifacts.files.push_back(base + ".bin");
    }

    const ordered_json report =
        run_report_json(spec, run, pretrained.train_accuracy, fusion_files,
                        cfg.verify_fusion_identities);
    const std::string report_name = spec.name + ".report.json";
    write_file_atomic(out_path(report_name), report.dump(2) + "\n");
    artifacts.files.push_back(report_name);

    result.runs.push_back(std::move(artifacts));
  }
  return result;
}

OfflineFusion fuse_offline(const Checkpoint& theta_p,
                           const Checkpoint& theta_prev_star,
                           const Checkpoint& theta_t,
                           const Checkpoint& statistics,
                           const fusion::FusionConfig& cfg) {
  fusion::validate_fusion_config(cfg);
  OfflineFusion result;
  result.task_index = statistics.task_index;
  result.strategy = statistics.strategy;
  const model::ParameterVector p = checkpoint_vector(theta_p, "theta_p");
  const model::ParameterVector prev =
      checkpoint_vector(theta_prev_star, "theta_prev_star");
  const model::ParameterVector t = checkpoint_vector(theta_t, "theta_t");
  const stats::FusionStatistics st = checkpoint_statistics(statistics);
  model::require_same_layout(p, prev, "offline fusion");
  model::require_same_layout(p, t, "offline fusion");
  model::require_same_layout(p, st.grad, "offline fusion");
  result.beta = fusion::compute_beta(p, prev, t, st, cfg);
  result.fused = fusion::fuse_gamma(p, prev, t, result.beta, cfg.gamma);
  return result;
}

void save_offline_fusion(const OfflineFusion& result,
                         const fusion::FusionConfig& cfg,
                         const std::string& out_base) {
  save_checkpoint(
      make_vector_checkpoint(result.fused, result.strategy, result.task_index),
      out_base);
  ordered_json summary;
  summary["task_index"] = result.task_index;
  summary["strategy"] = result.strategy;
  summary["alpha"] = cfg.alpha;
  summary["gamma"] = cfg.gamma;
  summary["beta"] = beta_json(result.beta.diagnostics);
  write_file_atomic(out_base + ".beta.json", summary.dump(2) + "\n");
}

}  // namespace daf::io
