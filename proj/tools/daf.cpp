// Command-line front end: run experiments, self-verify the numerical core,
// replay fusion steps from checkpoints, and summarize run artifacts.
//
// Exit codes: 0 success, 1 verification failure, 2 usage/config error,
// 3 numeric failure.
#include <CLI11.hpp>

#include <cstdio>
#include <optional>
#include <string>

#include "daf/io/config.hpp"
#include "daf/io/fs.hpp"
#include "daf/io/report.hpp"
#include "daf/io/run.hpp"
#include "daf/verify/checks.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerifyFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

std::string metric_text(const daf::harness::Metrics& m) {
  std::string stability = "n/a";
  if (m.stability) {
    char inner[32];
    std::snprintf(inner, sizeof(inner), "%.6f", *m.stability);
    stability = inner;
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "avg_accuracy=%.6f final_accuracy=%.6f stability=%s "
                "plasticity=%.6f",
                m.avg_accuracy, m.final_accuracy, stability.c_str(),
                m.plasticity);
  return buf;
}

int do_run(const std::string& config_path,
           const std::optional<std::uint64_t>& seed,
           const std::optional<std::string>& output_dir,
           const std::optional<double>& alpha,
           const std::optional<double>& gamma) {
  daf::io::ExperimentConfig cfg = daf::io::load_experiment_config(config_path);
  if (seed) {
    daf::io::override_seeds(cfg, *seed);
  }
  if (output_dir) {
    cfg.output_dir = *output_dir;
  }
  for (daf::io::RunSpec& run : cfg.runs) {
    if (alpha) {
      run.strategy.fusion.alpha = *alpha;
    }
    if (gamma) {
      run.strategy.fusion.gamma = *gamma;
    }
  }

  const daf::io::ExperimentResult result = daf::io::run_experiment(cfg);
  std::printf("pretrain: accuracy=%.6f\n", result.pretrain_accuracy);
  std::size_t files = 0;
  for (const daf::io::RunArtifacts& run : result.runs) {
    std::printf("run %s (%s/%s): %s\n", run.name.c_str(),
                run.strategy.c_str(), run.init.c_str(),
                metric_text(run.metrics).c_str());
    files += run.files.size();
  }
  std::printf("wrote %zu files to %s\n", files, result.output_dir.c_str());
  return kExitOk;
}

int do_verify(std::uint64_t seed) {
  const std::vector<daf::verify::CheckResult> results =
      daf::verify::run_all_checks(seed);
  std::size_t passed = 0;
  for (const daf::verify::CheckResult& check : results) {
    std::printf("%-28s residual=%-12.5g tolerance=%-9.3g %s\n",
                check.name.c_str(), check.residual, check.tolerance,
                check.passed ? "PASS" : "FAIL");
    passed += check.passed ? 1 : 0;
  }
  std::printf("verification: %zu/%zu checks passed\n", passed, results.size());
  return passed == results.size() ? kExitOk : kExitVerifyFailure;
}

int do_fuse_offline(const std::string& theta_p_path,
                    const std::string& theta_prev_path,
                    const std::string& theta_t_path,
                    const std::string& stats_path, const std::string& out_base,
                    double alpha, double gamma) {
  daf::fusion::FusionConfig cfg;
  cfg.alpha = alpha;
  cfg.gamma = gamma;
  const daf::io::OfflineFusion result = daf::io::fuse_offline(
      daf::io::load_checkpoint(theta_p_path),
      daf::io::load_checkpoint(theta_prev_path),
      daf::io::load_checkpoint(theta_t_path),
      daf::io::load_checkpoint(stats_path), cfg);
  daf::io::save_offline_fusion(result, cfg, out_base);
  std::printf(
      "fused task %lld: beta_min=%.6f beta_mean=%.6f beta_max=%.6f -> "
      "%s.{json,bin}\n",
      static_cast<long long>(result.task_index),
      result.beta.diagnostics.beta_min, result.beta.diagnostics.beta_mean,
      result.beta.diagnostics.beta_max, out_base.c_str());
  return kExitOk;
}

int do_report(const std::string& dir,
              const std::optional<std::string>& csv_out) {
  const daf::io::ReportTable table = daf::io::collect_reports(dir);
  std::fputs(daf::io::render_report_table(table).c_str(), stdout);
  if (csv_out) {
    daf::io::write_file_atomic(*csv_out, daf::io::report_table_csv(table));
    std::printf("wrote %s\n", csv_out->c_str());
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continual-learning adapter fusion workbench"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> run_seed;
  std::optional<std::string> run_output_dir;
  std::optional<double> run_alpha;
  std::optional<double> run_gamma;
  CLI::App* run = app.add_subcommand(
      "run", "Execute every configured strategy run and write artifacts");
  run->add_option("-c,--config", config_path, "Experiment config (JSON)")
      ->required();
  run->add_option("--seed", run_seed,
                  "Rebase every seed in the config onto this value");
  run->add_option("--output-dir", run_output_dir,
                  "Write artifacts here instead of the configured directory");
  run->add_option("--alpha", run_alpha,
                  "Override the curvature spread for every run");
  run->add_option("--gamma", run_gamma,
                  "Override the blend asymmetry for every run");

  std::uint64_t verify_seed = 1;
  CLI::App* verify = app.add_subcommand(
      "verify", "Run the numerical self-check suite and report residuals");
  verify->add_option("--seed", verify_seed, "Seed for the check instances");

  std::string theta_p_path;
  std::string theta_prev_path;
  std::string theta_t_path;
  std::string stats_path;
  std::string out_base;
  double alpha = daf::fusion::FusionConfig{}.alpha;
  double gamma = daf::fusion::FusionConfig{}.gamma;
  CLI::App* fuse = app.add_subcommand(
      "fuse-offline", "Replay one fusion step from checkpoint files");
  fuse->add_option("--theta-p", theta_p_path,
                   "Checkpoint base path for the average of past adapters")
      ->required();
  fuse->add_option("--theta-prev", theta_prev_path,
                   "Checkpoint base path for the previous global adapter")
      ->required();
  fuse->add_option("--theta-t", theta_t_path,
                   "Checkpoint base path for the new task adapter")
      ->required();
  fuse->add_option("--stats", stats_path,
                   "Checkpoint base path for the gradient/Fisher statistics")
      ->required();
  fuse->add_option("-o,--out", out_base, "Output checkpoint base path")
      ->required();
  fuse->add_option("--alpha", alpha, "Curvature spread above 1");
  fuse->add_option("--gamma", gamma,
                   "Blend asymmetry (0.5 reproduces the symmetric fusion)");

  std::string report_dir;
  std::optional<std::string> report_csv;
  CLI::App* report = app.add_subcommand(
      "report", "Summarize the run artifacts in a directory");
  report->add_option("dir", report_dir, "Directory holding *.report.json")
      ->required();
  report->add_option("--csv", report_csv, "Also export the table as CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*run) {
      return do_run(config_path, run_seed, run_output_dir, run_alpha,
                    run_gamma);
    }
    if (*verify) {
      return do_verify(verify_seed);
    }
    if (*fuse) {
      return do_fuse_offline(theta_p_path, theta_prev_path, theta_t_path,
                             stats_path, out_base, alpha, gamma);
    }
    if (*report) {
      return do_report(report_dir, report_csv);
    }
    std::fputs("error: no subcommand selected\n", stderr);
    return kExitUsage;
  } catch (const daf::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const daf::ShapeError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const daf::ContractError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const daf::io::VerifyFailure& e) {
    std::fprintf(stderr, "verification failure: %s\n", e.what());
    return kExitVerifyFailure;
  } catch (const daf::NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "unexpected failure: %s\n", e.what());
    return kExitNumeric;
  }
}
