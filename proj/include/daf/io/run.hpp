#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "daf/io/checkpoint.hpp"
#include "daf/io/config.hpp"

namespace daf::io {

// A recomputation or audit mismatch in otherwise well-formed data. The CLI
// maps it to its own exit code, distinct from config and numeric errors.
struct VerifyFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Applied when a config leaves output_dir empty.
inline constexpr const char* kOutputRootEnvVar = "DAF_OUTPUT_ROOT";

// The configured directory as-is when nonempty; otherwise the environment
// root, otherwise ".".
[[nodiscard]] std::string resolve_output_dir(const std::string& configured);

// Lower-triangle accuracy matrix as CSV: one line per session t listing the
// accuracies on tasks 1..t, full f64 precision, '#' lines are comments.
[[nodiscard]] std::string accuracy_matrix_csv(const harness::AccuracyMatrix& a);
[[nodiscard]] harness::AccuracyMatrix parse_accuracy_matrix_csv(
    const std::string& text);

struct RunArtifacts {
  std::string name;
  std::string strategy;
  std::string init;
  harness::Metrics metrics;
  std::vector<std::string> files;  // relative to output_dir, in write order
};

struct ExperimentResult {
  std::string output_dir;
  double pretrain_accuracy = 0.0;
  std::vector<RunArtifacts> runs;
};

// Validates the config, builds the stream, pretrains one shared backbone,
// executes every run, and writes each run's artifacts under the resolved
// output directory: <name>.accuracy.csv, <name>.checkpoint.{json,bin},
// <name>.report.json, plus <name>.fusion.task<t>.{json,bin} when fusion
// inputs are recorded. Identical configs produce byte-identical artifacts.
// With verify_fusion_identities set, every recorded fusion step is replayed
// (coefficients and fused vector must match bitwise, and the stability
// constraint must hold to 1e-10); a mismatch raises VerifyFailure.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

// One fusion step replayed outside a run, from four checkpoints.
struct OfflineFusion {
  model::ParameterVector fused;
  fusion::BetaVector beta;
  Index task_index = 0;
  std::string strategy;
};

// Layout disagreement between the checkpoints is a ShapeError. The blend
// uses the asymmetric form at cfg.gamma; its default 0.5 reproduces the
// symmetric fusion bit for bit.
[[nodiscard]] OfflineFusion fuse_offline(const Checkpoint& theta_p,
                                         const Checkpoint& theta_prev_star,
                                         const Checkpoint& theta_t,
                                         const Checkpoint& statistics,
                                         const fusion::FusionConfig& cfg = {});

// Writes <out>.{json,bin} (the fused vector) and <out>.beta.json (the
// coefficient diagnostics plus the applied alpha/gamma).
void save_offline_fusion(const OfflineFusion& result,
                         const fusion::FusionConfig& cfg,
                         const std::string& out_base);

}  // namespace daf::io
