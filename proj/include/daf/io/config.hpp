#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "daf/harness/strategy.hpp"
#include "daf/harness/task_stream.hpp"
#include "daf/model/backbone.hpp"

namespace daf::io {

// One named strategy run inside an experiment; the name doubles as the
// output file stem.
struct RunSpec {
  std::string name;
  harness::StrategyConfig strategy;
};

struct BackboneSpec {
  Index dim = 32;
  model::PretrainConfig pretrain;
};

// A full experiment: one data stream, one pretrained backbone shared by all
// runs, and the list of strategy runs to execute against it. Every field
// has a default, so "{}" is the minimal valid config (one default run).
// Component seeds left unset in the file are derived from the master seed
// with per-component salts, so two components never share a stream.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string output_dir;  // empty: resolved against DAF_OUTPUT_ROOT or "."
  bool record_fusion_inputs = false;     // force recording on every run
  bool verify_fusion_identities = false; // replay + audit recorded fusions
  harness::StreamConfig stream;
  BackboneSpec backbone;
  std::vector<RunSpec> runs;
};

// Structural validation beyond the per-component checks: at least one run,
// unique filesystem-safe names, every nested config valid. ConfigError.
void validate_experiment_config(const ExperimentConfig& cfg);

// Strict parse: unknown keys anywhere are a ConfigError naming the full key
// path; JSON syntax errors carry the parser's line/column message. `source`
// names the input in error messages (usually the file path).
[[nodiscard]] ExperimentConfig parse_experiment_config(
    const std::string& text, const std::string& source);

// Canonical full rendering: every field materialized in a fixed key order.
// parse_experiment_config(serialize_experiment_config(cfg)) == cfg.
[[nodiscard]] std::string serialize_experiment_config(
    const ExperimentConfig& cfg);

[[nodiscard]] ExperimentConfig load_experiment_config(const std::string& path);

// Rebases every seed in the experiment onto `seed` — master plus all
// derived component streams — regardless of what the file specified.
void override_seeds(ExperimentConfig& cfg, std::uint64_t seed);

}  // namespace daf::io
