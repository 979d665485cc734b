#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "daf/classifier/prototype.hpp"
#include "daf/fusion/fusion.hpp"
#include "daf/harness/strategy.hpp"

namespace daf::io {

inline constexpr int kCheckpointFormatVersion = 1;

// Serialized state container: a JSON manifest <base>.json (format version,
// adapter layout, task index, strategy tag, named segments with offsets and
// content hashes, named scalars) next to the raw payload <base>.bin — the
// segments' f64 values concatenated in manifest order, little endian.
// Loading verifies lengths and re-hashes every segment, so a corrupted or
// truncated payload cannot round-trip silently.
struct Checkpoint {
  int format_version = kCheckpointFormatVersion;
  model::AdapterLayout layout;
  Index task_index = 0;
  std::string strategy;
  std::vector<std::pair<std::string, Eigen::ArrayXd>> segments;
  std::map<std::string, double> scalars;

  [[nodiscard]] bool has_segment(const std::string& name) const;
  // ContractError when the segment is absent.
  [[nodiscard]] const Eigen::ArrayXd& segment(const std::string& name) const;
};

// `base_path` carries no extension; the pair <base>.bin then <base>.json is
// written atomically, manifest last, so a valid manifest implies a complete
// payload.
void save_checkpoint(const Checkpoint& ckpt, const std::string& base_path);

// ConfigError for missing or unparseable files, ContractError for any
// structural or integrity violation (bad version, length mismatch,
// non-contiguous segments, hash mismatch).
[[nodiscard]] Checkpoint load_checkpoint(const std::string& base_path);

// Full retained state of a finished run: the global adapter state plus the
// classifier's per-class feature Gaussians and prototypes.
[[nodiscard]] Checkpoint make_state_checkpoint(
    const std::string& strategy, const fusion::GlobalState& state,
    const classifier::GaussianStore& gaussians,
    const classifier::PrototypeStore& prototypes);

struct RunState {
  std::string strategy;
  fusion::GlobalState state;
  classifier::GaussianStore gaussians;
  classifier::PrototypeStore prototypes;
};

// Inverse of make_state_checkpoint, with every unpacked piece revalidated.
[[nodiscard]] RunState unpack_state_checkpoint(const Checkpoint& ckpt);

// Single adapter-shaped vector stored under the generic segment name
// "theta".
[[nodiscard]] Checkpoint make_vector_checkpoint(
    const model::ParameterVector& theta, const std::string& strategy,
    Index task_index);

// Everything one task's fusion step consumed: the three parameter vectors
// plus the gradient/Fisher statistics, in a single file.
[[nodiscard]] Checkpoint make_fusion_inputs_checkpoint(
    const std::string& strategy, const harness::FusionRecord& record);

// The adapter-shaped vector a checkpoint contributes when asked to play
// `role` (e.g. "theta_p"): the role-named segment when present, else the
// generic "theta", else the retained "theta_star" — so recorded fusion
// inputs, plain vectors, and full run checkpoints are all accepted.
[[nodiscard]] model::ParameterVector checkpoint_vector(const Checkpoint& ckpt,
                                                       const std::string& role);

// Fusion statistics from a recorded-inputs checkpoint: grad/fisher segments
// plus the f_min/f_mean scalars, revalidated for internal consistency.
[[nodiscard]] stats::FusionStatistics checkpoint_statistics(
    const Checkpoint& ckpt);

}  // namespace daf::io
