#include "daf/io/checkpoint.hpp"

#include <json.hpp>

#include <bit>
#include <cstdio>
#include <cstring>
#include <set>

#include "daf/io/fs.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are little-endian f64");

namespace daf::io {
namespace {

using nlohmann::ordered_json;

std::string hash_hex(const Eigen::ArrayXd& values) {
  const std::uint64_t h = fnv1a64(
      values.data(), static_cast<std::size_t>(values.size()) * sizeof(double));
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

[[noreturn]] void integrity_error(const std::string& base,
                                  const std::string& detail) {
  throw ContractError("checkpoint " + base + ": " + detail);
}

void check_known_keys(const nlohmann::json& object,
                      const std::set<std::string>& known,
                      const std::string& base, const std::string& where) {
  for (const auto& item : object.items()) {
    if (!known.contains(item.key())) {
      integrity_error(base, "unknown manifest key \"" + where + item.key() +
                                "\"");
    }
  }
}

}  // namespace

bool Checkpoint::has_segment(const std::string& name) const {
  for (const auto& [segment_name, values] : segments) {
    if (segment_name == name) {
      return true;
    }
  }
  return false;
}

const Eigen::ArrayXd& Checkpoint::segment(const std::string& name) const {
  for (const auto& [segment_name, values] : segments) {
    if (segment_name == name) {
      return values;
    }
  }
  throw ContractError("checkpoint: no segment named \"" + name + "\"");
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& base_path) {
  Index total = 0;
  std::set<std::string> seen;
  for (const auto& [name, values] : ckpt.segments) {
    if (name.empty() || !seen.insert(name).second) {
      throw ContractError("checkpoint: empty or duplicate segment name \"" +
                          name + "\"");
    }
    total += values.size();
  }

  ordered_json manifest;
  manifest["format_version"] = ckpt.format_version;
  manifest["layout"] = {{"dim", ckpt.layout.dim},
                        {"rank", ckpt.layout.rank},
                        {"layers", ckpt.layout.layers}};
  manifest["task_index"] = ckpt.task_index;
  manifest["strategy"] = ckpt.strategy;
  manifest["payload_doubles"] = total;
  manifest["segments"] = ordered_json::array();

  std::string payload;
  payload.reserve(static_cast<std::size_t>(total) * sizeof(double));
  Index offset = 0;
  for (const auto& [name, values] : ckpt.segments) {
    manifest["segments"].push_back({{"name", name},
                                    {"offset", offset},
                                    {"count", values.size()},
                                    {"hash", hash_hex(values)}});
    payload.append(reinterpret_cast<const char*>(values.data()),
                   static_cast<std::size_t>(values.size()) * sizeof(double));
    offset += values.size();
  }
  manifest["scalars"] = ordered_json::object();
  for (const auto& [name, value] : ckpt.scalars) {
    manifest["scalars"][name] = value;
  }

  // Payload first, manifest last: a readable manifest implies the payload it
  // describes is already in place.
  write_file_atomic(base_path + ".bin", payload);
  write_file_atomic(base_path + ".json", manifest.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::string& base_path) {
  const std::string manifest_text = read_file(base_path + ".json");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(manifest_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("checkpoint " + base_path + ".json: " + e.what());
  }
  if (!manifest.is_object()) {
    integrity_error(base_path, "manifest is not a JSON object");
  }
  check_known_keys(manifest,
                   {"format_version", "layout", "task_index", "strategy",
                    "payload_doubles", "segments", "scalars"},
                   base_path, "");

  Checkpoint ckpt;
  try {
    ckpt.format_version = manifest.at("format_version").get<int>();
    if (ckpt.format_version != kCheckpointFormatVersion) {
      integrity_error(base_path,
                      "unsupported format_version " +
                          std::to_string(ckpt.format_version) + ", expected " +
                          std::to_string(kCheckpointFormatVersion));
    }
    const auto& layout = manifest.at("layout");
    check_known_keys(layout, {"dim", "rank", "layers"}, base_path, "layout.");
    ckpt.layout.dim = layout.at("dim").get<Index>();
    ckpt.layout.rank = layout.at("rank").get<Index>();
    ckpt.layout.layers = layout.at("layers").get<Index>();
    ckpt.task_index = manifest.at("task_index").get<Index>();
    ckpt.strategy = manifest.at("strategy").get<std::string>();

    const std::string payload = read_file(base_path + ".bin");
    const Index total = manifest.at("payload_doubles").get<Index>();
    if (payload.size() != static_cast<std::size_t>(total) * sizeof(double)) {
      integrity_error(base_path,
                      "payload holds " + std::to_string(payload.size()) +
                          " bytes, manifest expects " +
                          std::to_string(total * sizeof(double)));
    }

    Index expected_offset = 0;
    std::set<std::string> seen;
    for (const auto& entry : manifest.at("segments")) {
      check_known_keys(entry, {"name", "offset", "count", "hash"}, base_path,
                       "segments[].");
      const auto name = entry.at("name").get<std::string>();
      const auto offset = entry.at("offset").get<Index>();
      const auto count = entry.at("count").get<Index>();
      if (name.empty() || !seen.insert(name).second) {
        integrity_error(base_path, "empty or duplicate segment \"" + name +
                                       "\"");
      }
      if (offset != expected_offset || count < 0 || offset + count > total) {
        integrity_error(base_path, "segment \"" + name +
                                       "\" does not tile the payload");
      }
      Eigen::ArrayXd values(count);
      std::memcpy(values.data(),
                  payload.data() +
                      static_cast<std::size_t>(offset) * sizeof(double),
                  static_cast<std::size_t>(count) * sizeof(double));
      const auto stored_hash = entry.at("hash").get<std::string>();
      if (hash_hex(values) != stored_hash) {
        integrity_error(base_path, "segment \"" + name +
                                       "\" hash mismatch: payload corrupted");
      }
      ckpt.segments.emplace_back(name, std::move(values));
      expected_offset += count;
    }
    if (expected_offset != total) {
      integrity_error(base_path, "segments cover " +
                                     std::to_string(expected_offset) + " of " +
                                     std::to_string(total) +
                                     " payload doubles");
    }

    for (const auto& item : manifest.at("scalars").items()) {
      if (!item.value().is_number()) {
        integrity_error(base_path,
                        "scalar \"" + item.key() + "\" is not a number");
      }
      ckpt.scalars[item.key()] = item.value().get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("checkpoint " + base_path + ".json: " + e.what());
  }
  return ckpt;
}

Checkpoint make_state_checkpoint(const std::string& strategy,
                                 const fusion::GlobalState& state,
                                 const classifier::GaussianStore& gaussians,
                                 const classifier::PrototypeStore& prototypes) {
  Checkpoint ckpt;
  ckpt.layout = state.theta_star.layout;
  ckpt.task_index = state.task_index;
  ckpt.strategy = strategy;
  ckpt.segments.emplace_back("theta_star", state.theta_star.data);
  ckpt.segments.emplace_back("theta_avg", state.theta_avg.data);
  for (const auto& [class_id, gaussian] : gaussians) {
    const std::string suffix = "/" + std::to_string(class_id);
    ckpt.segments.emplace_back("gaussian_mean" + suffix,
                               gaussian.mu.array());
    ckpt.segments.emplace_back("gaussian_var" + suffix, gaussian.var.array());
    if (!prototypes.contains(class_id)) {
      throw ContractError("checkpoint: class " + std::to_string(class_id) +
                          " has a Gaussian but no prototype");
    }
    ckpt.segments.emplace_back("prototype" + suffix,
                               prototypes.at(class_id).w.array());
  }
  if (prototypes.size() != gaussians.size()) {
    throw ContractError(
        "checkpoint: prototype and Gaussian class sets differ");
  }
  return ckpt;
}

RunState unpack_state_checkpoint(const Checkpoint& ckpt) {
  RunState run_state;
  run_state.strategy = ckpt.strategy;
  run_state.state.theta_star =
      model::ParameterVector(ckpt.layout, ckpt.segment("theta_star"));
  run_state.state.theta_avg =
      model::ParameterVector(ckpt.layout, ckpt.segment("theta_avg"));
  run_state.state.task_index = ckpt.task_index;

  for (const auto& [name, values] : ckpt.segments) {
    if (name == "theta_star" || name == "theta_avg") {
      continue;
    }
    const auto slash = name.find('/');
    if (slash == std::string::npos) {
      throw ContractError("checkpoint: unexpected segment \"" + name + "\"");
    }
    const std::string kind = name.substr(0, slash);
    int class_id = -1;
    try {
      class_id = std::stoi(name.substr(slash + 1));
    } catch (const std::exception&) {
      throw ContractError("checkpoint: malformed class id in segment \"" +
                          name + "\"");
    }
    if (kind == "gaussian_mean") {
      run_state.gaussians[class_id].class_id = class_id;
      run_state.gaussians[class_id].mu = values.matrix();
    } else if (kind == "gaussian_var") {
      run_state.gaussians[class_id].class_id = class_id;
      run_state.gaussians[class_id].var = values.matrix();
    } else if (kind == "prototype") {
      run_state.prototypes[class_id] = {class_id, values.matrix()};
    } else {
      throw ContractError("checkpoint: unexpected segment \"" + name + "\"");
    }
  }

  if (run_state.gaussians.size() != run_state.prototypes.size()) {
    throw ContractError(
        "checkpoint: prototype and Gaussian class sets differ");
  }
  for (const auto& [class_id, gaussian] : run_state.gaussians) {
    classifier::validate_class_gaussian(gaussian, 0.0, "checkpoint");
    if (!run_state.prototypes.contains(class_id)) {
      throw ContractError("checkpoint: class " + std::to_string(class_id) +
                          " has a Gaussian but no prototype");
    }
    classifier::validate_prototype(run_state.prototypes.at(class_id),
                                   "checkpoint");
  }
  return run_state;
}

Checkpoint make_vector_checkpoint(const model::ParameterVector& theta,
                                  const std::string& strategy,
                                  Index task_index) {
  Checkpoint ckpt;
  ckpt.layout = theta.layout;
  ckpt.task_index = task_index;
  ckpt.strategy = strategy;
  ckpt.segments.emplace_back("theta", theta.data);
  return ckpt;
}

Checkpoint make_fusion_inputs_checkpoint(const std::string& strategy,
                                         const harness::FusionRecord& record) {
  Checkpoint ckpt;
  ckpt.layout = record.theta_t.layout;
  ckpt.task_index = record.task_index;
  ckpt.strategy = strategy;
  ckpt.segments.emplace_back("theta_p", record.theta_p.data);
  ckpt.segments.emplace_back("theta_prev_star", record.theta_prev_star.data);
  ckpt.segments.emplace_back("theta_t", record.theta_t.data);
  ckpt.segments.emplace_back("grad", record.statistics.grad.data);
  ckpt.segments.emplace_back("fisher", record.statistics.fisher.data);
  ckpt.scalars["f_min"] = record.statistics.f_min;
  ckpt.scalars["f_mean"] = record.statistics.f_mean;
  return ckpt;
}

model::ParameterVector checkpoint_vector(const Checkpoint& ckpt,
                                         const std::string& role) {
  for (const std::string& name : {role, std::string("theta"),
                                  std::string("theta_star")}) {
    if (ckpt.has_segment(name)) {
      return model::ParameterVector(ckpt.layout, ckpt.segment(name));
    }
  }
  throw ContractError("checkpoint: no segment usable as " + role +
                      " (looked for \"" + role +
                      "\", \"theta\", \"theta_star\")");
}

stats::FusionStatistics checkpoint_statistics(const Checkpoint& ckpt) {
  stats::FusionStatistics statistics;
  statistics.grad = model::ParameterVector(ckpt.layout, ckpt.segment("grad"));
  statistics.fisher =
      model::ParameterVector(ckpt.layout, ckpt.segment("fisher"));
  if (!ckpt.scalars.contains("f_min") || !ckpt.scalars.contains("f_mean")) {
    throw ContractError(
        "checkpoint: statistics need the f_min and f_mean scalars");
  }
  statistics.f_min = ckpt.scalars.at("f_min");
  statistics.f_mean = ckpt.scalars.at("f_mean");
  stats::validate_statistics(statistics);
  return statistics;
}

}  // namespace daf::io
