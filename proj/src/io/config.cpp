#include "daf/io/config.hpp"

#include <json.hpp>

#include <cctype>
#include <cmath>
#include <optional>
#include <set>

#include "daf/io/fs.hpp"

namespace daf::io {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

// Component salts for seeds the file leaves unset.
constexpr std::uint64_t kStreamSeedSalt = 0x57ae;
constexpr std::uint64_t kBackboneSeedSalt = 0xbac8;
constexpr std::uint64_t kRunSeedSalt = 0x4a11;

[[noreturn]] void fail(const std::string& source, const std::string& what) {
  throw ConfigError(source + ": " + what);
}

double as_double(const json& v, const std::string& source,
                 const std::string& path) {
  if (!v.is_number()) {
    fail(source, path + " must be a number");
  }
  return v.get<double>();
}

Index as_count(const json& v, const std::string& source,
               const std::string& path) {
  if (!v.is_number_integer() && !v.is_number_unsigned()) {
    fail(source, path + " must be an integer");
  }
  return v.get<Index>();
}

std::uint64_t as_seed(const json& v, const std::string& source,
                      const std::string& path) {
  if (v.is_number_unsigned()) {
    return v.get<std::uint64_t>();
  }
  if (v.is_number_integer()) {
    const auto signed_value = v.get<std::int64_t>();
    if (signed_value < 0) {
      fail(source, path + " must be a nonnegative integer");
    }
    return static_cast<std::uint64_t>(signed_value);
  }
  fail(source, path + " must be a nonnegative integer");
}

bool as_bool(const json& v, const std::string& source,
             const std::string& path) {
  if (!v.is_boolean()) {
    fail(source, path + " must be a boolean");
  }
  return v.get<bool>();
}

std::string as_string(const json& v, const std::string& source,
                      const std::string& path) {
  if (!v.is_string()) {
    fail(source, path + " must be a string");
  }
  return v.get<std::string>();
}

void require_object(const json& v, const std::string& source,
                    const std::string& path) {
  if (!v.is_object()) {
    fail(source, path + " must be an object");
  }
}

harness::StreamConfig parse_stream(const json& node, const std::string& source,
                                   std::uint64_t master_seed) {
  require_object(node, source, "stream");
  harness::StreamConfig stream;
  std::optional<std::uint64_t> seed;
  for (const auto& item : node.items()) {
    const std::string path = "stream." + item.key();
    const json& v = item.value();
    if (item.key() == "num_tasks") {
      stream.num_tasks = as_count(v, source, path);
    } else if (item.key() == "classes_per_task") {
      stream.classes_per_task = as_count(v, source, path);
    } else if (item.key() == "input_dim") {
      stream.input_dim = as_count(v, source, path);
    } else if (item.key() == "samples_per_class") {
      stream.samples_per_class = as_count(v, source, path);
    } else if (item.key() == "test_samples_per_class") {
      stream.test_samples_per_class = as_count(v, source, path);
    } else if (item.key() == "pretrain_classes") {
      stream.pretrain_classes = as_count(v, source, path);
    } else if (item.key() == "pretrain_samples_per_class") {
      stream.pretrain_samples_per_class = as_count(v, source, path);
    } else if (item.key() == "separation") {
      stream.separation = as_double(v, source, path);
    } else if (item.key() == "seed") {
      seed = as_seed(v, source, path);
    } else {
      fail(source, "unknown key \"" + path + "\"");
    }
  }
  stream.seed = seed.value_or(derive_seed(master_seed, kStreamSeedSalt));
  return stream;
}

BackboneSpec parse_backbone(const json& node, const std::string& source,
                            std::uint64_t master_seed) {
  require_object(node, source, "backbone");
  BackboneSpec spec;
  std::optional<std::uint64_t> seed;
  for (const auto& item : node.items()) {
    const std::string path = "backbone." + item.key();
    const json& v = item.value();
    if (item.key() == "dim") {
      spec.dim = as_count(v, source, path);
    } else if (item.key() == "epochs") {
      spec.pretrain.epochs = static_cast<int>(as_count(v, source, path));
    } else if (item.key() == "lr") {
      spec.pretrain.lr = as_double(v, source, path);
    } else if (item.key() == "batch") {
      spec.pretrain.batch = as_count(v, source, path);
    } else if (item.key() == "momentum") {
      spec.pretrain.momentum = as_double(v, source, path);
    } else if (item.key() == "seed") {
      seed = as_seed(v, source, path);
    } else {
      fail(source, "unknown key \"" + path + "\"");
    }
  }
  spec.pretrain.seed =
      seed.value_or(derive_seed(master_seed, kBackboneSeedSalt));
  return spec;
}

RunSpec parse_run(const json& node, const std::string& source,
                  std::uint64_t master_seed, std::size_t index) {
  const std::string prefix = "runs[" + std::to_string(index) + "].";
  require_object(node, source, "runs[" + std::to_string(index) + "]");
  RunSpec spec;
  std::optional<std::uint64_t> seed;
  for (const auto& item : node.items()) {
    const std::string path = prefix + item.key();
    const json& v = item.value();
    if (item.key() == "name") {
      spec.name = as_string(v, source, path);
    } else if (item.key() == "strategy") {
      spec.strategy.strategy = as_string(v, source, path);
    } else if (item.key() == "init") {
      spec.strategy.init = as_string(v, source, path);
    } else if (item.key() == "rank") {
      spec.strategy.rank = as_count(v, source, path);
    } else if (item.key() == "epochs") {
      spec.strategy.epochs = as_count(v, source, path);
    } else if (item.key() == "lr") {
      spec.strategy.lr = as_double(v, source, path);
    } else if (item.key() == "batch") {
      spec.strategy.batch = as_count(v, source, path);
    } else if (item.key() == "momentum") {
      spec.strategy.momentum = as_double(v, source, path);
    } else if (item.key() == "beta_static") {
      spec.strategy.beta_static = as_double(v, source, path);
    } else if (item.key() == "ema_decay") {
      spec.strategy.ema_decay = as_double(v, source, path);
    } else if (item.key() == "alpha") {
      spec.strategy.fusion.alpha = as_double(v, source, path);
    } else if (item.key() == "gamma") {
      spec.strategy.fusion.gamma = as_double(v, source, path);
    } else if (item.key() == "clip_lo") {
      spec.strategy.fusion.clip_lo = as_double(v, source, path);
    } else if (item.key() == "clip_hi") {
      spec.strategy.fusion.clip_hi = as_double(v, source, path);
    } else if (item.key() == "denom_epsilon") {
      spec.strategy.fusion.denom_epsilon = as_double(v, source, path);
    } else if (item.key() == "replay_samples_per_class") {
      spec.strategy.replay_samples_per_class = as_count(v, source, path);
    } else if (item.key() == "variance_floor") {
      spec.strategy.variance_floor = as_double(v, source, path);
    } else if (item.key() == "record_fusion_inputs") {
      spec.strategy.record_fusion_inputs = as_bool(v, source, path);
    } else if (item.key() == "seed") {
      seed = as_seed(v, source, path);
    } else {
      fail(source, "unknown key \"" + path + "\"");
    }
  }
  spec.strategy.seed = seed.value_or(
      derive_seed(master_seed, kRunSeedSalt, static_cast<std::uint64_t>(index)));
  if (spec.name.empty()) {
    spec.name = spec.strategy.strategy + "-" + spec.strategy.init;
  }
  return spec;
}

bool filesystem_safe(const std::string& name) {
  if (name.empty() || !std::isalnum(static_cast<unsigned char>(name.front()))) {
    return false;
  }
  for (const char c : name) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-' &&
        c != '.') {
      return false;
    }
  }
  return true;
}

void validate_backbone_spec(const BackboneSpec& spec) {
  if (spec.dim < 1) {
    throw ConfigError("backbone.dim: must be at least 1, got " +
                      std::to_string(spec.dim));
  }
  if (spec.pretrain.epochs < 0) {
    throw ConfigError("backbone.epochs: must be nonnegative, got " +
                      std::to_string(spec.pretrain.epochs));
  }
  if (!(spec.pretrain.lr >= 0.0) || !std::isfinite(spec.pretrain.lr)) {
    throw ConfigError("backbone.lr: must be finite and nonnegative, got " +
                      format_double(spec.pretrain.lr));
  }
  if (spec.pretrain.batch < 1) {
    throw ConfigError("backbone.batch: must be at least 1, got " +
                      std::to_string(spec.pretrain.batch));
  }
  if (!(spec.pretrain.momentum >= 0.0) || spec.pretrain.momentum >= 1.0) {
    throw ConfigError("backbone.momentum: must lie in [0, 1), got " +
                      format_double(spec.pretrain.momentum));
  }
}

}  // namespace

void validate_experiment_config(const ExperimentConfig& cfg) {
  harness::validate_stream_config(cfg.stream);
  validate_backbone_spec(cfg.backbone);
  if (cfg.runs.empty()) {
    throw ConfigError("runs: must not be empty");
  }
  std::set<std::string> names;
  for (std::size_t i = 0; i < cfg.runs.size(); ++i) {
    const RunSpec& run = cfg.runs[i];
    const std::string where = "runs[" + std::to_string(i) + "]";
    if (!filesystem_safe(run.name)) {
      throw ConfigError(where + ".name: \"" + run.name +
                        "\" is not a safe file stem (alphanumeric start, "
                        "then [A-Za-z0-9._-])");
    }
    if (!names.insert(run.name).second) {
      throw ConfigError(where + ".name: duplicate \"" + run.name + "\"");
    }
    try {
      harness::validate_strategy_config(run.strategy);
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
}

ExperimentConfig parse_experiment_config(const std::string& text,
                                         const std::string& source) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    // The parser's message carries the line/column of the offending byte.
    throw ConfigError(source + ": " + e.what());
  }
  require_object(root, source, "config root");

  ExperimentConfig cfg;
  if (root.contains("seed")) {
    cfg.seed = as_seed(root.at("seed"), source, "seed");
  }

  bool saw_stream = false;
  bool saw_backbone = false;
  bool saw_runs = false;
  for (const auto& item : root.items()) {
    const json& v = item.value();
    if (item.key() == "seed") {
      // handled above so component defaults can derive from it
    } else if (item.key() == "output_dir") {
      cfg.output_dir = as_string(v, source, "output_dir");
    } else if (item.key() == "record_fusion_inputs") {
      cfg.record_fusion_inputs = as_bool(v, source, "record_fusion_inputs");
    } else if (item.key() == "verify_fusion_identities") {
      cfg.verify_fusion_identities =
          as_bool(v, source, "verify_fusion_identities");
    } else if (item.key() == "stream") {
      cfg.stream = parse_stream(v, source, cfg.seed);
      saw_stream = true;
    } else if (item.key() == "backbone") {
      cfg.backbone = parse_backbone(v, source, cfg.seed);
      saw_backbone = true;
    } else if (item.key() == "runs") {
      if (!v.is_array()) {
        fail(source, "runs must be an array");
      }
      if (v.empty()) {
        fail(source, "runs: must not be empty");
      }
      for (std::size_t i = 0; i < v.size(); ++i) {
        cfg.runs.push_back(parse_run(v[i], source, cfg.seed, i));
      }
      saw_runs = true;
    } else {
      fail(source, "unknown key \"" + item.key() + "\"");
    }
  }

  if (!saw_stream) {
    cfg.stream.seed = derive_seed(cfg.seed, kStreamSeedSalt);
  }
  if (!saw_backbone) {
    cfg.backbone.pretrain.seed = derive_seed(cfg.seed, kBackboneSeedSalt);
  }
  if (!saw_runs) {
    // Minimal config: one run with all defaults.
    RunSpec spec;
    spec.strategy.seed = derive_seed(cfg.seed, kRunSeedSalt, 0);
    spec.name = spec.strategy.strategy + "-" + spec.strategy.init;
    cfg.runs.push_back(std::move(spec));
  }
  return cfg;
}

std::string serialize_experiment_config(const ExperimentConfig& cfg) {
  ordered_json root;
  root["seed"] = cfg.seed;
  root["output_dir"] = cfg.output_dir;
  root["record_fusion_inputs"] = cfg.record_fusion_inputs;
  root["verify_fusion_identities"] = cfg.verify_fusion_identities;
  root["stream"] = {{"num_tasks", cfg.stream.num_tasks},
                    {"classes_per_task", cfg.stream.classes_per_task},
                    {"input_dim", cfg.stream.input_dim},
                    {"samples_per_class", cfg.stream.samples_per_class},
                    {"test_samples_per_class", cfg.stream.test_samples_per_class},
                    {"pretrain_classes", cfg.stream.pretrain_classes},
                    {"pretrain_samples_per_class",
                     cfg.stream.pretrain_samples_per_class},
                    {"separation", cfg.stream.separation},
                    {"seed", cfg.stream.seed}};
  root["backbone"] = {{"dim", cfg.backbone.dim},
                      {"epochs", cfg.backbone.pretrain.epochs},
                      {"lr", cfg.backbone.pretrain.lr},
                      {"batch", cfg.backbone.pretrain.batch},
                      {"momentum", cfg.backbone.pretrain.momentum},
                      {"seed", cfg.backbone.pretrain.seed}};
  root["runs"] = ordered_json::array();
  for (const RunSpec& run : cfg.runs) {
    const harness::StrategyConfig& s = run.strategy;
    root["runs"].push_back(
        {{"name", run.name},
         {"strategy", s.strategy},
         {"init", s.init},
         {"rank", s.rank},
         {"epochs", s.epochs},
         {"lr", s.lr},
         {"batch", s.batch},
         {"momentum", s.momentum},
         {"beta_static", s.beta_static},
         {"ema_decay", s.ema_decay},
         {"alpha", s.fusion.alpha},
         {"gamma", s.fusion.gamma},
         {"clip_lo", s.fusion.clip_lo},
         {"clip_hi", s.fusion.clip_hi},
         {"denom_epsilon", s.fusion.denom_epsilon},
         {"replay_samples_per_class", s.replay_samples_per_class},
         {"variance_floor", s.variance_floor},
         {"record_fusion_inputs", s.record_fusion_inputs},
         {"seed", s.seed}});
  }
  return root.dump(2) + "\n";
}

ExperimentConfig load_experiment_config(const std::string& path) {
  return parse_experiment_config(read_file(path), path);
}

void override_seeds(ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.seed = seed;
  cfg.stream.seed = derive_seed(seed, kStreamSeedSalt);
  cfg.backbone.pretrain.seed = derive_seed(seed, kBackboneSeedSalt);
  for (std::size_t i = 0; i < cfg.runs.size(); ++i) {
    cfg.runs[i].strategy.seed =
        derive_seed(seed, kRunSeedSalt, static_cast<std::uint64_t>(i));
  }
}

}  // namespace daf::io
