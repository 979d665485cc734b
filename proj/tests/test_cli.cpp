#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <json.hpp>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "daf/io/checkpoint.hpp"
#include "daf/io/config.hpp"
#include "daf/io/fs.hpp"
#include "daf/io/report.hpp"
#include "daf/io/run.hpp"

using namespace daf;
namespace fs = std::filesystem;

namespace {

// Fresh scratch directory per test context, under the test runner's cwd.
std::string scratch(const std::string& name) {
  const fs::path dir = fs::current_path() / "test_cli_scratch" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

// Small but non-degenerate experiment: enough width and pretraining that
// ReLU features never collapse to zero.
io::ExperimentConfig small_experiment(const std::string& out_dir) {
  io::ExperimentConfig cfg;
  cfg.seed = 42;
  cfg.output_dir = out_dir;
  cfg.stream.num_tasks = 3;
  cfg.stream.classes_per_task = 2;
  cfg.stream.input_dim = 6;
  cfg.stream.samples_per_class = 12;
  cfg.stream.test_samples_per_class = 6;
  cfg.stream.pretrain_classes = 3;
  cfg.stream.pretrain_samples_per_class = 8;
  cfg.stream.separation = 3.0;
  cfg.stream.seed = 77;
  cfg.backbone.dim = 8;
  cfg.backbone.pretrain.epochs = 4;
  cfg.backbone.pretrain.batch = 12;
  cfg.backbone.pretrain.seed = 11;

  io::RunSpec run;
  run.name = "daf-robust";
  run.strategy.strategy = "daf";
  run.strategy.init = "robust";
  run.strategy.rank = 2;
  run.strategy.epochs = 6;
  run.strategy.batch = 12;
  run.strategy.lr = 0.05;
  run.strategy.seed = 5;
  cfg.runs.push_back(run);
  return cfg;
}

std::map<std::string, std::string> read_dir_bytes(const std::string& dir) {
  std::map<std::string, std::string> contents;
  for (const auto& entry : fs::directory_iterator(dir)) {
    contents[entry.path().filename().string()] =
        io::read_file(entry.path().string());
  }
  return contents;
}

bool arrays_equal(const Eigen::ArrayXd& a, const Eigen::ArrayXd& b) {
  return a.size() == b.size() && (a == b).all();
}

#ifdef DAF_CLI_PATH
int run_cli(const std::string& args, const std::string& env_prefix = "") {
  const std::string cmd = env_prefix + (env_prefix.empty() ? "" : " ") +
                          std::string(DAF_CLI_PATH) + " " + args +
                          " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WEXITSTATUS(status);
}
#endif

}  // namespace

TEST_CASE("minimal config materializes defaults and round-trips") {
  const io::ExperimentConfig cfg = io::parse_experiment_config("{}", "<test>");
  REQUIRE(cfg.runs.size() == 1);
  CHECK(cfg.runs[0].name == "daf-robust");
  CHECK(cfg.runs[0].strategy.strategy == "daf");
  CHECK(cfg.seed == 1);
  // Component seeds are derived, not shared.
  CHECK(cfg.stream.seed != cfg.backbone.pretrain.seed);
  CHECK(cfg.stream.seed != cfg.runs[0].strategy.seed);

  const std::string canonical = io::serialize_experiment_config(cfg);
  const io::ExperimentConfig reparsed =
      io::parse_experiment_config(canonical, "<round-trip>");
  CHECK(io::serialize_experiment_config(reparsed) == canonical);
  io::validate_experiment_config(reparsed);
}

TEST_CASE("explicit seeds survive the round trip unchanged") {
  const std::string text = R"({
    "seed": 9,
    "stream": {"seed": 1234567890123456789},
    "backbone": {"seed": 17},
    "runs": [{"strategy": "ema", "init": "random", "seed": 3}]
  })";
  const io::ExperimentConfig cfg = io::parse_experiment_config(text, "<test>");
  CHECK(cfg.seed == 9);
  CHECK(cfg.stream.seed == 1234567890123456789ull);
  CHECK(cfg.backbone.pretrain.seed == 17);
  CHECK(cfg.runs[0].strategy.seed == 3);
  CHECK(cfg.runs[0].name == "ema-random");

  io::ExperimentConfig rebased = cfg;
  io::override_seeds(rebased, 9);
  CHECK(rebased.stream.seed != cfg.stream.seed);  // explicit value replaced
  CHECK(rebased.runs[0].strategy.seed != 3);
}

TEST_CASE("unknown keys are rejected with their full path") {
  const auto rejects = [](const std::string& text, const std::string& needle) {
    try {
      (void)io::parse_experiment_config(text, "<test>");
      FAIL_CHECK("expected ConfigError for " << needle);
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
  };
  rejects(R"({"strem": {}})", "strem");
  rejects(R"({"stream": {"seperation": 1.0}})", "stream.seperation");
  rejects(R"({"backbone": {"width": 4}})", "backbone.width");
  rejects(R"({"runs": [{"alpa": 1.0}]})", "runs[0].alpa");
  rejects(R"({"runs": [{}, {"gama": 0.5}]})", "runs[1].gama");
}

TEST_CASE("type and syntax errors are ConfigError with location") {
  try {
    (void)io::parse_experiment_config("{\n  \"seed\": ,\n}", "<test>");
    FAIL_CHECK("expected ConfigError");
  } catch (const ConfigError& e) {
    // The JSON parser's message names the offending line.
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  CHECK_THROWS_AS(
      (void)io::parse_experiment_config(R"({"seed": "nine"})", "<test>"),
      ConfigError);
  CHECK_THROWS_AS(
      (void)io::parse_experiment_config(R"({"seed": -4})", "<test>"),
      ConfigError);
  CHECK_THROWS_AS(
      (void)io::parse_experiment_config(R"({"runs": []})", "<test>"),
      ConfigError);
  CHECK_THROWS_AS((void)io::parse_experiment_config("[1,2]", "<test>"),
                  ConfigError);
}

TEST_CASE("structural validation rejects duplicate and unsafe run names") {
  io::ExperimentConfig cfg = small_experiment("unused");
  cfg.runs.push_back(cfg.runs[0]);  // duplicate name
  CHECK_THROWS_AS(io::validate_experiment_config(cfg), ConfigError);

  cfg = small_experiment("unused");
  cfg.runs[0].name = "../evil";
  CHECK_THROWS_AS(io::validate_experiment_config(cfg), ConfigError);

  cfg = small_experiment("unused");
  cfg.runs.clear();
  CHECK_THROWS_AS(io::validate_experiment_config(cfg), ConfigError);
}

TEST_CASE("state checkpoints round-trip bitwise") {
  const std::string dir = scratch("ckpt_roundtrip");
  const model::AdapterLayout layout{3, 2, 2};
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Eigen::ArrayXd values(layout.size());
  for (Index i = 0; i < values.size(); ++i) {
    values[i] = dist(rng);
  }
  fusion::GlobalState state =
      fusion::GlobalState::initialize(model::ParameterVector(layout, values));
  state.task_index = 4;

  RowMatrixXd feats(5, 3);
  for (Index r = 0; r < 5; ++r) {
    for (Index c = 0; c < 3; ++c) {
      feats(r, c) = dist(rng) + 2.0;
    }
  }
  classifier::GaussianStore gaussians;
  gaussians[7] = classifier::fit_gaussian(7, feats, 1e-6);
  gaussians[2] = classifier::fit_gaussian(2, feats * 0.5, 1e-6);
  const classifier::PrototypeStore prototypes =
      classifier::align_old_prototypes(gaussians, 16, 123);

  const io::Checkpoint saved =
      io::make_state_checkpoint("daf", state, gaussians, prototypes);
  io::save_checkpoint(saved, dir + "/state");
  const io::Checkpoint loaded = io::load_checkpoint(dir + "/state");
  CHECK(loaded.layout == layout);
  CHECK(loaded.task_index == 4);
  CHECK(loaded.strategy == "daf");

  const io::RunState unpacked = io::unpack_state_checkpoint(loaded);
  CHECK(unpacked.strategy == "daf");
  CHECK(unpacked.state.task_index == 4);
  CHECK(arrays_equal(unpacked.state.theta_star.data, state.theta_star.data));
  CHECK(arrays_equal(unpacked.state.theta_avg.data, state.theta_avg.data));
  REQUIRE(unpacked.gaussians.size() == 2);
  REQUIRE(unpacked.prototypes.size() == 2);
  for (const auto& [class_id, gaussian] : gaussians) {
    CHECK(arrays_equal(unpacked.gaussians.at(class_id).mu.array(),
                       gaussian.mu.array()));
    CHECK(arrays_equal(unpacked.gaussians.at(class_id).var.array(),
                       gaussian.var.array()));
    CHECK(arrays_equal(unpacked.prototypes.at(class_id).w.array(),
                       prototypes.at(class_id).w.array()));
  }
}

TEST_CASE("checkpoint loading detects corruption") {
  const std::string dir = scratch("ckpt_corrupt");
  const model::AdapterLayout layout{2, 1, 2};
  const model::ParameterVector theta(
      layout, Eigen::ArrayXd::LinSpaced(layout.size(), 0.25, 2.0));
  io::save_checkpoint(io::make_vector_checkpoint(theta, "daf", 1),
                      dir + "/v");

  SUBCASE("bit flip in the payload") {
    std::string payload = io::read_file(dir + "/v.bin");
    payload[3] = static_cast<char>(payload[3] ^ 0x40);
    io::write_file_atomic(dir + "/v.bin", payload);
    CHECK_THROWS_AS((void)io::load_checkpoint(dir + "/v"), ContractError);
  }
  SUBCASE("truncated payload") {
    const std::string payload = io::read_file(dir + "/v.bin");
    io::write_file_atomic(dir + "/v.bin",
                          payload.substr(0, payload.size() - 8));
    CHECK_THROWS_AS((void)io::load_checkpoint(dir + "/v"), ContractError);
  }
  SUBCASE("missing manifest") {
    fs::remove(dir + "/v.json");
    CHECK_THROWS_AS((void)io::load_checkpoint(dir + "/v"), ConfigError);
  }
  SUBCASE("unknown manifest key") {
    std::string manifest = io::read_file(dir + "/v.json");
    manifest.insert(manifest.find('{') + 1, "\"surprise\": 1,");
    io::write_file_atomic(dir + "/v.json", manifest);
    CHECK_THROWS_AS((void)io::load_checkpoint(dir + "/v"), ContractError);
  }
}

TEST_CASE("fusion-input checkpoints resolve roles and statistics") {
  const std::string dir = scratch("ckpt_roles");
  const model::AdapterLayout layout{2, 1, 2};
  const Index n = layout.size();
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  const auto draw = [&] {
    Eigen::ArrayXd out(n);
    for (Index i = 0; i < n; ++i) {
      out[i] = dist(rng);
    }
    return out;
  };

  harness::FusionRecord record;
  record.task_index = 5;
  record.theta_p = model::ParameterVector(layout, draw());
  record.theta_prev_star = model::ParameterVector(layout, draw());
  record.theta_t = model::ParameterVector(layout, draw());
  record.statistics.grad = model::ParameterVector(layout, draw());
  record.statistics.fisher = model::ParameterVector(layout, draw().square());
  const auto [f_min, f_mean] =
      stats::summarize(record.statistics.fisher.data);
  record.statistics.f_min = f_min;
  record.statistics.f_mean = f_mean;

  io::save_checkpoint(io::make_fusion_inputs_checkpoint("daf", record),
                      dir + "/inputs");
  const io::Checkpoint loaded = io::load_checkpoint(dir + "/inputs");
  CHECK(arrays_equal(io::checkpoint_vector(loaded, "theta_p").data,
                     record.theta_p.data));
  CHECK(arrays_equal(io::checkpoint_vector(loaded, "theta_prev_star").data,
                     record.theta_prev_star.data));
  CHECK(arrays_equal(io::checkpoint_vector(loaded, "theta_t").data,
                     record.theta_t.data));
  // Statistics survive the JSON round trip exactly: checkpoint_statistics
  // revalidates the stored extremes against a fresh summary.
  const stats::FusionStatistics st = io::checkpoint_statistics(loaded);
  CHECK(arrays_equal(st.grad.data, record.statistics.grad.data));
  CHECK(arrays_equal(st.fisher.data, record.statistics.fisher.data));
  CHECK(st.f_min == record.statistics.f_min);
  CHECK(st.f_mean == record.statistics.f_mean);

  // A plain vector checkpoint serves any theta role; a state checkpoint
  // falls back to its retained global adapter.
  const model::ParameterVector v(layout, draw());
  io::save_checkpoint(io::make_vector_checkpoint(v, "daf", 0), dir + "/vec");
  const io::Checkpoint vec = io::load_checkpoint(dir + "/vec");
  CHECK(arrays_equal(io::checkpoint_vector(vec, "theta_p").data, v.data));
  CHECK(arrays_equal(io::checkpoint_vector(vec, "theta_t").data, v.data));
  CHECK_THROWS_AS((void)io::checkpoint_statistics(vec), ContractError);
}

TEST_CASE("accuracy csv codec round-trips exactly") {
  harness::AccuracyMatrix matrix;
  matrix.rows = {{0.9871234567890123},
                 {0.8765432109876543, 1.0 / 3.0},
                 {0.1, 0.2, 0.3333333333333333}};
  const std::string csv = io::accuracy_matrix_csv(matrix);
  const harness::AccuracyMatrix reparsed = io::parse_accuracy_matrix_csv(csv);
  REQUIRE(reparsed.tasks() == 3);
  for (Index t = 1; t <= 3; ++t) {
    for (Index j = 1; j <= t; ++j) {
      CHECK(reparsed.at(t, j) == matrix.at(t, j));
    }
  }
  CHECK_THROWS_AS((void)io::parse_accuracy_matrix_csv("2,0.5\n"), ConfigError);
  CHECK_THROWS_AS((void)io::parse_accuracy_matrix_csv("1,banana\n"),
                  ConfigError);
}

TEST_CASE("empty output_dir falls back to the environment root") {
  ::unsetenv(io::kOutputRootEnvVar);
  CHECK(io::resolve_output_dir("chosen") == "chosen");
  CHECK(io::resolve_output_dir("") == ".");
  ::setenv(io::kOutputRootEnvVar, "/tmp/somewhere", 1);
  CHECK(io::resolve_output_dir("") == "/tmp/somewhere");
  CHECK(io::resolve_output_dir("chosen") == "chosen");  // config still wins
  ::unsetenv(io::kOutputRootEnvVar);

#ifdef DAF_CLI_PATH
  const std::string dir = scratch("env_root");
  io::ExperimentConfig cfg = small_experiment("");
  io::write_file_atomic(dir + "/exp.json",
                        io::serialize_experiment_config(cfg));
  CHECK(run_cli("run --config " + dir + "/exp.json",
                std::string(io::kOutputRootEnvVar) + "=" + dir + "/rooted") ==
        0);
  CHECK(fs::exists(dir + "/rooted/daf-robust.report.json"));
  CHECK(fs::exists(dir + "/rooted/daf-robust.accuracy.csv"));
#endif
}

TEST_CASE("run_experiment writes deterministic artifacts") {
  const std::string dir_a = scratch("run_a");
  const std::string dir_b = scratch("run_b");
  io::ExperimentConfig cfg = small_experiment(dir_a);
  io::RunSpec baseline;
  baseline.name = "finetune-random";
  baseline.strategy.strategy = "finetune";
  baseline.strategy.init = "random";
  baseline.strategy.rank = 2;
  baseline.strategy.epochs = 6;
  baseline.strategy.batch = 12;
  baseline.strategy.lr = 0.05;
  baseline.strategy.seed = 5;
  cfg.runs.push_back(baseline);

  const io::ExperimentResult first = io::run_experiment(cfg);
  cfg.output_dir = dir_b;
  const io::ExperimentResult second = io::run_experiment(cfg);

  REQUIRE(first.runs.size() == 2);
  const auto bytes_a = read_dir_bytes(dir_a);
  const auto bytes_b = read_dir_bytes(dir_b);
  REQUIRE(!bytes_a.empty());
  REQUIRE(bytes_a.size() == bytes_b.size());
  for (const auto& [name, content] : bytes_a) {
    CAPTURE(name);
    REQUIRE(bytes_b.contains(name));
    CHECK(content == bytes_b.at(name));
  }

  // The artifact list matches what landed on disk: 4 files per run.
  std::vector<std::string> expected;
  for (const io::RunArtifacts& run : first.runs) {
    CHECK(run.files.size() == 4);
    expected.insert(expected.end(), run.files.begin(), run.files.end());
  }
  CHECK(expected.size() == bytes_a.size());
  for (const std::string& name : expected) {
    CHECK(bytes_a.contains(name));
  }

  // Reports summarize cleanly and match their CSVs.
  const io::ReportTable table = io::collect_reports(dir_a);
  REQUIRE(table.rows.size() == 2);
  CHECK(table.rows[0].name == "daf-robust");
  CHECK(table.rows[0].has_beta);
  CHECK(table.rows[0].metrics.avg_accuracy ==
        first.runs[0].metrics.avg_accuracy);
  CHECK(table.rows[1].name == "finetune-random");
  CHECK_FALSE(table.rows[1].has_beta);
  const std::string rendered = io::render_report_table(table);
  CHECK(rendered.find("daf-robust") != std::string::npos);
  const std::string exported = io::report_table_csv(table);
  CHECK(exported.find("finetune-random,finetune,random,") !=
        std::string::npos);
}

TEST_CASE("report collection detects tampered metrics") {
  const std::string dir = scratch("report_tamper");
  io::ExperimentConfig cfg = small_experiment(dir);
  (void)io::run_experiment(cfg);

  nlohmann::json report =
      nlohmann::json::parse(io::read_file(dir + "/daf-robust.report.json"));
  report["metrics"]["avg_accuracy"] =
      report["metrics"]["avg_accuracy"].get<double>() + 1e-6;
  io::write_file_atomic(dir + "/daf-robust.report.json",
                        report.dump(2) + "\n");
  CHECK_THROWS_AS((void)io::collect_reports(dir), io::VerifyFailure);

  CHECK_THROWS_AS((void)io::collect_reports(scratch("report_empty")),
                  ConfigError);
}

TEST_CASE("offline fusion replays the recorded step bitwise") {
  const std::string dir = scratch("offline");
  io::ExperimentConfig cfg = small_experiment(dir);
  cfg.record_fusion_inputs = true;
  cfg.verify_fusion_identities = true;
  (void)io::run_experiment(cfg);

  const io::Checkpoint inputs =
      io::load_checkpoint(dir + "/daf-robust.fusion.task3");
  const io::Checkpoint final_state =
      io::load_checkpoint(dir + "/daf-robust.checkpoint");

  // Replaying the last recorded fusion step must land exactly on the run's
  // retained global adapter.
  const io::OfflineFusion replay =
      io::fuse_offline(inputs, inputs, inputs, inputs);
  CHECK(arrays_equal(replay.fused.data, final_state.segment("theta_star")));
  CHECK(replay.task_index == 3);

  // gamma = 0.5 spelled explicitly is the default blend, bitwise.
  fusion::FusionConfig half;
  half.gamma = 0.5;
  const io::OfflineFusion explicit_half =
      io::fuse_offline(inputs, inputs, inputs, inputs, half);
  CHECK(arrays_equal(explicit_half.fused.data, replay.fused.data));

  // Three copies of the same vector fuse back to that vector bit-exactly
  // (the blend is written as theta_t plus beta-scaled differences). A state
  // checkpoint serves the theta roles through its retained adapter.
  const io::OfflineFusion identity =
      io::fuse_offline(final_state, final_state, final_state, inputs);
  CHECK(arrays_equal(identity.fused.data, final_state.segment("theta_star")));

  // Saved artifacts: fused vector checkpoint plus coefficient summary.
  io::save_offline_fusion(replay, fusion::FusionConfig{}, dir + "/replayed");
  const io::Checkpoint reloaded = io::load_checkpoint(dir + "/replayed");
  CHECK(arrays_equal(reloaded.segment("theta"), replay.fused.data));
  CHECK(io::read_file(dir + "/replayed.beta.json").find("beta_mean") !=
        std::string::npos);

  // Layout mismatch across inputs is a ShapeError.
  const model::AdapterLayout other{3, 1, 2};
  io::save_checkpoint(
      io::make_vector_checkpoint(model::ParameterVector::zeros(other), "daf",
                                 0),
      dir + "/bad");
  const io::Checkpoint bad = io::load_checkpoint(dir + "/bad");
  CHECK_THROWS_AS((void)io::fuse_offline(bad, inputs, inputs, inputs),
                  ShapeError);
}

#ifdef DAF_CLI_PATH

TEST_CASE("cli exit codes match the failure taxonomy") {
  const std::string dir = scratch("cli_codes");

  // Usage errors: unknown flag, missing config, malformed config.
  CHECK(run_cli("frobnicate") == 2);
  CHECK(run_cli("run --config " + dir + "/missing.json") == 2);
  io::write_file_atomic(dir + "/bad.json", "{\"strem\": {}}\n");
  CHECK(run_cli("run --config " + dir + "/bad.json") == 2);

  // Verification failure: the clip audit under an injected window.
  CHECK(run_cli("verify --seed 3") == 0);
  CHECK(run_cli("verify --seed 3", "DAF_TEST_CLIP_RANGE=0,1") == 1);

  // Numeric failure: a learning rate that overflows the forward pass.
  io::ExperimentConfig cfg = small_experiment(dir + "/out");
  cfg.runs[0].strategy.lr = 1e200;
  cfg.runs[0].strategy.epochs = 2;
  io::write_file_atomic(dir + "/explodes.json",
                        io::serialize_experiment_config(cfg));
  CHECK(run_cli("run --config " + dir + "/explodes.json") == 3);

  // Empty report directory.
  fs::create_directories(dir + "/empty");
  CHECK(run_cli("report " + dir + "/empty") == 2);

  // Help is success.
  CHECK(run_cli("--help") == 0);
}

TEST_CASE("cli run and report cooperate end to end") {
  const std::string dir = scratch("cli_flow");
  io::ExperimentConfig cfg = small_experiment(dir + "/out");
  io::write_file_atomic(dir + "/exp.json",
                        io::serialize_experiment_config(cfg));

  CHECK(run_cli("run --config " + dir + "/exp.json") == 0);
  CHECK(run_cli("report " + dir + "/out --csv " + dir + "/table.csv") == 0);
  CHECK(io::read_file(dir + "/table.csv").find("daf-robust") !=
        std::string::npos);

  // A second identical run, steered by --output-dir, matches byte for byte.
  CHECK(run_cli("run --config " + dir + "/exp.json --output-dir " + dir +
                "/out2") == 0);
  const auto first = read_dir_bytes(dir + "/out");
  const auto second = read_dir_bytes(dir + "/out2");
  REQUIRE(first.size() == second.size());
  for (const auto& [name, content] : first) {
    CAPTURE(name);
    CHECK(content == second.at(name));
  }

  // --seed rebases the experiment: different draws, still a valid run.
  CHECK(run_cli("run --config " + dir + "/exp.json --seed 99 --output-dir " +
                dir + "/out3") == 0);
  CHECK(io::read_file(dir + "/out3/daf-robust.accuracy.csv") !=
        io::read_file(dir + "/out/daf-robust.accuracy.csv"));
}

#endif  // DAF_CLI_PATH
