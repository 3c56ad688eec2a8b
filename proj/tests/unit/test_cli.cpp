// SPDX-License-Identifier: Apache-2.0
#include <cstdlib>
#include <filesystem>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "doctest.h"
#include "test_support.hpp"

#include "senscal/cli/commands.hpp"
#include "senscal/cli/config.hpp"
#include "senscal/error.hpp"
#include "senscal/evalx/report.hpp"
#include "senscal/sensbert/checkpoint.hpp"

using namespace senscal;
using namespace senscal::cli;
namespace fs = std::filesystem;

namespace {

/// Fast settings for pipeline plumbing.
void make_tiny(RunConfig &cfg, const fs::path &out) {
  apply_config_text(cfg, R"(
[run]
output_dir = )" + out.string() + R"(
[window]
M = 8
span_length = 2
[model]
h_dim = 8
heads = 2
blocks = 1
ff_dim = 8
[pretrain]
epochs = 1
max_steps = 6
[finetune]
epochs = 1
hidden = 4
max_steps = 6
[rf]
n_trees = 3
[synth]
n_samples = 600
[experiment]
p_list = 50, 100
)");
}

std::string manifest_value(const std::string &text, const std::string &key) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line))
    if (line.rfind(key + " = ", 0) == 0)
      return line.substr(key.size() + 3);
  return "<missing>";
}

#ifdef SENSCAL_CLI_PATH
struct RunResult {
  int code;
  std::string out;
};

RunResult run_cli(const std::string &args, const std::string &env = "") {
  const auto capture = fs::temp_directory_path() / "senscal-test-cli-out.txt";
  const std::string cmd = env + (env.empty() ? "" : " ") +
                          std::string(SENSCAL_CLI_PATH) + " " + args + " > " +
                          capture.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1,
          testing::slurp(capture)};
}
#endif

} // namespace

TEST_CASE("every key is unique, sectioned and documented") {
  std::set<std::string> seen;
  for (const auto &k : config_keys()) {
    CHECK(seen.insert(k.key).second);
    CHECK(k.key.find('.') != std::string::npos);
    CHECK_FALSE(k.help.empty());
  }
  RunConfig cfg;
  CHECK(cfg.get_size("window.M") == 128);
  CHECK(cfg.get_double("window.mask_prob") == 0.2);
  CHECK(cfg.get_size("window.span_length") == 8);
  CHECK(cfg.get_size("model.h_dim") == 64);
  CHECK(cfg.get_size("finetune.hidden") == 64);
  CHECK(cfg.get_double("pretrain.lr") == 1e-3);
  CHECK(cfg.get_doubles("experiment.p_list") ==
        std::vector<double>{10, 25, 50, 75, 100});
  CHECK_THROWS_AS(cfg.set("model.nope", "1"), ConfigError);
}

TEST_CASE("config text: sections, comments and errors name the line") {
  RunConfig cfg;
  apply_config_text(cfg, "# comment\n[model]\nh_dim = 32 ; trailing\n\n"
                         "[run]\nseed=9\n");
  CHECK(cfg.get_size("model.h_dim") == 32);
  CHECK(cfg.get_u64("run.seed") == 9);
  try {
    apply_config_text(cfg, "[model]\nh_dim = 8\nbogus = 1\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError &e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  CHECK_THROWS_AS(apply_config_text(cfg, "[model]\nno equals sign\n"),
                  ConfigError);
  cfg.set("model.h_dim", "many");
  CHECK_THROWS_AS(cfg.get_size("model.h_dim"), ConfigError);
  CHECK_THROWS_AS(apply_config_file(cfg, "/nonexistent/senscal.ini"),
                  ConfigError);
}

TEST_CASE("typed experiment settings") {
  RunConfig cfg;
  cfg.set("window.M", "16");
  cfg.set("run.seed", "5");
  auto e = experiment_config(cfg);
  CHECK(e.model.M == 16);
  CHECK(e.pretrain.overlap == 15); // auto = M - 1
  CHECK(e.pretrain.seed == 5);
  CHECK(e.finetune.seed == 5);
  CHECK(e.rf.seed == 5);
  cfg.set("window.span_length", "4");
  cfg.set("window.overlap", "8");
  CHECK(experiment_config(cfg).pretrain.overlap == 8);
  cfg.set("model.heads", "3");
  CHECK_THROWS_AS(experiment_config(cfg), ConfigError);
}

TEST_CASE("hashes track configuration changes") {
  RunConfig a, b;
  CHECK(a.hash() == b.hash());
  b.set("rf.n_trees", "7");
  CHECK(a.hash() != b.hash());
  CHECK(a.data_hash() == b.data_hash());
  b.set("window.M", "32");
  CHECK(a.data_hash() != b.data_hash());
  CHECK(hex64(0xabcULL) == "0000000000000abc");
}

TEST_CASE("SENSCAL_SEED overrides run.seed") {
  RunConfig cfg;
  cfg.set("run.seed", "3");
  ::unsetenv("SENSCAL_SEED");
  CHECK_FALSE(apply_env_seed(cfg));
  ::setenv("SENSCAL_SEED", "77", 1);
  CHECK(apply_env_seed(cfg));
  CHECK(cfg.get_u64("run.seed") == 77);
  ::setenv("SENSCAL_SEED", "x", 1);
  CHECK_THROWS_AS(apply_env_seed(cfg), ConfigError);
  ::unsetenv("SENSCAL_SEED");
}

TEST_CASE("sensor list parsing") {
  RunConfig cfg;
  cfg.set("data.sensors", "a = /x/a.csv, b=/y/b.csv");
  auto s = sensor_sources(cfg);
  REQUIRE(s.size() == 2);
  CHECK(s[0].name == "a");
  CHECK(s[0].path == "/x/a.csv");
  CHECK(s[1].name == "b");
  cfg.set("data.sensors", "just-a-path.csv");
  CHECK_THROWS_AS(sensor_sources(cfg), ConfigError);
  cfg.set("columns.reference", "");
  CHECK_FALSE(column_map(cfg).reference);
}

TEST_CASE("exceptions map onto exit codes") {
  CHECK(exit_code_for(ConfigError("x")) == kExitConfig);
  CHECK(exit_code_for(ParameterError("x")) == kExitConfig);
  CHECK(exit_code_for(DataError("x")) == kExitData);
  CHECK(exit_code_for(FormatError("x")) == kExitData);
  CHECK(exit_code_for(DimensionError("x")) == kExitData);
  CHECK(exit_code_for(NumericError("x")) == kExitNumeric);
  CHECK(exit_code_for(ContractError("x")) == kExitFailure);
  CHECK(exit_code_for(std::runtime_error("x")) == kExitFailure);
}

TEST_CASE("synthetic output is byte identical for a fixed seed") {
  auto dir = testing::temp_dir("cli-synth");
  RunConfig cfg;
  make_tiny(cfg, dir);
  std::ostringstream log;
  const auto p1 = (dir / "one.csv").string(), p2 = (dir / "two.csv").string();
  cmd_synth(cfg, log, p1);
  cmd_synth(cfg, log, p2);
  CHECK(testing::slurp(p1) == testing::slurp(p2));
  cfg.set("synth.seed", "8");
  const auto p3 = (dir / "three.csv").string();
  cmd_synth(cfg, log, p3);
  CHECK(testing::slurp(p1) != testing::slurp(p3));
}

TEST_CASE("pipeline commands run end to end and reuse the cache") {
  auto dir = testing::temp_dir("cli-pipeline");
  RunConfig cfg;
  make_tiny(cfg, dir);
  std::ostringstream log;
  const auto data = (dir / "a.csv").string();
  cmd_synth(cfg, log, data);
  cfg.set("synth.seed", "11");
  const auto data_b = (dir / "b.csv").string();
  cmd_synth(cfg, log, data_b);
  cfg.set("data.sensors", "a=" + data + ",b=" + data_b);

  std::vector<PreparedCounts> counts;
  cmd_prepare(cfg, log, &counts);
  REQUIRE(counts.size() == 2);
  CHECK_FALSE(counts[0].cache_hit);
  CHECK(counts[0].rows == 600);
  counts.clear();
  cmd_prepare(cfg, log, &counts);
  CHECK(counts[0].cache_hit);

  auto pre = cmd_pretrain(cfg, log, "a");
  const auto ckpt = (dir / "pretrain-a.sbckpt").string();
  CHECK(fs::exists(ckpt));
  CHECK(fs::exists(dir / "pretrain-a-loss.csv"));
  const std::string manifest = testing::slurp(pre.manifest);
  CHECK(manifest_value(manifest, "seed") == "42");
  CHECK(manifest.find("pretrain-a.sbckpt = ") != std::string::npos);
  CHECK(manifest_value(manifest, "config_hash") == hex64(cfg.hash()));

  cmd_finetune(cfg, log, ckpt, "");
  const auto model = (dir / "model-a.sbckpt").string();
  auto ck = sensbert::load_checkpoint(model);
  CHECK(ck.find("head/fc2.weight") != nullptr);

  cmd_evaluate(cfg, log, model);
  auto rep = evalx::load_report((dir / "report.csv").string());
  CHECK(rep.rows.size() == 3);
  CHECK(fs::exists(dir / "report.svg"));

  cfg.set("experiment.transfer_source", "a");
  cfg.set("experiment.transfer_targets", "b");
  cmd_experiment_transfer(cfg, log, ckpt);
  CHECK(evalx::load_report((dir / "transfer.csv").string()).rows.size() == 6);

  cfg.set("data.sensors", "a=" + data);
  cmd_experiment_limited(cfg, log);
  const std::string limited = testing::slurp(dir / "limited.csv");
  CHECK(limited.rfind(evalx::kLimitedHeader, 0) == 0);

  auto r = cmd_report(cfg, log, (dir / "report.csv").string(),
                      (dir / "again.svg").string());
  CHECK(testing::slurp(dir / "again.svg").find("</svg>") != std::string::npos);
}

TEST_CASE("pretraining refuses to read the reference column") {
  auto dir = testing::temp_dir("cli-refuse");
  RunConfig cfg;
  make_tiny(cfg, dir);
  std::ostringstream log;
  const auto data = (dir / "a.csv").string();
  cmd_synth(cfg, log, data);
  cfg.set("data.sensors", "a=" + data);
  cfg.set("pretrain.use_reference", "true");
  CHECK_THROWS_AS(cmd_pretrain(cfg, log), ConfigError);
}

TEST_CASE("missing datasets are data errors") {
  auto dir = testing::temp_dir("cli-missing");
  RunConfig cfg;
  make_tiny(cfg, dir);
  cfg.set("data.sensors", "a=" + (dir / "absent.csv").string());
  std::ostringstream log;
  try {
    cmd_prepare(cfg, log);
    FAIL("expected an error");
  } catch (const std::exception &e) {
    CHECK(exit_code_for(e) == kExitData);
  }
}

#ifdef SENSCAL_CLI_PATH
TEST_CASE("help lists every configuration flag for every subcommand") {
  for (const char *sub : {"synth", "prepare", "pretrain", "finetune",
                          "evaluate", "experiment-limited",
                          "experiment-transfer", "report"}) {
    auto r = run_cli(std::string(sub) + " --help");
    CHECK(r.code == 0);
    for (const auto &k : config_keys()) {
      INFO(sub << " lacks --" << k.key);
      CHECK(r.out.find("--" + k.key) != std::string::npos);
    }
  }
  CHECK(run_cli("--help").code == 0);
}

TEST_CASE("cli exit codes") {
  auto dir = testing::temp_dir("cli-exit");
  const std::string out = " --run.output_dir " + dir.string();
  CHECK(run_cli("").code == kExitConfig);
  CHECK(run_cli("synth --no-such-flag").code == kExitConfig);
  CHECK(run_cli("synth --set model.nope=1" + out).code == kExitConfig);
  CHECK(run_cli("synth --synth.n_samples 0" + out).code == kExitConfig);
  CHECK(run_cli("prepare --data.sensors a=" + (dir / "none.csv").string() + out)
            .code == kExitData);
  CHECK(run_cli("report -i " + (dir / "none.csv").string() + out).code ==
        kExitData);
  CHECK(run_cli("synth --synth.n_samples 300" + out).code == kExitOk);
  CHECK(run_cli("pretrain --pretrain.use_reference true --data.sensors a=" +
                (dir / "synthetic.csv").string() + out)
            .code == kExitConfig);
}

TEST_CASE("cli precedence: file < --set < flag < environment") {
  auto dir = testing::temp_dir("cli-precedence");
  const auto ini = dir / "run.ini";
  evalx::write_text(ini.string(), "[run]\nseed = 1\noutput_dir = " +
                                      dir.string() +
                                      "\n[synth]\nn_samples = 200\n");
  const auto manifest = dir / "manifest-synth.txt";
  const std::string base = "synth -c " + ini.string();

  REQUIRE(run_cli(base).code == 0);
  CHECK(manifest_value(testing::slurp(manifest), "seed") == "1");
  REQUIRE(run_cli(base + " --set run.seed=2").code == 0);
  CHECK(manifest_value(testing::slurp(manifest), "seed") == "2");
  REQUIRE(run_cli(base + " --set run.seed=2 --run.seed 3").code == 0);
  CHECK(manifest_value(testing::slurp(manifest), "seed") == "3");
  REQUIRE(run_cli(base + " --set run.seed=2 --run.seed 3", "SENSCAL_SEED=4")
              .code == 0);
  CHECK(manifest_value(testing::slurp(manifest), "seed") == "4");
}
#endif
