// SPDX-License-Identifier: Apache-2.0
// senscal: calibration pipeline front end.
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "senscal/cli/commands.hpp"
#include "senscal/cli/config.hpp"
#include "senscal/error.hpp"
#include "senscal/version.hpp"

namespace {

using senscal::cli::RunConfig;

struct Subcommand {
  CLI::App *app = nullptr;
  std::string config_file;
  std::vector<std::string> sets;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option *> options;
};

void add_config_flags(Subcommand &sub) {
  sub.app->add_option("-c,--config", sub.config_file,
                      "key=value config file with [sections]");
  sub.app->add_option("--set", sub.sets,
                      "override any key, e.g. --set model.h_dim=16 (repeatable)");
  for (const auto &k : senscal::cli::config_keys()) {
    auto *opt = sub.app->add_option("--" + k.key, sub.values[k.key], k.help);
    opt->default_str(k.default_value.empty() ? "\"\"" : k.default_value);
    opt->group("Configuration");
    sub.options[k.key] = opt;
  }
}

RunConfig resolve(const Subcommand &sub) {
  RunConfig cfg;
  if (!sub.config_file.empty())
    senscal::cli::apply_config_file(cfg, sub.config_file);
  for (const auto &s : sub.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos)
      throw senscal::ConfigError("--set expects key=value, got '" + s + "'");
    cfg.set(s.substr(0, eq), s.substr(eq + 1));
  }
  for (const auto &[key, opt] : sub.options)
    if (opt->count() > 0)
      cfg.set(key, sub.values.at(key));
  if (senscal::cli::apply_env_seed(cfg))
    std::cerr << "run.seed taken from SENSCAL_SEED: " << cfg.get("run.seed")
              << "\n";
  return cfg;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"senscal: self-supervised calibration of low-cost air-quality "
               "sensors.\nPrecedence: defaults < --config file < --set < "
               "per-key flags < SENSCAL_SEED.\nExit codes: 0 ok, 2 config, "
               "3 data, 4 numeric."};
  app.set_version_flag("--version", senscal::kVersion);
  app.require_subcommand(1);

  std::map<std::string, Subcommand> subs;
  auto add = [&](const std::string &name, const std::string &help) {
    Subcommand &s = subs[name];
    s.app = app.add_subcommand(name, help);
    add_config_flags(s);
    return s.app;
  };

  std::string checkpoint, sensor, output, input;
  add("synth", "write a synthetic distorted-sensor dataset")
      ->add_option("-o,--output", output, "CSV path (default <output_dir>/synthetic.csv)");
  add("prepare", "filter, split, standardise and window every sensor into the cache");
  add("pretrain", "masked-reconstruction pretraining per sensor")
      ->add_option("--sensor", sensor, "only this sensor");
  {
    auto *ft = add("finetune", "fit the recurrent head on a frozen pretrained encoder");
    ft->add_option("--checkpoint", checkpoint, "pretrain checkpoint")->required();
    ft->add_option("--sensor", sensor, "sensor to fine-tune on (default: the checkpoint's)");
  }
  add("evaluate", "compare SensBERT, MLR and RF on the test split")
      ->add_option("--checkpoint", checkpoint, "fine-tuned checkpoint (default: train from scratch)");
  add("experiment-limited", "limited paired-data experiment over experiment.p_list");
  add("experiment-transfer", "reuse one sensor's encoder on other sensors")
      ->add_option("--checkpoint", checkpoint, "pretrain checkpoint of the source sensor");
  {
    auto *rep = add("report", "render a report CSV as SVG");
    rep->add_option("-i,--input", input, "report CSV")->required();
    rep->add_option("-o,--output", output, "SVG path (default <output_dir>/<input>.svg)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : senscal::cli::kExitConfig;
  }

  try {
    for (auto &[name, sub] : subs) {
      if (!sub.app->parsed())
        continue;
      const RunConfig cfg = resolve(sub);
      std::ostream &log = std::cout;
      if (name == "synth")
        senscal::cli::cmd_synth(cfg, log, output);
      else if (name == "prepare")
        senscal::cli::cmd_prepare(cfg, log);
      else if (name == "pretrain")
        senscal::cli::cmd_pretrain(cfg, log, sensor);
      else if (name == "finetune")
        senscal::cli::cmd_finetune(cfg, log, checkpoint, sensor);
      else if (name == "evaluate")
        senscal::cli::cmd_evaluate(cfg, log, checkpoint);
      else if (name == "experiment-limited")
        senscal::cli::cmd_experiment_limited(cfg, log);
      else if (name == "experiment-transfer")
        senscal::cli::cmd_experiment_transfer(cfg, log, checkpoint);
      else if (name == "report")
        senscal::cli::cmd_report(cfg, log, input, output);
    }
  } catch (const std::exception &e) {
    std::cerr << "senscal: " << e.what() << "\n";
    return senscal::cli::exit_code_for(e);
  }
  return senscal::cli::kExitOk;
}
