// SPDX-License-Identifier: Apache-2.0
/**
 * @file   commands.hpp
 * @brief  Subcommand implementations shared by the CLI and the bindings.
 *
 * Every command writes only under run.output_dir and finishes with a
 * manifest-<command>.txt holding the resolved configuration, seeds,
 * versions and a checksum per output file.
 */
#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "senscal/cli/config.hpp"
#include "senscal/evalx/experiments.hpp"

namespace senscal::cli {

/// Process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitData = 3,
  kExitNumeric = 4,
};

/// Maps the library's exception types onto exit codes.
int exit_code_for(const std::exception &e);

struct CommandResult {
  std::vector<std::string> outputs;
  std::string manifest;
};

/// Writes a synthetic dataset to `out_path` (default
/// <output_dir>/synthetic.csv).
CommandResult cmd_synth(const RunConfig &cfg, std::ostream &log,
                        const std::string &out_path = "");

struct PreparedCounts {
  std::string sensor;
  std::size_t rows = 0;
  std::size_t outliers = 0;
  std::size_t train_windows = 0;
  std::size_t test_windows = 0;
  bool cache_hit = false;
  std::string cache_path;
};

/// Preprocesses every configured sensor into the window cache keyed by
/// the data hash, printing row, outlier and window counts.
CommandResult cmd_prepare(const RunConfig &cfg, std::ostream &log,
                          std::vector<PreparedCounts> *counts = nullptr);

/// Loads a sensor through the cache, preparing it on a miss.
evalx::PreparedSensor load_prepared(const RunConfig &cfg,
                                    const SensorSource &source,
                                    const evalx::ExperimentConfig &ecfg,
                                    PreparedCounts *counts = nullptr);

/// Pretrains one checkpoint per sensor (or only `sensor`): writes
/// pretrain-<sensor>.sbckpt and pretrain-<sensor>-loss.csv. Refuses when
/// pretrain.use_reference is set.
CommandResult cmd_pretrain(const RunConfig &cfg, std::ostream &log,
                           const std::string &sensor = "");

/// Fine-tunes a head on the frozen encoder of `checkpoint` using the train
/// split of `sensor` (default: the checkpoint's sensor). Writes
/// model-<sensor>.sbckpt and finetune-<sensor>-loss.csv.
CommandResult cmd_finetune(const RunConfig &cfg, std::ostream &log,
                           const std::string &checkpoint,
                           const std::string &sensor = "");

/// Without a checkpoint runs the full comparison over every sensor; with a
/// fine-tuned checkpoint scores its head against freshly fitted baselines.
/// Writes report.csv and report.svg.
CommandResult cmd_evaluate(const RunConfig &cfg, std::ostream &log,
                           const std::string &checkpoint = "");

/// Writes limited.csv (mean and std per model and P), limited-chunks.csv
/// (one row per model and chunk) and limited-<sensor>.svg.
CommandResult cmd_experiment_limited(const RunConfig &cfg, std::ostream &log);

/// Writes transfer.csv and transfer.svg. The encoder comes from
/// `checkpoint` when given, otherwise from pretraining the source sensor.
CommandResult cmd_experiment_transfer(const RunConfig &cfg, std::ostream &log,
                                      const std::string &checkpoint = "");

/// Renders a report CSV as SVG.
CommandResult cmd_report(const RunConfig &cfg, std::ostream &log,
                         const std::string &input,
                         const std::string &output = "");

/// FNV-1a of a file's bytes.
std::uint64_t file_checksum(const std::string &path);

} // namespace senscal::cli
