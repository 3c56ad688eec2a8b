// SPDX-License-Identifier: Apache-2.0
/**
 * @file   config.hpp
 * @brief  Run configuration: flat key=value files with [sections].
 *
 * Precedence, lowest first: built-in defaults, config file, command-line
 * flags, then SENSCAL_SEED for run.seed.
 */
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "senscal/dataio/csv.hpp"
#include "senscal/dataio/synth.hpp"
#include "senscal/evalx/experiments.hpp"

namespace senscal::cli {

struct KeySpec {
  std::string key; // "section.name"
  std::string default_value;
  std::string help;
};

/// Every recognised key with its default, in documentation order.
const std::vector<KeySpec> &config_keys();

class RunConfig {
public:
  /// All keys at their defaults.
  RunConfig();

  /// Throws ConfigError for an unknown key.
  void set(const std::string &key, const std::string &value);
  const std::string &get(const std::string &key) const;

  std::string get_string(const std::string &key) const { return get(key); }
  std::size_t get_size(const std::string &key) const;
  std::uint64_t get_u64(const std::string &key) const;
  double get_double(const std::string &key) const;
  bool get_bool(const std::string &key) const;
  std::vector<double> get_doubles(const std::string &key) const;
  std::vector<std::string> get_list(const std::string &key) const;

  /// "key = value" lines in key order.
  std::string canonical() const;
  /// FNV-1a of canonical().
  std::uint64_t hash() const;
  /// Hash over the data, column and window keys only.
  std::uint64_t data_hash() const;

  const std::map<std::string, std::string> &values() const { return values_; }

private:
  std::map<std::string, std::string> values_;
};

/// Applies "key = value" lines under "[section]" headers to `cfg`. '#' and
/// ';' start comments. Throws ConfigError naming the line on bad syntax or
/// unknown keys.
void apply_config_text(RunConfig &cfg, std::string_view text);
void apply_config_file(RunConfig &cfg, const std::string &path);

/// Replaces run.seed with SENSCAL_SEED when set. Returns true if applied.
bool apply_env_seed(RunConfig &cfg);

struct SensorSource {
  std::string name;
  std::string path;
};

/// Parses data.sensors, a comma list of name=path entries.
std::vector<SensorSource> sensor_sources(const RunConfig &cfg);
dataio::ColumnMap column_map(const RunConfig &cfg);
/// Typed experiment settings; ConfigError carries the offending key.
evalx::ExperimentConfig experiment_config(const RunConfig &cfg);
dataio::SyntheticConfig synthetic_config(const RunConfig &cfg);

std::string hex64(std::uint64_t v);

} // namespace senscal::cli
