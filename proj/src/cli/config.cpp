// SPDX-License-Identifier: Apache-2.0
#include "senscal/cli/config.hpp"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "senscal/error.hpp"
#include "senscal/numcore/rng.hpp"

namespace senscal::cli {

const std::vector<KeySpec> &config_keys() {
  static const std::vector<KeySpec> keys = {
      {"run.seed", "42", "master seed for initialisation, shuffling, masks"},
      {"run.output_dir", "senscal-out", "directory receiving every output"},
      {"run.jobs", "1", "parallel workers for experiment fan-out and forests"},
      {"data.sensors", "", "comma list of name=path CSV datasets"},
      {"columns.timestamp", "timestamp", "timestamp column"},
      {"columns.signal", "signal", "raw sensor signal column"},
      {"columns.temperature", "temperature", "temperature column"},
      {"columns.humidity", "humidity", "relative humidity column"},
      {"columns.reference", "reference", "reference station column"},
      {"window.M", "128", "window length in rows"},
      {"window.overlap", "auto", "rows shared by consecutive windows (auto = M-1)"},
      {"window.mask_prob", "0.2", "minimum masked fraction per window"},
      {"window.span_length", "8", "maximum masked span length"},
      {"window.train_frac", "0.9", "chronological train fraction"},
      {"model.h_dim", "64", "encoder hidden width"},
      {"model.heads", "4", "attention heads"},
      {"model.blocks", "4", "encoder blocks"},
      {"model.ff_dim", "128", "feed-forward width"},
      {"model.ln_eps", "1e-6", "layer-norm epsilon"},
      {"pretrain.epochs", "10", "pretraining epochs"},
      {"pretrain.batch_size", "32", "pretraining windows per batch"},
      {"pretrain.lr", "0.001", "pretraining Adam learning rate"},
      {"pretrain.loss_scope", "masked", "reconstruction loss over masked rows or all"},
      {"pretrain.max_steps", "0", "stop pretraining after this many steps (0 = off)"},
      {"pretrain.use_reference", "false", "must stay false; pretraining never reads references"},
      {"finetune.epochs", "20", "head fine-tuning epochs"},
      {"finetune.batch_size", "32", "fine-tuning windows per batch"},
      {"finetune.lr", "0.001", "fine-tuning Adam learning rate"},
      {"finetune.p_drop", "0.1", "dropout before the dense layers"},
      {"finetune.hidden", "64", "GRU state width"},
      {"finetune.max_steps", "0", "stop fine-tuning after this many steps (0 = off)"},
      {"rf.n_trees", "100", "random forest trees"},
      {"rf.max_depth", "16", "maximum tree depth"},
      {"rf.min_leaf", "5", "minimum samples per leaf"},
      {"rf.max_features", "0", "features tried per split (0 = ceil(p/3))"},
      {"rf.bootstrap", "true", "bootstrap resampling per tree"},
      {"experiment.p_list", "10,25,50,75,100", "paired-data percentages"},
      {"experiment.min_chunk_windows", "2", "smaller chunks are skipped"},
      {"experiment.transfer_source", "", "sensor whose encoder is transferred"},
      {"experiment.transfer_targets", "", "comma list of target sensors"},
      {"experiment.refit_baselines", "false", "refit MLR/RF on each transfer target"},
      {"experiment.raw_units", "false", "report RMSE in raw reference units"},
      {"synth.n_samples", "5000", "synthetic rows"},
      {"synth.seed", "7", "synthetic generator seed"},
      {"synth.ar_coef", "0.98", "AR(1) coefficient of the true series"},
      {"synth.ar_noise", "1.5", "AR(1) innovation scale"},
      {"synth.base_level", "25", "mean of the true series"},
      {"synth.rh_gain", "0.5", "humidity distortion gain"},
      {"synth.temp_drift_gain", "0.5", "temperature drift per degree"},
      {"synth.sensor_noise", "0.1", "relative sensor noise"},
      {"synth.interval_s", "60", "sampling interval in seconds"},
      {"synth.start_epoch", "1467331200", "first timestamp"},
  };
  return keys;
}

RunConfig::RunConfig() {
  for (const auto &k : config_keys())
    values_[k.key] = k.default_value;
}

void RunConfig::set(const std::string &key, const std::string &value) {
  auto it = values_.find(key);
  if (it == values_.end())
    throw ConfigError("unknown configuration key '" + key + "'");
  it->second = value;
}

const std::string &RunConfig::get(const std::string &key) const {
  auto it = values_.find(key);
  if (it == values_.end())
    throw ConfigError("unknown configuration key '" + key + "'");
  return it->second;
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos)
    return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(const std::string &key, const std::string &value,
                            const char *want) {
  throw ConfigError(key + ": expected " + want + ", got '" + value + "'");
}

std::vector<std::string> split_list(const std::string &text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto end = comma == std::string::npos ? text.size() : comma;
    std::string item = trim(std::string_view(text).substr(start, end - start));
    if (!item.empty())
      out.push_back(std::move(item));
    if (comma == std::string::npos)
      break;
    start = comma + 1;
  }
  return out;
}

} // namespace

std::size_t RunConfig::get_size(const std::string &key) const {
  const std::string &v = get(key);
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    bad_value(key, v, "a non-negative integer");
  return out;
}

std::uint64_t RunConfig::get_u64(const std::string &key) const {
  const std::string &v = get(key);
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    bad_value(key, v, "an unsigned integer");
  return out;
}

double RunConfig::get_double(const std::string &key) const {
  const std::string &v = get(key);
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    bad_value(key, v, "a number");
  return out;
}

bool RunConfig::get_bool(const std::string &key) const {
  const std::string &v = get(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on")
    return true;
  if (v == "false" || v == "0" || v == "no" || v == "off")
    return false;
  bad_value(key, v, "true or false");
}

std::vector<double> RunConfig::get_doubles(const std::string &key) const {
  std::vector<double> out;
  for (const auto &item : split_list(get(key))) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || p != item.data() + item.size())
      bad_value(key, item, "a comma list of numbers");
    out.push_back(v);
  }
  return out;
}

std::vector<std::string> RunConfig::get_list(const std::string &key) const {
  return split_list(get(key));
}

std::string RunConfig::canonical() const {
  std::string out;
  for (const auto &[k, v] : values_)
    out += k + " = " + v + "\n";
  return out;
}

std::uint64_t RunConfig::hash() const { return numcore::fnv1a(canonical()); }

std::uint64_t RunConfig::data_hash() const {
  std::string text;
  for (const auto &[k, v] : values_)
    if (k.starts_with("data.") || k.starts_with("columns.") ||
        k.starts_with("window."))
      text += k + " = " + v + "\n";
  return numcore::fnv1a(text);
}

void apply_config_text(RunConfig &cfg, std::string_view text) {
  std::string section;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view raw =
        text.substr(pos, nl == std::string_view::npos ? text.size() - pos
                                                      : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const auto hash = raw.find_first_of("#;");
    const std::string line = trim(raw.substr(0, hash));
    if (line.empty())
      continue;
    const std::string where = "config line " + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError(where + "unterminated section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      if (section.empty())
        throw ConfigError(where + "empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(where + "expected key = value");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty())
      throw ConfigError(where + "empty key");
    const std::string full =
        section.empty() || key.find('.') != std::string::npos
            ? key
            : section + "." + key;
    try {
      cfg.set(full, value);
    } catch (const ConfigError &e) {
      throw ConfigError(where + e.what());
    }
  }
}

void apply_config_file(RunConfig &cfg, const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    apply_config_text(cfg, ss.str());
  } catch (const ConfigError &e) {
    throw ConfigError(path + ": " + e.what());
  }
}

bool apply_env_seed(RunConfig &cfg) {
  const char *env = std::getenv("SENSCAL_SEED");
  if (env == nullptr || *env == '\0')
    return false;
  cfg.set("run.seed", env);
  cfg.get_u64("run.seed");
  return true;
}

std::vector<SensorSource> sensor_sources(const RunConfig &cfg) {
  std::vector<SensorSource> out;
  for (const auto &item : cfg.get_list("data.sensors")) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == item.size())
      throw ConfigError("data.sensors: expected name=path, got '" + item + "'");
    SensorSource s{trim(std::string_view(item).substr(0, eq)),
                   trim(std::string_view(item).substr(eq + 1))};
    for (const auto &prev : out)
      if (prev.name == s.name)
        throw ConfigError("data.sensors: duplicate sensor '" + s.name + "'");
    out.push_back(std::move(s));
  }
  return out;
}

dataio::ColumnMap column_map(const RunConfig &cfg) {
  dataio::ColumnMap map;
  map.timestamp = cfg.get("columns.timestamp");
  map.signal = cfg.get("columns.signal");
  map.temperature = cfg.get("columns.temperature");
  map.humidity = cfg.get("columns.humidity");
  const std::string &ref = cfg.get("columns.reference");
  if (ref.empty())
    map.reference.reset();
  else
    map.reference = ref;
  return map;
}

evalx::ExperimentConfig experiment_config(const RunConfig &cfg) {
  evalx::ExperimentConfig e;
  const std::uint64_t seed = cfg.get_u64("run.seed");
  e.model.M = cfg.get_size("window.M");
  e.model.h_dim = cfg.get_size("model.h_dim");
  e.model.heads = cfg.get_size("model.heads");
  e.model.blocks = cfg.get_size("model.blocks");
  e.model.ff_dim = cfg.get_size("model.ff_dim");
  e.model.ln_eps = cfg.get_double("model.ln_eps");

  auto &p = e.pretrain;
  p.epochs = cfg.get_size("pretrain.epochs");
  p.batch_size = cfg.get_size("pretrain.batch_size");
  p.lr = cfg.get_double("pretrain.lr");
  try {
    p.loss_scope = sensbert::parse_loss_scope(cfg.get("pretrain.loss_scope"));
  } catch (const ParameterError &err) {
    throw ConfigError(std::string("pretrain.loss_scope: ") + err.what());
  }
  p.max_steps = cfg.get_size("pretrain.max_steps");
  p.seed = seed;
  p.overlap = cfg.get("window.overlap") == "auto"
                  ? (e.model.M == 0 ? 0 : e.model.M - 1)
                  : cfg.get_size("window.overlap");
  p.mask_prob = cfg.get_double("window.mask_prob");
  p.span_length = cfg.get_size("window.span_length");

  auto &f = e.finetune;
  f.epochs = cfg.get_size("finetune.epochs");
  f.batch_size = cfg.get_size("finetune.batch_size");
  f.lr = cfg.get_double("finetune.lr");
  f.p_drop = cfg.get_double("finetune.p_drop");
  f.hidden = cfg.get_size("finetune.hidden");
  f.max_steps = cfg.get_size("finetune.max_steps");
  f.seed = seed;

  e.rf.n_trees = cfg.get_size("rf.n_trees");
  e.rf.max_depth = cfg.get_size("rf.max_depth");
  e.rf.min_leaf = cfg.get_size("rf.min_leaf");
  e.rf.max_features = cfg.get_size("rf.max_features");
  e.rf.bootstrap = cfg.get_bool("rf.bootstrap");
  e.rf.seed = seed;
  e.rf.jobs = cfg.get_size("run.jobs");

  e.train_frac = cfg.get_double("window.train_frac");
  e.raw_units = cfg.get_bool("experiment.raw_units");
  e.jobs = cfg.get_size("run.jobs");
  e.min_chunk_windows = cfg.get_size("experiment.min_chunk_windows");
  if (f.hidden < 2)
    throw ConfigError("finetune.hidden must be at least 2");
  try {
    e.validate();
  } catch (const ParameterError &err) {
    throw ConfigError(err.what());
  }
  return e;
}

dataio::SyntheticConfig synthetic_config(const RunConfig &cfg) {
  dataio::SyntheticConfig s;
  s.n_samples = cfg.get_size("synth.n_samples");
  s.seed = cfg.get_u64("synth.seed");
  s.ar_coef = cfg.get_double("synth.ar_coef");
  s.ar_noise = cfg.get_double("synth.ar_noise");
  s.base_level = cfg.get_double("synth.base_level");
  s.rh_gain = cfg.get_double("synth.rh_gain");
  s.temp_drift_gain = cfg.get_double("synth.temp_drift_gain");
  s.sensor_noise = cfg.get_double("synth.sensor_noise");
  s.interval_s = static_cast<std::int64_t>(cfg.get_u64("synth.interval_s"));
  s.start_epoch = static_cast<std::int64_t>(cfg.get_u64("synth.start_epoch"));
  try {
    s.validate();
  } catch (const ParameterError &err) {
    throw ConfigError(err.what());
  }
  return s;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

} // namespace senscal::cli
