// SPDX-License-Identifier: Apache-2.0
#include "senscal/cli/commands.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "senscal/calibrate/gru_head.hpp"
#include "senscal/dataio/csv.hpp"
#include "senscal/dataio/synth.hpp"
#include "senscal/error.hpp"
#include "senscal/evalx/report.hpp"
#include "senscal/numcore/rng.hpp"
#include "senscal/sensbert/checkpoint.hpp"
#include "senscal/version.hpp"

namespace senscal::cli {

namespace fs = std::filesystem;
namespace cal = calibrate;

int exit_code_for(const std::exception &e) {
  if (dynamic_cast<const ConfigError *>(&e) ||
      dynamic_cast<const ParameterError *>(&e))
    return kExitConfig;
  if (dynamic_cast<const NumericError *>(&e))
    return kExitNumeric;
  if (dynamic_cast<const DataError *>(&e) ||
      dynamic_cast<const FormatError *>(&e) ||
      dynamic_cast<const DimensionError *>(&e))
    return kExitData;
  return kExitFailure;
}

std::uint64_t file_checksum(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw DataError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return numcore::fnv1a(ss.str());
}

namespace {

constexpr int kCacheVersion = 1;

std::string output_dir(const RunConfig &cfg) {
  const std::string dir = cfg.get("run.output_dir");
  if (dir.empty())
    throw ConfigError("run.output_dir must not be empty");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec)
    throw Error("cannot create output directory '" + dir + "': " + ec.message());
  return dir;
}

std::string out_path(const RunConfig &cfg, const std::string &name) {
  return (fs::path(output_dir(cfg)) / name).string();
}

std::string finish(const RunConfig &cfg, const std::string &command,
                   CommandResult &result, std::ostream &log,
                   const std::vector<std::string> &notes = {}) {
  std::string text;
  text += "command = " + command + "\n";
  text += "senscal_version = " + std::string(kVersion) + "\n";
  text += "checkpoint_version = " + std::to_string(sensbert::kCheckpointVersion) +
          "\n";
  text += "cache_version = " + std::to_string(kCacheVersion) + "\n";
  text += "config_hash = " + hex64(cfg.hash()) + "\n";
  text += "data_hash = " + hex64(cfg.data_hash()) + "\n";
  text += "seed = " + cfg.get("run.seed") + "\n";
  text += "synth_seed = " + cfg.get("synth.seed") + "\n";
  for (const auto &n : notes)
    text += n + "\n";
  text += "\n[outputs]\n";
  for (const auto &o : result.outputs)
    text += fs::path(o).filename().string() + " = " + hex64(file_checksum(o)) +
            "\n";
  text += "\n[config]\n" + cfg.canonical();
  const std::string path = out_path(cfg, "manifest-" + command + ".txt");
  evalx::write_text(path, text);
  result.manifest = path;
  log << "manifest: " << path << "\n";
  return path;
}

std::vector<SensorSource> selected_sources(const RunConfig &cfg,
                                           const std::string &only) {
  std::vector<SensorSource> all = sensor_sources(cfg);
  if (all.empty())
    throw ConfigError("data.sensors is empty");
  if (only.empty())
    return all;
  for (const auto &s : all)
    if (s.name == only)
      return {s};
  throw ConfigError("sensor '" + only + "' is not listed in data.sensors");
}

const SensorSource &find_source(const std::vector<SensorSource> &all,
                                const std::string &name, const char *key) {
  for (const auto &s : all)
    if (s.name == name)
      return s;
  throw ConfigError(std::string(key) + ": sensor '" + name +
                    "' is not listed in data.sensors");
}

void add_frame(sensbert::Checkpoint &ckpt, const std::string &prefix,
               const dataio::SensorFrame &f) {
  using numcore::Tensor;
  const std::size_t n = f.timestamps.size();
  std::vector<double> ts(f.timestamps.begin(), f.timestamps.end());
  ckpt.add(prefix + ".timestamps", Tensor::from({n}, std::move(ts)));
  ckpt.add(prefix + ".x", Tensor::from({f.x.rows, f.x.cols}, f.x.values));
  ckpt.add(prefix + ".y", Tensor::from({f.y->size()}, *f.y));
  ckpt.set_meta(prefix + ".interval", std::to_string(f.nominal_interval_s));
}

dataio::SensorFrame read_frame(const sensbert::Checkpoint &ckpt,
                               const std::string &prefix,
                               const std::vector<std::string> &names) {
  auto need = [&](const std::string &n) -> const sensbert::NamedTensor & {
    const auto *t = ckpt.find(n);
    if (t == nullptr)
      throw FormatError("cache lacks tensor '" + n + "'");
    return *t;
  };
  const auto &ts = need(prefix + ".timestamps");
  const auto &x = need(prefix + ".x");
  const auto &y = need(prefix + ".y");
  if (x.dims.size() != 2 || x.dims[0] != ts.values.size() ||
      y.values.size() != ts.values.size() || x.dims[1] != names.size())
    throw FormatError("cache frame '" + prefix + "' has inconsistent shapes");
  dataio::SensorFrame f;
  for (double t : ts.values)
    f.timestamps.push_back(static_cast<std::int64_t>(t));
  f.x.rows = x.dims[0];
  f.x.cols = x.dims[1];
  f.x.values = x.values;
  f.y = y.values;
  f.variable_names = names;
  f.nominal_interval_s =
      std::stoll(ckpt.meta(prefix + ".interval").value_or("60"));
  return f;
}

std::vector<std::string> split_names(const std::string &text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    out.push_back(item);
  return out;
}

std::string cache_file(const RunConfig &cfg, const std::string &sensor) {
  const fs::path dir =
      fs::path(output_dir(cfg)) / "cache" / hex64(cfg.data_hash());
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec)
    throw Error("cannot create cache directory '" + dir.string() + "'");
  return (dir / (sensor + ".sbcache")).string();
}

void add_run_metadata(sensbert::Checkpoint &ckpt, const RunConfig &cfg,
                      const std::string &sensor) {
  ckpt.set_meta("sensor", sensor);
  ckpt.set_meta("config_hash", hex64(cfg.hash()));
  ckpt.set_meta("senscal_version", kVersion);
}

void write_loss_csv(const std::string &path, const std::vector<double> &loss) {
  std::string text = "epoch,loss\n";
  for (std::size_t i = 0; i < loss.size(); ++i)
    text += std::to_string(i + 1) + "," + sensbert::format_exact(loss[i]) + "\n";
  evalx::write_text(path, text);
}

std::vector<std::pair<std::string, dataio::SensorFrame>>
load_frames(const RunConfig &cfg, const std::vector<SensorSource> &sources) {
  std::vector<std::pair<std::string, dataio::SensorFrame>> out;
  const dataio::ColumnMap columns = column_map(cfg);
  for (const auto &s : sources)
    out.emplace_back(s.name, dataio::load_csv(s.path, columns).frame);
  return out;
}

void log_rows(std::ostream &log, const std::vector<evalx::MetricsRow> &rows) {
  char buf[256];
  for (const auto &r : rows) {
    std::snprintf(buf, sizeof buf, "  %-10s %-9s %-24s r2=%8.4f rmse=%8.4f\n",
                  r.sensor.c_str(), r.model.c_str(), r.experiment.c_str(),
                  r.r2, r.rmse);
    log << buf;
  }
}

} // namespace

evalx::PreparedSensor load_prepared(const RunConfig &cfg,
                                    const SensorSource &source,
                                    const evalx::ExperimentConfig &ecfg,
                                    PreparedCounts *counts) {
  const std::string path = cache_file(cfg, source.name);
  const std::string source_sum = hex64(file_checksum(source.path));
  evalx::PreparedSensor sensor;
  bool hit = false;
  if (fs::exists(path)) {
    const sensbert::Checkpoint ckpt = sensbert::load_checkpoint(path);
    if (ckpt.meta("cache.source_checksum") == source_sum &&
        ckpt.meta("cache.version") == std::to_string(kCacheVersion)) {
      const auto names =
          split_names(ckpt.meta("cache.variable_names").value_or(""));
      sensor.name = source.name;
      sensor.stats = *sensbert::standardizer_from_checkpoint(ckpt);
      sensor.train_frame = read_frame(ckpt, "train", names);
      sensor.test_frame = read_frame(ckpt, "test", names);
      sensor.rows_in = std::stoull(ckpt.meta("cache.rows").value_or("0"));
      sensor.outliers_removed =
          std::stoull(ckpt.meta("cache.outliers").value_or("0"));
      sensor = evalx::window_sensor(std::move(sensor), ecfg);
      hit = true;
    }
  }
  if (!hit) {
    const auto loaded = dataio::load_csv(source.path, column_map(cfg));
    sensor = evalx::prepare_sensor(source.name, loaded.frame, ecfg);
    sensbert::Checkpoint ckpt;
    ckpt.set_meta("cache.version", std::to_string(kCacheVersion));
    ckpt.set_meta("cache.source_checksum", source_sum);
    ckpt.set_meta("cache.rows", std::to_string(sensor.rows_in));
    ckpt.set_meta("cache.outliers", std::to_string(sensor.outliers_removed));
    std::string names;
    for (const auto &n : sensor.train_frame.variable_names)
      names += (names.empty() ? "" : ",") + n;
    ckpt.set_meta("cache.variable_names", names);
    sensbert::add_standardizer(ckpt, sensor.stats);
    add_frame(ckpt, "train", sensor.train_frame);
    add_frame(ckpt, "test", sensor.test_frame);
    sensbert::save_checkpoint(ckpt, path);
  }
  if (counts != nullptr)
    *counts = {source.name,         sensor.rows_in,
               sensor.outliers_removed, sensor.train.count(),
               sensor.test.count(), hit,
               path};
  return sensor;
}

CommandResult cmd_synth(const RunConfig &cfg, std::ostream &log,
                        const std::string &out) {
  const dataio::SyntheticConfig scfg = synthetic_config(cfg);
  const dataio::SensorFrame frame = dataio::synth_generate(scfg);
  const std::string path = out.empty() ? out_path(cfg, "synthetic.csv") : out;
  const dataio::ColumnMap columns = column_map(cfg);
  dataio::write_csv(frame, path, columns);
  log << "synthetic rows: " << frame.size() << " -> " << path << "\n";
  CommandResult result{{path}, {}};
  finish(cfg, "synth", result, log);
  return result;
}

CommandResult cmd_prepare(const RunConfig &cfg, std::ostream &log,
                          std::vector<PreparedCounts> *counts) {
  const evalx::ExperimentConfig ecfg = experiment_config(cfg);
  CommandResult result;
  for (const auto &source : selected_sources(cfg, "")) {
    PreparedCounts c;
    load_prepared(cfg, source, ecfg, &c);
    log << source.name << ": rows=" << c.rows << " outliers=" << c.outliers
        << " train_windows=" << c.train_windows
        << " test_windows=" << c.test_windows
        << (c.cache_hit ? " (cached)" : "") << "\n";
    result.outputs.push_back(c.cache_path);
    if (counts != nullptr)
      counts->push_back(c);
  }
  finish(cfg, "prepare", result, log,
         {"cache_dir = cache/" + hex64(cfg.data_hash())});
  return result;
}

CommandResult cmd_pretrain(const RunConfig &cfg, std::ostream &log,
                           const std::string &only) {
  if (cfg.get_bool("pretrain.use_reference"))
    throw ConfigError("pretrain.use_reference: pretraining is self-supervised "
                      "and never reads the reference column");
  const evalx::ExperimentConfig ecfg = experiment_config(cfg);
  CommandResult result;
  for (const auto &source : selected_sources(cfg, only)) {
    const evalx::PreparedSensor sensor = load_prepared(cfg, source, ecfg);
    const sensbert::PretrainResult pre = evalx::pretrain_sensor(sensor, ecfg);
    sensbert::Checkpoint ckpt;
    add_run_metadata(ckpt, cfg, source.name);
    sensbert::add_encoder(ckpt, pre.encoder);
    sensbert::add_decoder(ckpt, pre.decoder);
    sensbert::add_standardizer(ckpt, sensor.stats);
    const std::string path = out_path(cfg, "pretrain-" + source.name + ".sbckpt");
    sensbert::save_checkpoint(ckpt, path);
    const std::string loss = out_path(cfg, "pretrain-" + source.name + "-loss.csv");
    write_loss_csv(loss, pre.loss_history);
    log << source.name << ": " << pre.steps << " steps, final epoch loss "
        << (pre.loss_history.empty() ? 0.0 : pre.loss_history.back()) << "\n";
    result.outputs.push_back(path);
    result.outputs.push_back(loss);
  }
  finish(cfg, "pretrain", result, log);
  return result;
}

CommandResult cmd_finetune(const RunConfig &cfg, std::ostream &log,
                           const std::string &checkpoint,
                           const std::string &sensor_name) {
  const evalx::ExperimentConfig ecfg = experiment_config(cfg);
  const sensbert::Checkpoint pre = sensbert::load_checkpoint(checkpoint);
  const sensbert::EncoderParams encoder = sensbert::encoder_from_checkpoint(pre);
  const std::string name =
      sensor_name.empty() ? pre.meta("sensor").value_or("") : sensor_name;
  if (name.empty())
    throw ConfigError("no sensor named and the checkpoint records none");
  const auto sources = selected_sources(cfg, "");
  const evalx::PreparedSensor sensor =
      load_prepared(cfg, find_source(sources, name, "--sensor"), ecfg);
  cal::check_compatible(encoder, sensor.train);

  const std::uint64_t before = sensbert::checksum(encoder.named());
  numcore::Rng rng = numcore::Rng::substream(ecfg.finetune.seed, "head-init");
  const cal::GruHeadParams head = cal::init_head(
      encoder.config.h_dim, ecfg.finetune.hidden, ecfg.finetune.p_drop, rng);
  const cal::FinetuneResult tuned =
      cal::finetune(encoder, head, sensor.train, ecfg.finetune);
  if (sensbert::checksum(encoder.named()) != before)
    throw ContractError("encoder changed during fine-tuning");

  sensbert::Checkpoint ckpt;
  add_run_metadata(ckpt, cfg, name);
  ckpt.set_meta("pretrained_on", pre.meta("sensor").value_or(""));
  sensbert::add_encoder(ckpt, encoder);
  cal::add_head(ckpt, tuned.head);
  sensbert::add_standardizer(ckpt, sensor.stats);
  const std::string path = out_path(cfg, "model-" + name + ".sbckpt");
  sensbert::save_checkpoint(ckpt, path);
  const std::string loss = out_path(cfg, "finetune-" + name + "-loss.csv");
  write_loss_csv(loss, tuned.loss_history);
  log << name << ": " << tuned.steps << " head steps, final epoch loss "
      << (tuned.loss_history.empty() ? 0.0 : tuned.loss_history.back()) << "\n";
  CommandResult result{{path, loss}, {}};
  finish(cfg, "finetune", result, log);
  return result;
}

CommandResult cmd_evaluate(const RunConfig &cfg, std::ostream &log,
                           const std::string &checkpoint) {
  const evalx::ExperimentConfig ecfg = experiment_config(cfg);
  evalx::MetricsReport report;
  if (checkpoint.empty()) {
    report = evalx::run_full_eval(load_frames(cfg, selected_sources(cfg, "")),
                                  ecfg);
  } else {
    const sensbert::Checkpoint ckpt = sensbert::load_checkpoint(checkpoint);
    const auto encoder = sensbert::encoder_from_checkpoint(ckpt);
    const auto head = cal::head_from_checkpoint(ckpt);
    const std::string name = ckpt.meta("sensor").value_or("");
    const auto sources = selected_sources(cfg, "");
    const evalx::PreparedSensor sensor =
        load_prepared(cfg, find_source(sources, name, "checkpoint sensor"), ecfg);
    report.rows = evalx::evaluate_trained(sensor, encoder, head, ecfg, "full");
  }
  log_rows(log, report.rows);
  const std::string csv = out_path(cfg, "report.csv");
  const std::string svg = out_path(cfg, "report.svg");
  evalx::emit_report(report, csv, evalx::ReportFormat::Csv);
  evalx::emit_report(report, svg, evalx::ReportFormat::Svg);
  CommandResult result{{csv, svg}, {}};
  finish(cfg, "evaluate", result, log);
  return result;
}

CommandResult cmd_experiment_limited(const RunConfig &cfg, std::ostream &log) {
  const evalx::ExperimentConfig ecfg = experiment_config(cfg);
  const std::vector<double> p_list = cfg.get_doubles("experiment.p_list");
  if (p_list.empty())
    throw ConfigError("experiment.p_list is empty");
  for (double p : p_list)
    if (!(p > 0.0 && p <= 100.0))
      throw ConfigError("experiment.p_list: " + sensbert::format_exact(p) +
                        " is outside (0, 100]");
  std::string summary;
  evalx::MetricsReport chunks;
  CommandResult result;
  for (const auto &[name, frame] :
       load_frames(cfg, selected_sources(cfg, ""))) {
    const evalx::LimitedDataResult res =
        evalx::run_limited_data(name, frame, p_list, ecfg);
    const std::string text = evalx::limited_csv(res);
    summary += summary.empty() ? text : text.substr(text.find('\n') + 1);
    for (auto &row : evalx::chunk_rows(res).rows)
      chunks.rows.push_back(std::move(row));
    for (const auto &plan : res.plans)
      for (const auto &s : plan.summary)
        log << name << " P=" << plan.p_percent << " " << s.model
            << ": r2 " << s.r2_mean << " +- " << s.r2_std << ", rmse "
            << s.rmse_mean << " +- " << s.rmse_std << " over " << s.n_chunks
            << " chunks\n";
    const std::string svg = out_path(cfg, "limited-" + name + ".svg");
    evalx::write_text(svg, evalx::limited_svg(res));
    result.outputs.push_back(svg);
  }
  const std::string csv = out_path(cfg, "limited.csv");
  evalx::write_text(csv, summary);
  const std::string chunk_csv = out_path(cfg, "limited-chunks.csv");
  evalx::emit_report(chunks, chunk_csv, evalx::ReportFormat::Csv);
  result.outputs.insert(result.outputs.begin(), {csv, chunk_csv});
  finish(cfg, "experiment-limited", result, log);
  return result;
}

CommandResult cmd_experiment_transfer(const RunConfig &cfg, std::ostream &log,
                                      const std::string &checkpoint) {
  const evalx::ExperimentConfig ecfg = experiment_config(cfg);
  const auto sources = selected_sources(cfg, "");
  std::string source_name = cfg.get("experiment.transfer_source");
  std::optional<sensbert::Checkpoint> ckpt;
  if (!checkpoint.empty()) {
    ckpt = sensbert::load_checkpoint(checkpoint);
    if (source_name.empty())
      source_name = ckpt->meta("sensor").value_or("");
  }
  if (source_name.empty())
    throw ConfigError("experiment.transfer_source is empty");
  std::vector<std::string> target_names = cfg.get_list("experiment.transfer_targets");
  if (target_names.empty())
    for (const auto &s : sources)
      if (s.name != source_name)
        target_names.push_back(s.name);

  const evalx::PreparedSensor source = load_prepared(
      cfg, find_source(sources, source_name, "experiment.transfer_source"), ecfg);
  std::vector<evalx::PreparedSensor> targets;
  for (const auto &t : target_names)
    targets.push_back(load_prepared(
        cfg, find_source(sources, t, "experiment.transfer_targets"), ecfg));

  const sensbert::EncoderParams encoder =
      ckpt ? sensbert::encoder_from_checkpoint(*ckpt)
           : evalx::pretrain_sensor(source, ecfg).encoder;
  evalx::TransferOptions opts;
  opts.refit_baselines = cfg.get_bool("experiment.refit_baselines");
  const evalx::TransferReport report =
      evalx::run_transfer(source, encoder, targets, ecfg, opts);
  log << "pretrained on " << report.pretrained_on << ", encoder checksum "
      << hex64(report.encoder_checksum) << "\n";
  log_rows(log, report.rows);
  const std::string csv = out_path(cfg, "transfer.csv");
  const std::string svg = out_path(cfg, "transfer.svg");
  evalx::emit_report(evalx::transfer_rows(report), csv, evalx::ReportFormat::Csv);
  evalx::write_text(svg, evalx::report_svg(evalx::transfer_rows(report),
                                           "Pretrained on " + report.pretrained_on));
  CommandResult result{{csv, svg}, {}};
  finish(cfg, "experiment-transfer", result, log,
         {"encoder_checksum = " + hex64(report.encoder_checksum)});
  return result;
}

CommandResult cmd_report(const RunConfig &cfg, std::ostream &log,
                         const std::string &input, const std::string &output) {
  const evalx::MetricsReport report = evalx::load_report(input);
  const std::string path =
      output.empty() ? out_path(cfg, fs::path(input).stem().string() + ".svg")
                     : output;
  evalx::write_text(path, evalx::report_svg(report, fs::path(input).filename().string()));
  log << report.rows.size() << " rows -> " << path << "\n";
  CommandResult result{{path}, {}};
  finish(cfg, "report", result, log);
  return result;
}

} // namespace senscal::cli
