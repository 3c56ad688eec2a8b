// SPDX-License-Identifier: Apache-2.0
#include "senscal/evalx/experiments.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <thread>

#include "senscal/error.hpp"
#include "senscal/evalx/metrics.hpp"

namespace senscal::evalx {

namespace cal = calibrate;

void ExperimentConfig::validate() const {
  model.validate();
  pretrain.validate();
  finetune.validate();
  rf.validate();
  if (!(train_frac > 0.0 && train_frac < 1.0))
    throw ParameterError("train fraction must lie in (0, 1)");
  if (pretrain.overlap >= model.M)
    throw ParameterError("window overlap " + std::to_string(pretrain.overlap) +
                         " must be below the window length " +
                         std::to_string(model.M));
  dataio::validate_mask_params(model.M, pretrain.mask_prob,
                               pretrain.span_length);
}

PreparedSensor prepare_sensor(const std::string &name,
                              const dataio::SensorFrame &frame,
                              const ExperimentConfig &cfg) {
  PreparedSensor out;
  out.name = name;
  out.rows_in = frame.size();
  try {
    if (!frame.y)
      throw DataError("no reference column");
    const dataio::SensorFrame kept = dataio::iqr_filter(frame);
    out.outliers_removed = frame.size() - kept.size();
    auto [train, test] = dataio::split_train_test(kept, cfg.train_frac);
    out.stats = dataio::fit_standardizer(train);
    out.train_frame = dataio::apply_standardizer(out.stats, train);
    out.test_frame = dataio::apply_standardizer(out.stats, test);
  } catch (const DataError &e) {
    throw DataError("sensor '" + name + "': " + e.what());
  }
  return window_sensor(std::move(out), cfg);
}

PreparedSensor window_sensor(PreparedSensor sensor,
                             const ExperimentConfig &cfg) {
  const std::size_t M = cfg.model.M, overlap = cfg.pretrain.overlap;
  try {
    sensor.train = dataio::make_windows(sensor.train_frame, M, overlap);
    sensor.test = dataio::make_windows(sensor.test_frame, M, overlap);
  } catch (const DataError &e) {
    throw DataError("sensor '" + sensor.name + "': " + e.what());
  }
  if (sensor.train.count() == 0 || sensor.test.count() == 0)
    throw DataError("sensor '" + sensor.name +
                    "': split leaves no complete window (" +
                    std::to_string(sensor.train.count()) + " train, " +
                    std::to_string(sensor.test.count()) + " test)");
  if (!sensor.train.targets || !sensor.test.targets)
    throw DataError("sensor '" + sensor.name + "': no reference column");
  return sensor;
}

cal::GruHeadParams initial_head(const ExperimentConfig &cfg) {
  numcore::Rng rng = numcore::Rng::substream(cfg.finetune.seed, "head-init");
  return cal::init_head(cfg.model.h_dim, cfg.finetune.hidden,
                        cfg.finetune.p_drop, rng);
}

namespace {

cal::Embeddings slice(const cal::Embeddings &emb, std::size_t begin,
                      std::size_t count) {
  cal::Embeddings out;
  out.count = count;
  out.M = emb.M;
  out.dim = emb.dim;
  const std::size_t stride = emb.M * emb.dim;
  out.values.assign(emb.values.begin() + static_cast<std::ptrdiff_t>(begin * stride),
                    emb.values.begin() +
                        static_cast<std::ptrdiff_t>((begin + count) * stride));
  return out;
}

MetricsRow score(const PreparedSensor &sensor, const std::string &model,
                 const std::string &experiment, const std::vector<double> &pred,
                 const ExperimentConfig &cfg) {
  const std::vector<double> &truth = *sensor.test.targets;
  MetricsRow row;
  row.sensor = sensor.name;
  row.model = model;
  row.experiment = experiment;
  row.n_test = truth.size();
  if (cfg.raw_units) {
    const auto t = dataio::invert_target(sensor.stats, truth);
    const auto p = dataio::invert_target(sensor.stats, pred);
    row.r2 = r2(t, p);
    row.rmse = rmse(t, p);
  } else {
    row.r2 = r2(truth, pred);
    row.rmse = rmse(truth, pred);
  }
  if (!std::isfinite(row.r2) || !std::isfinite(row.rmse))
    throw NumericError(model + " on sensor '" + sensor.name +
                       "' produced non-finite metrics");
  return row;
}

void add_improvements(std::vector<MetricsRow> &rows, std::size_t rf_index) {
  const MetricsRow &rf = rows[rf_index];
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i == rf_index)
      continue;
    if (rf.r2 != 0.0)
      rows[i].r2_improvement_pct =
          relative_improvement(rows[i].r2, rf.r2, Direction::HigherIsBetter);
    if (rf.rmse != 0.0)
      rows[i].rmse_improvement_pct = relative_improvement(
          rows[i].rmse, rf.rmse, Direction::LowerIsBetter);
  }
}

std::vector<double> sensbert_predictions(const cal::Embeddings &train_emb,
                                         std::span<const double> targets,
                                         const cal::Embeddings &test_emb,
                                         const ExperimentConfig &cfg) {
  const cal::FinetuneResult tuned =
      cal::finetune_embeddings(train_emb, targets, initial_head(cfg), cfg.finetune);
  return cal::predict_embeddings(test_emb, tuned.head);
}

template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn &&fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i)
      fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr failure;
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < jobs; ++w)
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < n && !failed; i = next++) {
        try {
          fn(i);
        } catch (...) {
          if (!failed.exchange(true))
            failure = std::current_exception();
        }
      }
    });
  for (auto &w : workers)
    w.join();
  if (failure)
    std::rethrow_exception(failure);
}

double mean_of(const std::vector<double> &v) {
  double s = 0.0;
  for (double x : v)
    s += x;
  return s / static_cast<double>(v.size());
}

double std_of(const std::vector<double> &v, double mean) {
  double s = 0.0;
  for (double x : v)
    s += (x - mean) * (x - mean);
  return std::sqrt(s / static_cast<double>(v.size()));
}

} // namespace

std::vector<MetricsRow>
evaluate_models(const PreparedSensor &sensor,
                const sensbert::EncoderParams &encoder,
                const cal::Embeddings &train_emb,
                const cal::Embeddings &test_emb, std::size_t begin,
                std::size_t count, const ExperimentConfig &cfg,
                const std::string &experiment) {
  cal::check_compatible(encoder, sensor.train);
  if (begin + count > sensor.train.count() || count == 0)
    throw ParameterError("train range [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") outside " +
                         std::to_string(sensor.train.count()) + " windows");
  if (train_emb.count != sensor.train.count() ||
      test_emb.count != sensor.test.count())
    throw DimensionError("embeddings do not match the sensor's windows");

  const dataio::WindowSet train = sensor.train.subset(begin, count);
  const cal::Design train_design = cal::flatten_windows(train);
  const cal::Design test_design = cal::flatten_windows(sensor.test);

  std::vector<MetricsRow> rows;
  const cal::MlrModel mlr = cal::mlr_fit(train_design.x, train_design.y);
  rows.push_back(score(sensor, kModelMlr, experiment,
                       cal::mlr_predict(mlr, test_design.x), cfg));
  const cal::RfModel rf = cal::rf_fit(train_design.x, train_design.y, cfg.rf);
  rows.push_back(score(sensor, kModelRf, experiment,
                       cal::rf_predict(rf, test_design.x), cfg));
  rows.push_back(score(sensor, kModelSensBert, experiment,
                       sensbert_predictions(slice(train_emb, begin, count),
                                            *train.targets, test_emb, cfg),
                       cfg));
  add_improvements(rows, 1);
  return rows;
}

std::vector<MetricsRow> evaluate_trained(const PreparedSensor &sensor,
                                         const sensbert::EncoderParams &encoder,
                                         const cal::GruHeadParams &head,
                                         const ExperimentConfig &cfg,
                                         const std::string &experiment) {
  cal::check_compatible(encoder, sensor.train);
  const cal::Design train_design = cal::flatten_windows(sensor.train);
  const cal::Design test_design = cal::flatten_windows(sensor.test);
  std::vector<MetricsRow> rows;
  const cal::MlrModel mlr = cal::mlr_fit(train_design.x, train_design.y);
  rows.push_back(score(sensor, kModelMlr, experiment,
                       cal::mlr_predict(mlr, test_design.x), cfg));
  const cal::RfModel rf = cal::rf_fit(train_design.x, train_design.y, cfg.rf);
  rows.push_back(score(sensor, kModelRf, experiment,
                       cal::rf_predict(rf, test_design.x), cfg));
  rows.push_back(score(sensor, kModelSensBert, experiment,
                       cal::predict(encoder, head, sensor.test), cfg));
  add_improvements(rows, 1);
  return rows;
}

sensbert::PretrainResult pretrain_sensor(const PreparedSensor &sensor,
                                         const ExperimentConfig &cfg) {
  return sensbert::pretrain(sensor.train_frame.inputs(), cfg.model,
                            cfg.pretrain);
}

MetricsReport
run_full_eval(const std::vector<std::pair<std::string, dataio::SensorFrame>>
                  &datasets,
              const ExperimentConfig &cfg) {
  cfg.validate();
  MetricsReport report;
  for (const auto &[name, frame] : datasets) {
    const PreparedSensor sensor = prepare_sensor(name, frame, cfg);
    const sensbert::PretrainResult pre = pretrain_sensor(sensor, cfg);
    const cal::Embeddings train_emb =
        cal::compute_embeddings(pre.encoder, sensor.train);
    const cal::Embeddings test_emb =
        cal::compute_embeddings(pre.encoder, sensor.test);
    for (auto &row : evaluate_models(sensor, pre.encoder, train_emb, test_emb,
                                     0, sensor.train.count(), cfg, "full"))
      report.rows.push_back(std::move(row));
  }
  return report;
}

std::vector<ChunkRange> make_chunks(std::size_t n, double p_percent) {
  if (!(p_percent > 0.0 && p_percent <= 100.0))
    throw ParameterError("paired-data percentage must lie in (0, 100]");
  const auto size = static_cast<std::size_t>(
      std::floor(p_percent * static_cast<double>(n) / 100.0));
  if (size == 0)
    throw DataError(std::to_string(p_percent) + " % of " + std::to_string(n) +
                    " windows is less than one window");
  std::vector<ChunkRange> out;
  for (std::size_t begin = 0; begin < n; begin += size)
    out.push_back({begin, std::min(size, n - begin)});
  return out;
}

LimitedDataResult run_limited_data(const std::string &name,
                                   const dataio::SensorFrame &frame,
                                   const std::vector<double> &p_list,
                                   const ExperimentConfig &cfg) {
  cfg.validate();
  if (p_list.empty())
    throw ParameterError("limited-data run needs at least one percentage");
  const PreparedSensor sensor = prepare_sensor(name, frame, cfg);
  LimitedDataResult result;
  result.sensor = name;
  result.n_train_windows = sensor.train.count();
  for (double p : p_list) {
    ChunkPlan plan;
    plan.p_percent = p;
    for (const auto &range : make_chunks(sensor.train.count(), p))
      plan.chunks.push_back({range, {}, std::nullopt});
    result.plans.push_back(std::move(plan));
  }

  const sensbert::PretrainResult pre = pretrain_sensor(sensor, cfg);
  const cal::Embeddings train_emb =
      cal::compute_embeddings(pre.encoder, sensor.train);
  const cal::Embeddings test_emb =
      cal::compute_embeddings(pre.encoder, sensor.test);

  std::vector<std::pair<std::size_t, std::size_t>> jobs;
  for (std::size_t p = 0; p < result.plans.size(); ++p)
    for (std::size_t c = 0; c < result.plans[p].chunks.size(); ++c)
      jobs.emplace_back(p, c);

  parallel_for(jobs.size(), cfg.jobs, [&](std::size_t j) {
    ChunkPlan &plan = result.plans[jobs[j].first];
    ChunkResult &chunk = plan.chunks[jobs[j].second];
    if (chunk.range.count < cfg.min_chunk_windows) {
      chunk.skipped = "chunk holds " + std::to_string(chunk.range.count) +
                      " windows, fewer than " +
                      std::to_string(cfg.min_chunk_windows);
      return;
    }
    char tag[64];
    std::snprintf(tag, sizeof tag, "limited-p%g-chunk%zu", plan.p_percent,
                  jobs[j].second);
    const bool whole = chunk.range.begin == 0 &&
                       chunk.range.count == sensor.train.count();
    chunk.rows = evaluate_models(sensor, pre.encoder, train_emb, test_emb,
                                 chunk.range.begin, chunk.range.count, cfg,
                                 whole ? std::string("full") : std::string(tag));
  });

  for (auto &plan : result.plans) {
    for (const char *model : {kModelMlr, kModelRf, kModelSensBert}) {
      std::vector<double> r2s, rmses;
      for (const auto &chunk : plan.chunks)
        for (const auto &row : chunk.rows)
          if (row.model == model) {
            r2s.push_back(row.r2);
            rmses.push_back(row.rmse);
          }
      if (r2s.empty())
        continue;
      ModelSummary s;
      s.model = model;
      s.n_chunks = r2s.size();
      s.r2_mean = mean_of(r2s);
      s.r2_std = std_of(r2s, s.r2_mean);
      s.rmse_mean = mean_of(rmses);
      s.rmse_std = std_of(rmses, s.rmse_mean);
      plan.summary.push_back(s);
    }
  }
  return result;
}

TransferReport run_transfer(const PreparedSensor &source,
                            const sensbert::EncoderParams &encoder,
                            const std::vector<PreparedSensor> &targets,
                            const ExperimentConfig &cfg,
                            const TransferOptions &opts) {
  cfg.validate();
  cal::check_compatible(encoder, source.train);
  for (const auto &t : targets)
    cal::check_compatible(encoder, t.train);

  TransferReport report;
  report.pretrained_on = source.name;
  report.encoder_checksum = sensbert::checksum(encoder.named());

  const cal::Design source_design = cal::flatten_windows(source.train);
  std::optional<cal::MlrModel> source_mlr;
  std::optional<cal::RfModel> source_rf;
  if (!opts.refit_baselines) {
    source_mlr = cal::mlr_fit(source_design.x, source_design.y);
    source_rf = cal::rf_fit(source_design.x, source_design.y, cfg.rf);
  }

  const std::string experiment = "transfer-from-" + source.name;
  std::vector<const PreparedSensor *> tested{&source};
  for (const auto &t : targets)
    if (t.name != source.name)
      tested.push_back(&t);

  for (const PreparedSensor *target : tested) {
    const cal::Design train_design = cal::flatten_windows(target->train);
    const cal::Design test_design = cal::flatten_windows(target->test);
    std::vector<MetricsRow> rows;
    if (opts.refit_baselines) {
      const auto mlr = cal::mlr_fit(train_design.x, train_design.y);
      const auto rf = cal::rf_fit(train_design.x, train_design.y, cfg.rf);
      rows.push_back(score(*target, kModelMlr, experiment,
                           cal::mlr_predict(mlr, test_design.x), cfg));
      rows.push_back(score(*target, kModelRf, experiment,
                           cal::rf_predict(rf, test_design.x), cfg));
    } else {
      rows.push_back(score(*target, kModelMlr, experiment,
                           cal::mlr_predict(*source_mlr, test_design.x), cfg));
      rows.push_back(score(*target, kModelRf, experiment,
                           cal::rf_predict(*source_rf, test_design.x), cfg));
    }
    const cal::Embeddings train_emb =
        cal::compute_embeddings(encoder, target->train);
    const cal::Embeddings test_emb =
        cal::compute_embeddings(encoder, target->test);
    rows.push_back(score(*target, kModelSensBert, experiment,
                         sensbert_predictions(train_emb, *target->train.targets,
                                              test_emb, cfg),
                         cfg));
    add_improvements(rows, 1);
    for (auto &row : rows)
      report.rows.push_back(std::move(row));
  }
  if (sensbert::checksum(encoder.named()) != report.encoder_checksum)
    throw ContractError("frozen encoder changed during transfer");
  return report;
}

TransferReport
run_transfer(const std::pair<std::string, dataio::SensorFrame> &source,
             const std::vector<std::pair<std::string, dataio::SensorFrame>>
                 &targets,
             const ExperimentConfig &cfg, const TransferOptions &opts) {
  cfg.validate();
  const PreparedSensor src = prepare_sensor(source.first, source.second, cfg);
  std::vector<PreparedSensor> prepared;
  for (const auto &[name, frame] : targets)
    prepared.push_back(prepare_sensor(name, frame, cfg));
  const sensbert::PretrainResult pre = pretrain_sensor(src, cfg);
  return run_transfer(src, pre.encoder, prepared, cfg, opts);
}

} // namespace senscal::evalx
