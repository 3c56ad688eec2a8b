// SPDX-License-Identifier: Apache-2.0
/**
 * @file   experiments.hpp
 * @brief  Full comparison, limited-reference and transfer protocols.
 *
 * Every protocol runs the same per-sensor preparation (IQR filter on the
 * whole frame, chronological split, z-scores from the train rows, windows)
 * and the same model evaluation routine, so a limited-data run at 100 %
 * reproduces the full comparison exactly.
 */
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "senscal/calibrate/baselines.hpp"
#include "senscal/calibrate/gru_head.hpp"
#include "senscal/dataio/frame.hpp"
#include "senscal/dataio/preprocess.hpp"
#include "senscal/dataio/windows.hpp"
#include "senscal/sensbert/model.hpp"
#include "senscal/sensbert/pretrain.hpp"

namespace senscal::evalx {

inline constexpr const char *kModelMlr = "MLR";
inline constexpr const char *kModelRf = "RF";
inline constexpr const char *kModelSensBert = "SensBERT";

struct ExperimentConfig {
  sensbert::EncoderConfig model;
  sensbert::PretrainConfig pretrain;
  calibrate::FinetuneConfig finetune;
  calibrate::RfParams rf;
  double train_frac = 0.9;
  /// Report RMSE in raw target units instead of z-scores.
  bool raw_units = false;
  /// Parallel (P, chunk) jobs in the limited-data protocol.
  std::size_t jobs = 1;
  /// Chunks with fewer windows are skipped.
  std::size_t min_chunk_windows = 2;

  void validate() const;
};

struct PreparedSensor {
  std::string name;
  dataio::StandardizerStats stats;
  /// Standardised rows of each split.
  dataio::SensorFrame train_frame;
  dataio::SensorFrame test_frame;
  dataio::WindowSet train;
  dataio::WindowSet test;
  std::size_t rows_in = 0;
  std::size_t outliers_removed = 0;
};

/// Throws DataError (prefixed with the sensor name) when the frame has no
/// reference column or either split yields no window.
PreparedSensor prepare_sensor(const std::string &name,
                              const dataio::SensorFrame &frame,
                              const ExperimentConfig &cfg);

/// Windows already standardised splits; used when reloading a cache.
PreparedSensor window_sensor(PreparedSensor sensor,
                             const ExperimentConfig &cfg);

struct MetricsRow {
  std::string sensor;
  std::string model;
  std::string experiment;
  double r2 = 0.0;
  double rmse = 0.0;
  std::optional<double> r2_improvement_pct;
  std::optional<double> rmse_improvement_pct;
  std::size_t n_test = 0;
};

struct MetricsReport {
  std::vector<MetricsRow> rows;
};

/// Fits MLR, RF and the GRU head on train windows [begin, begin + count)
/// and scores all three on the full test split. Rows come back in the
/// order MLR, RF, SensBERT; the MLR and SensBERT rows carry improvements
/// over RF.
std::vector<MetricsRow>
evaluate_models(const PreparedSensor &sensor,
                const sensbert::EncoderParams &encoder,
                const calibrate::Embeddings &train_emb,
                const calibrate::Embeddings &test_emb, std::size_t begin,
                std::size_t count, const ExperimentConfig &cfg,
                const std::string &experiment);

/// MLR and RF fitted on all train windows against an already fine-tuned
/// head. Same row layout as evaluate_models.
std::vector<MetricsRow> evaluate_trained(const PreparedSensor &sensor,
                                         const sensbert::EncoderParams &encoder,
                                         const calibrate::GruHeadParams &head,
                                         const ExperimentConfig &cfg,
                                         const std::string &experiment);

/// Head before fine-tuning, drawn from the (finetune.seed, "head-init")
/// substream. Every evaluation path starts from this head.
calibrate::GruHeadParams initial_head(const ExperimentConfig &cfg);

/// Pretrains on the sensor's train inputs (references unused).
sensbert::PretrainResult pretrain_sensor(const PreparedSensor &sensor,
                                         const ExperimentConfig &cfg);

MetricsReport
run_full_eval(const std::vector<std::pair<std::string, dataio::SensorFrame>>
                  &datasets,
              const ExperimentConfig &cfg);

struct ChunkRange {
  std::size_t begin = 0;
  std::size_t count = 0;
};

/// Contiguous ranges of floor(P * n / 100) windows covering [0, n); the
/// last may be short. Throws ParameterError for P outside (0, 100] and
/// DataError when the chunk size rounds to zero.
std::vector<ChunkRange> make_chunks(std::size_t n, double p_percent);

struct ChunkResult {
  ChunkRange range;
  std::vector<MetricsRow> rows;
  std::optional<std::string> skipped;
};

struct ModelSummary {
  std::string model;
  std::size_t n_chunks = 0;
  double r2_mean = 0.0, r2_std = 0.0;
  double rmse_mean = 0.0, rmse_std = 0.0;
};

struct ChunkPlan {
  double p_percent = 0.0;
  std::vector<ChunkResult> chunks;
  /// Population standard deviation over evaluated chunks.
  std::vector<ModelSummary> summary;
};

struct LimitedDataResult {
  std::string sensor;
  std::size_t n_train_windows = 0;
  std::vector<ChunkPlan> plans;
};

/// Pretrains once on the full train split, then for every P and chunk fits
/// all models on that chunk alone.
LimitedDataResult run_limited_data(const std::string &name,
                                   const dataio::SensorFrame &frame,
                                   const std::vector<double> &p_list,
                                   const ExperimentConfig &cfg);

struct TransferReport {
  std::string pretrained_on;
  /// `sensor` holds the tested-on sensor.
  std::vector<MetricsRow> rows;
  std::uint64_t encoder_checksum = 0;
};

struct TransferOptions {
  /// Fit MLR/RF on each target's train split instead of reusing the
  /// source-trained baselines.
  bool refit_baselines = false;
};

/// Frozen source encoder, head fine-tuned per target. The source sensor is
/// tested first as the self row. Throws DimensionError when a target's
/// variables differ from the encoder's.
TransferReport run_transfer(const PreparedSensor &source,
                            const sensbert::EncoderParams &encoder,
                            const std::vector<PreparedSensor> &targets,
                            const ExperimentConfig &cfg,
                            const TransferOptions &opts = {});

/// Prepares all sensors and pretrains on the source first.
TransferReport
run_transfer(const std::pair<std::string, dataio::SensorFrame> &source,
             const std::vector<std::pair<std::string, dataio::SensorFrame>>
                 &targets,
             const ExperimentConfig &cfg, const TransferOptions &opts = {});

} // namespace senscal::evalx
