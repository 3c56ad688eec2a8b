// SPDX-License-Identifier: Apache-2.0
/**
 * @file   preprocess.hpp
 * @brief  Outlier fencing, chronological split and z-score standardisation.
 */
#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "senscal/dataio/frame.hpp"

namespace senscal::dataio {

/// Quantile by linear interpolation between order statistics at position
/// q * (n - 1) of the sorted sample.
double quantile_linear(std::span<const double> values, double q);

struct Fence {
  double lo, hi;
};

/// [Q1 - 1.5 IQR, Q3 + 1.5 IQR] of one column.
Fence iqr_fence(std::span<const double> values);

/// Single-pass IQR proximity filter: drops a row if any input value or its
/// reference value falls outside that column's fence. Fences come from the
/// frame as given. Throws DataError when N < 4.
SensorFrame iqr_filter(const SensorFrame &frame);

/// First floor(N * train_frac) rows train, the rest test.
std::pair<SensorFrame, SensorFrame> split_train_test(const SensorFrame &frame,
                                                     double train_frac = 0.9);

struct StandardizerStats {
  std::vector<double> x_mean;
  std::vector<double> x_std;
  std::optional<double> y_mean;
  std::optional<double> y_std;
};

/// Population mean and standard deviation per column of the training frame.
/// Throws DataError on a zero-variance column.
StandardizerStats fit_standardizer(const SensorFrame &train);
SensorFrame apply_standardizer(const StandardizerStats &stats,
                               const SensorFrame &frame);
/// Inverse transform of all columns.
SensorFrame invert_standardizer(const StandardizerStats &stats,
                                const SensorFrame &frame);
/// Map standardised target values back to raw units.
std::vector<double> invert_target(const StandardizerStats &stats,
                                  std::span<const double> values);

} // namespace senscal::dataio
