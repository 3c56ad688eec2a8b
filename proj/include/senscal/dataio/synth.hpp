// SPDX-License-Identifier: Apache-2.0
/**
 * @file   synth.hpp
 * @brief  Synthetic co-location data with humidity and temperature artefacts.
 *
 * The true concentration y follows a stationary AR(1) process. Relative
 * humidity and temperature are smooth bounded cycles with slow noise. The
 * low-cost signal is
 *
 *   S = y * (1 + rh_gain * g(Rh)) + temp_drift_gain * (T - T_mean) + e,
 *   g(h) = h^2 / (1.05 - h),  h = Rh / 100,
 *
 * where e is Gaussian with standard deviation
 * sensor_noise * base_level * (1 + rh_gain * g(Rh)), so both the bias and
 * the scatter grow at high humidity.
 */
#pragma once

#include <cstdint>

#include "senscal/dataio/frame.hpp"

namespace senscal::dataio {

struct SyntheticConfig {
  std::size_t n_samples = 5000;
  std::uint64_t seed = 7;
  double ar_coef = 0.98;
  double ar_noise = 1.5;
  double base_level = 25.0;
  double rh_gain = 0.5;
  double temp_drift_gain = 0.5;
  double sensor_noise = 0.1;
  std::int64_t interval_s = 60;
  std::int64_t start_epoch = 1467331200; // 2016-07-01T00:00:00Z

  /// Throws ParameterError when out of range.
  void validate() const;
};

/// Humidity distortion curve g(h), convex and increasing on [0, 1).
double humidity_response(double rh_percent);

/// Mean temperature of the generated cycle.
inline constexpr double kSynthTempMean = 20.0;

/// Frame with x = (S, T, Rh) and y = truth.
SensorFrame synth_generate(const SyntheticConfig &cfg);

} // namespace senscal::dataio
