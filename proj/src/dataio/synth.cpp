// SPDX-License-Identifier: Apache-2.0
#include "senscal/dataio/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "senscal/dataio/csv.hpp"
#include "senscal/error.hpp"
#include "senscal/numcore/rng.hpp"

namespace senscal::dataio {

void SyntheticConfig::validate() const {
  if (n_samples == 0)
    throw ParameterError("synthetic n_samples must be positive");
  if (!(ar_coef > 0.0 && ar_coef < 1.0))
    throw ParameterError("AR coefficient must lie in (0, 1)");
  if (ar_noise < 0.0 || rh_gain < 0.0 || temp_drift_gain < 0.0 ||
      sensor_noise < 0.0)
    throw ParameterError("synthetic gains and noise scales must be >= 0");
  if (interval_s <= 0)
    throw ParameterError("synthetic interval must be positive");
}

double humidity_response(double rh_percent) {
  const double h = std::clamp(rh_percent / 100.0, 0.0, 1.0);
  return h * h / (1.05 - h);
}

SensorFrame synth_generate(const SyntheticConfig &cfg) {
  cfg.validate();
  using numcore::Rng;
  Rng truth_rng = Rng::substream(cfg.seed, "synth-truth");
  Rng rh_rng = Rng::substream(cfg.seed, "synth-rh");
  Rng temp_rng = Rng::substream(cfg.seed, "synth-temp");
  Rng noise_rng = Rng::substream(cfg.seed, "synth-noise");

  const std::size_t n = cfg.n_samples;
  const double two_pi = 2.0 * std::numbers::pi;
  const double rh_phase = two_pi * rh_rng.uniform();
  const double temp_phase = two_pi * temp_rng.uniform();
  const double stationary_sd =
      cfg.ar_noise / std::sqrt(1.0 - cfg.ar_coef * cfg.ar_coef);

  SensorFrame frame;
  frame.variable_names = role_names();
  frame.nominal_interval_s = cfg.interval_s;
  frame.timestamps.resize(n);
  frame.x = Matrix(n, 3);
  frame.y.emplace(n);

  double y = cfg.base_level + stationary_sd * truth_rng.normal();
  double rh_wander = 0.0;
  double temp_wander = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    if (t > 0)
      y = cfg.base_level + cfg.ar_coef * (y - cfg.base_level) +
          cfg.ar_noise * truth_rng.normal();
    // Slow AR(1) wander on top of the cycles keeps T and Rh smooth.
    rh_wander = 0.995 * rh_wander + 0.6 * rh_rng.normal();
    temp_wander = 0.995 * temp_wander + 0.15 * temp_rng.normal();
    const double tt = static_cast<double>(t);
    const double rh = std::clamp(
        60.0 + 25.0 * std::sin(two_pi * tt / 720.0 + rh_phase) + rh_wander,
        5.0, 98.0);
    const double temp = kSynthTempMean +
                        6.0 * std::sin(two_pi * tt / 1440.0 + temp_phase) +
                        temp_wander;

    const double distortion = 1.0 + cfg.rh_gain * humidity_response(rh);
    const double noise_sd = cfg.sensor_noise * cfg.base_level * distortion;
    double signal = y * distortion +
                    cfg.temp_drift_gain * (temp - kSynthTempMean);
    if (noise_sd > 0.0)
      signal += noise_sd * noise_rng.normal();

    frame.timestamps[t] =
        cfg.start_epoch + static_cast<std::int64_t>(t) * cfg.interval_s;
    frame.x(t, 0) = signal;
    frame.x(t, 1) = temp;
    frame.x(t, 2) = rh;
    (*frame.y)[t] = y;
  }
  return frame;
}

} // namespace senscal::dataio
