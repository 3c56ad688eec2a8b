// SPDX-License-Identifier: Apache-2.0
#include "senscal/dataio/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include "senscal/error.hpp"

namespace senscal::dataio {

double quantile_linear(std::span<const double> values, double q) {
  if (values.empty())
    throw DataError("quantile of an empty column");
  if (q < 0.0 || q > 1.0)
    throw ParameterError("quantile must lie in [0, 1]");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

Fence iqr_fence(std::span<const double> values) {
  const double q1 = quantile_linear(values, 0.25);
  const double q3 = quantile_linear(values, 0.75);
  const double iqr = q3 - q1;
  return {q1 - 1.5 * iqr, q3 + 1.5 * iqr};
}

SensorFrame iqr_filter(const SensorFrame &frame) {
  const std::size_t n = frame.size();
  if (n < 4)
    throw DataError("iqr_filter needs at least 4 rows, got " +
                    std::to_string(n));
  std::vector<bool> keep(n, true);
  auto fence_column = [&](const std::vector<double> &col) {
    const Fence f = iqr_fence(col);
    for (std::size_t i = 0; i < n; ++i)
      if (col[i] < f.lo || col[i] > f.hi)
        keep[i] = false;
  };
  for (std::size_t k = 0; k < frame.num_vars(); ++k)
    fence_column(frame.x.column(k));
  if (frame.y)
    fence_column(*frame.y);

  std::vector<std::size_t> rows;
  rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    if (keep[i])
      rows.push_back(i);
  return frame.select_rows(rows);
}

std::pair<SensorFrame, SensorFrame> split_train_test(const SensorFrame &frame,
                                                     double train_frac) {
  if (!(train_frac > 0.0 && train_frac < 1.0))
    throw ParameterError("train_frac must lie in (0, 1)");
  const std::size_t n = frame.size();
  const auto n_train = static_cast<std::size_t>(
      std::floor(static_cast<double>(n) * train_frac));
  if (n_train == 0 || n_train == n)
    throw DataError("split of " + std::to_string(n) +
                    " rows leaves an empty side");
  return {frame.slice(0, n_train), frame.slice(n_train, n - n_train)};
}

namespace {

std::pair<double, double> mean_std(std::span<const double> v) {
  double mean = 0.0;
  for (double x : v)
    mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v)
    var += (x - mean) * (x - mean);
  var /= static_cast<double>(v.size());
  return {mean, std::sqrt(var)};
}

} // namespace

StandardizerStats fit_standardizer(const SensorFrame &train) {
  if (train.size() == 0)
    throw DataError("cannot fit standardizer on an empty frame");
  StandardizerStats stats;
  for (std::size_t k = 0; k < train.num_vars(); ++k) {
    auto [m, s] = mean_std(train.x.column(k));
    if (!(s > 0.0))
      throw DataError("zero-variance input column '" +
                      train.variable_names[k] + "'");
    stats.x_mean.push_back(m);
    stats.x_std.push_back(s);
  }
  if (train.y) {
    auto [m, s] = mean_std(*train.y);
    if (!(s > 0.0))
      throw DataError("zero-variance reference column");
    stats.y_mean = m;
    stats.y_std = s;
  }
  return stats;
}

SensorFrame apply_standardizer(const StandardizerStats &stats,
                               const SensorFrame &frame) {
  if (stats.x_mean.size() != frame.num_vars())
    throw DimensionError("standardizer fitted on " +
                         std::to_string(stats.x_mean.size()) +
                         " variables, frame has " +
                         std::to_string(frame.num_vars()));
  SensorFrame out = frame;
  const std::size_t k_vars = frame.num_vars();
  for (std::size_t i = 0; i < frame.size(); ++i)
    for (std::size_t k = 0; k < k_vars; ++k)
      out.x(i, k) = (frame.x(i, k) - stats.x_mean[k]) / stats.x_std[k];
  if (out.y) {
    if (!stats.y_mean)
      throw DataError("standardizer has no target statistics");
    for (auto &v : *out.y)
      v = (v - *stats.y_mean) / *stats.y_std;
  }
  return out;
}

SensorFrame invert_standardizer(const StandardizerStats &stats,
                                const SensorFrame &frame) {
  SensorFrame out = frame;
  const std::size_t k_vars = frame.num_vars();
  for (std::size_t i = 0; i < frame.size(); ++i)
    for (std::size_t k = 0; k < k_vars; ++k)
      out.x(i, k) = frame.x(i, k) * stats.x_std[k] + stats.x_mean[k];
  if (out.y)
    out.y = invert_target(stats, *frame.y);
  return out;
}

std::vector<double> invert_target(const StandardizerStats &stats,
                                  std::span<const double> values) {
  if (!stats.y_mean)
    throw DataError("standardizer has no target statistics");
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i)
    out[i] = values[i] * *stats.y_std + *stats.y_mean;
  return out;
}

} // namespace senscal::dataio
