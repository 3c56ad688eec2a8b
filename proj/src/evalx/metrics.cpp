// SPDX-License-Identifier: Apache-2.0
#include "senscal/evalx/metrics.hpp"

#include <cmath>
#include <string>

#include "senscal/error.hpp"

namespace senscal::evalx {

namespace {

void check_lengths(std::span<const double> a, std::span<const double> b,
                   std::size_t min_len, const char *what) {
  if (a.size() != b.size())
    throw DimensionError(std::string(what) + ": " + std::to_string(a.size()) +
                         " truth values vs " + std::to_string(b.size()) +
                         " predictions");
  if (a.size() < min_len)
    throw DimensionError(std::string(what) + " needs at least " +
                         std::to_string(min_len) + " values");
}

} // namespace

double r2(std::span<const double> truth, std::span<const double> pred) {
  check_lengths(truth, pred, 2, "r2");
  double mean = 0.0;
  for (double v : truth)
    mean += v;
  mean /= static_cast<double>(truth.size());
  double ss_tot = 0.0, ss_res = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ss_tot += (truth[i] - mean) * (truth[i] - mean);
    ss_res += (truth[i] - pred[i]) * (truth[i] - pred[i]);
  }
  if (!(ss_tot > 0.0))
    throw DataError("r2 is undefined for a constant truth series");
  return 1.0 - ss_res / ss_tot;
}

double rmse(std::span<const double> truth, std::span<const double> pred) {
  check_lengths(truth, pred, 1, "rmse");
  double ss = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i)
    ss += (truth[i] - pred[i]) * (truth[i] - pred[i]);
  return std::sqrt(ss / static_cast<double>(truth.size()));
}

double relative_improvement(double candidate, double baseline,
                            Direction direction) {
  if (baseline == 0.0)
    throw ParameterError("relative improvement against a zero baseline");
  const double delta = direction == Direction::HigherIsBetter
                           ? candidate - baseline
                           : baseline - candidate;
  return delta / baseline * 100.0;
}

} // namespace senscal::evalx
