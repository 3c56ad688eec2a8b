// SPDX-License-Identifier: Apache-2.0
/**
 * @file   frame.hpp
 * @brief  Timestamped sensor matrices and their input-only view.
 */
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace senscal::dataio {

/// Row-major dense matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), values(r * c, fill) {}

  double &operator()(std::size_t i, std::size_t j) {
    return values[i * cols + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    return values[i * cols + j];
  }
  std::span<const double> row(std::size_t i) const {
    return {values.data() + i * cols, cols};
  }
  std::vector<double> column(std::size_t j) const;
};

/// Timestamps plus the K sensor inputs, without any reference column.
/// Pretraining consumes only this view.
struct InputView {
  std::span<const std::int64_t> timestamps;
  const Matrix *x = nullptr;
  std::span<const std::string> variable_names;
  std::int64_t nominal_interval_s = 60;
};

struct SensorFrame {
  std::vector<std::int64_t> timestamps;
  Matrix x;
  std::optional<std::vector<double>> y;
  std::vector<std::string> variable_names;
  std::int64_t nominal_interval_s = 60;

  std::size_t size() const { return timestamps.size(); }
  std::size_t num_vars() const { return x.cols; }
  InputView inputs() const {
    return {timestamps, &x, variable_names, nominal_interval_s};
  }

  /// New frame holding the given rows, in order.
  SensorFrame select_rows(std::span<const std::size_t> rows) const;
  SensorFrame slice(std::size_t begin, std::size_t count) const;

  /// Throws DataError if the structural invariants do not hold.
  void validate() const;
};

/// Median positive gap between consecutive timestamps (60 if N < 2).
std::int64_t infer_interval(std::span<const std::int64_t> timestamps);

} // namespace senscal::dataio
