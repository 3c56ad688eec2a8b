// SPDX-License-Identifier: Apache-2.0
#include "senscal/dataio/frame.hpp"

#include <algorithm>
#include <cmath>

#include "senscal/error.hpp"

namespace senscal::dataio {

std::vector<double> Matrix::column(std::size_t j) const {
  std::vector<double> out(rows);
  for (std::size_t i = 0; i < rows; ++i)
    out[i] = values[i * cols + j];
  return out;
}

SensorFrame SensorFrame::select_rows(std::span<const std::size_t> rows) const {
  SensorFrame out;
  out.variable_names = variable_names;
  out.nominal_interval_s = nominal_interval_s;
  out.x = Matrix(rows.size(), x.cols);
  out.timestamps.reserve(rows.size());
  if (y)
    out.y.emplace().reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::size_t src = rows[r];
    out.timestamps.push_back(timestamps[src]);
    std::copy_n(x.values.begin() + src * x.cols, x.cols,
                out.x.values.begin() + r * x.cols);
    if (y)
      out.y->push_back((*y)[src]);
  }
  return out;
}

SensorFrame SensorFrame::slice(std::size_t begin, std::size_t count) const {
  std::vector<std::size_t> rows(count);
  for (std::size_t i = 0; i < count; ++i)
    rows[i] = begin + i;
  return select_rows(rows);
}

void SensorFrame::validate() const {
  if (timestamps.empty())
    throw DataError("frame has no rows");
  if (x.cols == 0)
    throw DataError("frame has no input variables");
  if (x.rows != timestamps.size())
    throw DataError("frame rows misaligned: " + std::to_string(x.rows) +
                    " input rows vs " + std::to_string(timestamps.size()) +
                    " timestamps");
  if (y && y->size() != timestamps.size())
    throw DataError("reference column length does not match frame");
  if (variable_names.size() != x.cols)
    throw DataError("variable_names size does not match input columns");
  if (nominal_interval_s <= 0)
    throw DataError("nominal interval must be positive");
  for (std::size_t i = 1; i < timestamps.size(); ++i)
    if (timestamps[i] <= timestamps[i - 1])
      throw DataError("timestamps not strictly increasing at row " +
                      std::to_string(i));
  for (double v : x.values)
    if (!std::isfinite(v))
      throw DataError("non-finite input value");
  if (y)
    for (double v : *y)
      if (!std::isfinite(v))
        throw DataError("non-finite reference value");
}

std::int64_t infer_interval(std::span<const std::int64_t> timestamps) {
  if (timestamps.size() < 2)
    return 60;
  std::vector<std::int64_t> gaps;
  gaps.reserve(timestamps.size() - 1);
  for (std::size_t i = 1; i < timestamps.size(); ++i)
    if (timestamps[i] > timestamps[i - 1])
      gaps.push_back(timestamps[i] - timestamps[i - 1]);
  if (gaps.empty())
    return 60;
  auto mid = gaps.begin() + static_cast<std::ptrdiff_t>(gaps.size() / 2);
  std::nth_element(gaps.begin(), mid, gaps.end());
  return *mid;
}

} // namespace senscal::dataio
