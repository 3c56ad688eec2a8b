// SPDX-License-Identifier: Apache-2.0
/**
 * @file   csv.hpp
 * @brief  RFC-4180 CSV reading and the sensor/reference ingestion adapter.
 */
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "senscal/dataio/frame.hpp"

namespace senscal::dataio {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a header column, or nullopt.
  std::optional<std::size_t> find(std::string_view name) const;
};

/// Parses CSV text (header row required). Quoted fields may contain commas,
/// doubled quotes and newlines.
CsvTable parse_csv(std::string_view text);
CsvTable read_csv(const std::string &path);

/// Quotes a field if it contains a comma, quote or newline.
std::string csv_escape(std::string_view field);

/// Which header columns carry each role. Names are never inferred.
struct ColumnMap {
  std::string timestamp = "timestamp";
  std::string signal = "signal";
  std::string temperature = "temperature";
  std::string humidity = "humidity";
  std::optional<std::string> reference = std::string("reference");
};

struct LoadResult {
  SensorFrame frame;
  std::size_t dropped = 0;
};

/// Variable labels used for the three input roles, in column order.
inline const std::vector<std::string> &role_names() {
  static const std::vector<std::string> names{"S", "T", "Rh"};
  return names;
}

/// Integer epoch seconds or ISO-8601 (date, time, optional fraction and
/// Z/+hh:mm offset). Returns nullopt if unparsable.
std::optional<std::int64_t> parse_timestamp(std::string_view text);

/// Loads a frame. Rows with an empty or unparsable mapped cell are dropped
/// and counted. Throws DataError on a missing column, non-increasing
/// timestamps, or when no row survives.
LoadResult load_csv(const std::string &path, const ColumnMap &columns);
LoadResult load_csv_text(std::string_view text, const ColumnMap &columns);

/// Writes timestamp, S, T, Rh and (when present) reference columns using
/// the names in `columns`, with round-trip precision.
void write_csv(const SensorFrame &frame, const std::string &path,
               const ColumnMap &columns = {});
std::string to_csv_text(const SensorFrame &frame,
                        const ColumnMap &columns = {});

} // namespace senscal::dataio
