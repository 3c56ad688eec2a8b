// SPDX-License-Identifier: Apache-2.0
#include "senscal/dataio/csv.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "senscal/error.hpp"

namespace senscal::dataio {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
    s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
    s.remove_suffix(1);
  return s;
}

std::optional<double> parse_double(std::string_view text) {
  text = trim(text);
  if (text.empty())
    return std::nullopt;
  // from_chars rejects a leading '+'.
  if (text.front() == '+')
    text.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(),
                                   value);
  if (ec != std::errc() || ptr != text.data() + text.size() ||
      !std::isfinite(value))
    return std::nullopt;
  return value;
}

bool parse_int(std::string_view s, int &out) {
  if (s.empty())
    return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

// Days since 1970-01-01 of a proleptic Gregorian date.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m > 2 ? m - 3 : m + 9) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

} // namespace

std::optional<std::size_t> CsvTable::find(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name)
      return i;
  return std::nullopt;
}

CsvTable parse_csv(std::string_view text) {
  // Strip a UTF-8 byte-order mark.
  if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF")
    text.remove_prefix(3);

  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t i = 0;
  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    // Skip blank lines.
    if (!(record.size() == 1 && record[0].empty()))
      records.push_back(std::move(record));
    record.clear();
  };
  while (i < text.size()) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\n' || c == '\r') {
      end_record();
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n')
        ++i;
    } else {
      field.push_back(c);
      field_started = true;
    }
    ++i;
  }
  if (in_quotes)
    throw DataError("csv: unterminated quoted field");
  if (field_started || !field.empty() || !record.empty())
    end_record();

  if (records.empty())
    throw DataError("csv: missing header row");
  CsvTable table;
  table.header = std::move(records.front());
  for (auto &h : table.header)
    h = std::string(trim(h));
  table.rows.assign(std::make_move_iterator(records.begin() + 1),
                    std::make_move_iterator(records.end()));
  return table;
}

CsvTable read_csv(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw DataError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str());
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos)
    return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"')
      out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::optional<std::int64_t> parse_timestamp(std::string_view text) {
  text = trim(text);
  if (text.empty())
    return std::nullopt;

  bool all_digits = true;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (!(std::isdigit(static_cast<unsigned char>(c)) ||
          (i == 0 && c == '-')))
      all_digits = false;
  }
  if (all_digits && !(text.size() == 1 && text[0] == '-')) {
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec == std::errc() && ptr == text.data() + text.size())
      return v;
    return std::nullopt;
  }

  // YYYY-MM-DD
  if (text.size() < 10 || text[4] != '-' || text[7] != '-')
    return std::nullopt;
  int year, month, day;
  if (!parse_int(text.substr(0, 4), year) ||
      !parse_int(text.substr(5, 2), month) ||
      !parse_int(text.substr(8, 2), day))
    return std::nullopt;
  if (month < 1 || month > 12 || day < 1 || day > 31)
    return std::nullopt;
  std::int64_t seconds = days_from_civil(year, static_cast<unsigned>(month),
                                         static_cast<unsigned>(day)) *
                         86400;
  std::string_view rest = text.substr(10);
  if (rest.empty())
    return seconds;
  if (rest[0] != 'T' && rest[0] != ' ')
    return std::nullopt;
  rest.remove_prefix(1);
  int hour = 0, minute = 0, second = 0;
  if (rest.size() < 5 || rest[2] != ':' ||
      !parse_int(rest.substr(0, 2), hour) ||
      !parse_int(rest.substr(3, 2), minute))
    return std::nullopt;
  rest.remove_prefix(5);
  if (!rest.empty() && rest[0] == ':') {
    if (rest.size() < 3 || !parse_int(rest.substr(1, 2), second))
      return std::nullopt;
    rest.remove_prefix(3);
  }
  if (hour > 23 || minute > 59 || second > 60)
    return std::nullopt;
  // Fractional seconds are truncated.
  if (!rest.empty() && rest[0] == '.') {
    rest.remove_prefix(1);
    while (!rest.empty() && std::isdigit(static_cast<unsigned char>(rest[0])))
      rest.remove_prefix(1);
  }
  seconds += hour * 3600 + minute * 60 + second;
  if (rest.empty() || rest == "Z")
    return seconds;
  if ((rest[0] == '+' || rest[0] == '-') && rest.size() >= 3) {
    const int sign = rest[0] == '-' ? -1 : 1;
    int oh = 0, om = 0;
    std::string_view off = rest.substr(1);
    if (!parse_int(off.substr(0, 2), oh))
      return std::nullopt;
    off.remove_prefix(2);
    if (!off.empty()) {
      if (off[0] == ':')
        off.remove_prefix(1);
      if (!parse_int(off, om))
        return std::nullopt;
    }
    return seconds - sign * (oh * 3600 + om * 60);
  }
  return std::nullopt;
}

LoadResult load_csv_text(std::string_view text, const ColumnMap &columns) {
  const CsvTable table = parse_csv(text);
  auto require = [&](const std::string &name, const char *role) {
    auto idx = table.find(name);
    if (!idx)
      throw DataError(std::string("csv: column '") + name + "' for role " +
                      role + " not found in header");
    return *idx;
  };
  const std::size_t ts_col = require(columns.timestamp, "timestamp");
  const std::size_t input_cols[3] = {
      require(columns.signal, "signal"),
      require(columns.temperature, "temperature"),
      require(columns.humidity, "humidity")};
  std::optional<std::size_t> ref_col;
  if (columns.reference)
    ref_col = require(*columns.reference, "reference");

  LoadResult result;
  SensorFrame &frame = result.frame;
  frame.variable_names = role_names();
  std::vector<double> xs;
  std::vector<double> ys;
  for (const auto &row : table.rows) {
    auto cell = [&](std::size_t c) -> std::string_view {
      return c < row.size() ? std::string_view(row[c]) : std::string_view();
    };
    auto ts = parse_timestamp(cell(ts_col));
    std::optional<double> vals[3];
    bool ok = ts.has_value();
    for (int k = 0; k < 3 && ok; ++k) {
      vals[k] = parse_double(cell(input_cols[k]));
      ok = vals[k].has_value();
    }
    std::optional<double> ref;
    if (ok && ref_col) {
      ref = parse_double(cell(*ref_col));
      ok = ref.has_value();
    }
    if (!ok) {
      ++result.dropped;
      continue;
    }
    if (!frame.timestamps.empty() && *ts <= frame.timestamps.back())
      throw DataError("csv: timestamps not strictly increasing at data row " +
                      std::to_string(frame.timestamps.size() +
                                     result.dropped + 1));
    frame.timestamps.push_back(*ts);
    for (auto &v : vals)
      xs.push_back(*v);
    if (ref)
      ys.push_back(*ref);
  }
  if (frame.timestamps.empty())
    throw DataError("csv: no rows survived parsing");
  frame.x = Matrix(frame.timestamps.size(), 3);
  frame.x.values = std::move(xs);
  if (ref_col)
    frame.y = std::move(ys);
  frame.nominal_interval_s = infer_interval(frame.timestamps);
  frame.validate();
  return result;
}

LoadResult load_csv(const std::string &path, const ColumnMap &columns) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw DataError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return load_csv_text(buf.str(), columns);
}

std::string to_csv_text(const SensorFrame &frame, const ColumnMap &columns) {
  if (frame.num_vars() != 3)
    throw DataError("write_csv: expected 3 input variables (S, T, Rh)");
  std::string out;
  out += csv_escape(columns.timestamp) + "," + csv_escape(columns.signal) +
         "," + csv_escape(columns.temperature) + "," +
         csv_escape(columns.humidity);
  const bool with_ref = frame.y && columns.reference;
  if (with_ref)
    out += "," + csv_escape(*columns.reference);
  out += "\n";
  for (std::size_t i = 0; i < frame.size(); ++i) {
    out += std::to_string(frame.timestamps[i]);
    for (std::size_t k = 0; k < 3; ++k)
      out += "," + format_double(frame.x(i, k));
    if (with_ref)
      out += "," + format_double((*frame.y)[i]);
    out += "\n";
  }
  return out;
}

void write_csv(const SensorFrame &frame, const std::string &path,
               const ColumnMap &columns) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw DataError("cannot write " + path);
  out << to_csv_text(frame, columns);
  if (!out)
    throw DataError("write failed for " + path);
}

} // namespace senscal::dataio
