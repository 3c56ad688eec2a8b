// SPDX-License-Identifier: Apache-2.0
#include "senscal/evalx/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "senscal/dataio/csv.hpp"
#include "senscal/error.hpp"

namespace senscal::evalx {

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string short_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

double parse_double(const std::string &cell, std::size_t line) {
  double v = 0.0;
  const char *end = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(cell.data(), end, v);
  if (ec != std::errc() || ptr != end)
    throw FormatError("report line " + std::to_string(line) +
                      ": not a number: '" + cell + "'");
  return v;
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
    case '&': out += "&amp;"; break;
    case '<': out += "&lt;"; break;
    case '>': out += "&gt;"; break;
    case '"': out += "&quot;"; break;
    default: out += c;
    }
  }
  return out;
}

const char *kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b"};

} // namespace

std::string report_csv(const MetricsReport &report) {
  if (report.rows.empty())
    throw ContractError("refusing to write an empty report");
  std::string out = std::string(kReportHeader) + "\n";
  for (const auto &r : report.rows) {
    out += dataio::csv_escape(r.sensor) + "," + dataio::csv_escape(r.model) +
           "," + dataio::csv_escape(r.experiment) + "," + num(r.r2) + "," +
           num(r.rmse) + "," +
           (r.r2_improvement_pct ? num(*r.r2_improvement_pct) : "") + "," +
           (r.rmse_improvement_pct ? num(*r.rmse_improvement_pct) : "") + "," +
           std::to_string(r.n_test) + "\n";
  }
  return out;
}

MetricsReport parse_report_csv(std::string_view text) {
  const dataio::CsvTable table = dataio::parse_csv(text);
  std::string header;
  for (std::size_t i = 0; i < table.header.size(); ++i)
    header += (i ? "," : "") + table.header[i];
  if (header != kReportHeader)
    throw FormatError("unexpected report header '" + header + "'");
  MetricsReport report;
  std::size_t line = 1;
  for (const auto &cells : table.rows) {
    ++line;
    if (cells.size() != 8)
      throw FormatError("report line " + std::to_string(line) + " has " +
                        std::to_string(cells.size()) + " cells");
    MetricsRow r;
    r.sensor = cells[0];
    r.model = cells[1];
    r.experiment = cells[2];
    r.r2 = parse_double(cells[3], line);
    r.rmse = parse_double(cells[4], line);
    if (!cells[5].empty())
      r.r2_improvement_pct = parse_double(cells[5], line);
    if (!cells[6].empty())
      r.rmse_improvement_pct = parse_double(cells[6], line);
    r.n_test = static_cast<std::size_t>(parse_double(cells[7], line));
    report.rows.push_back(std::move(r));
  }
  return report;
}

MetricsReport chunk_rows(const LimitedDataResult &result) {
  MetricsReport report;
  for (const auto &plan : result.plans)
    for (const auto &chunk : plan.chunks)
      for (const auto &row : chunk.rows)
        report.rows.push_back(row);
  return report;
}

std::string limited_csv(const LimitedDataResult &result) {
  std::string out = std::string(kLimitedHeader) + "\n";
  for (const auto &plan : result.plans) {
    const auto skipped = static_cast<std::size_t>(
        std::count_if(plan.chunks.begin(), plan.chunks.end(),
                      [](const ChunkResult &c) { return c.skipped.has_value(); }));
    for (const auto &s : plan.summary)
      out += dataio::csv_escape(result.sensor) + "," + s.model + "," +
             num(plan.p_percent) + "," + std::to_string(s.n_chunks) + "," +
             std::to_string(skipped) + "," + num(s.r2_mean) + "," +
             num(s.r2_std) + "," + num(s.rmse_mean) + "," + num(s.rmse_std) +
             "\n";
  }
  return out;
}

std::string limited_svg(const LimitedDataResult &result) {
  constexpr double kPanelW = 360, kPanelH = 260, kMargin = 50;
  std::map<std::string, std::vector<std::pair<double, const ModelSummary *>>>
      series;
  for (const auto &plan : result.plans)
    for (const auto &s : plan.summary)
      series[s.model].emplace_back(plan.p_percent, &s);
  for (auto &[model, pts] : series)
    std::sort(pts.begin(), pts.end(),
              [](const auto &a, const auto &b) { return a.first < b.first; });

  std::ostringstream svg;
  const double width = 2 * (kPanelW + kMargin) + kMargin;
  const double height = kPanelH + 2 * kMargin + 20;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " "
      << height << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"14\">"
      << xml_escape(result.sensor) << ": mean and one standard deviation"
      << "</text>\n";

  for (int panel = 0; panel < 2; ++panel) {
    const bool is_r2 = panel == 0;
    const double x0 = kMargin + panel * (kPanelW + kMargin), y0 = kMargin;
    double lo = 0.0, hi = is_r2 ? 1.0 : 0.0;
    for (const auto &[model, pts] : series)
      for (const auto &[p, s] : pts) {
        const double m = is_r2 ? s->r2_mean : s->rmse_mean;
        const double sd = is_r2 ? s->r2_std : s->rmse_std;
        lo = std::min(lo, m - sd);
        hi = std::max(hi, m + sd);
      }
    if (hi - lo < 1e-9)
      hi = lo + 1.0;
    auto px = [&](double p) { return x0 + p / 100.0 * kPanelW; };
    auto py = [&](double v) { return y0 + kPanelH - (v - lo) / (hi - lo) * kPanelH; };

    svg << "<g font-family=\"sans-serif\" font-size=\"11\">\n"
        << "<rect x=\"" << x0 << "\" y=\"" << y0 << "\" width=\"" << kPanelW
        << "\" height=\"" << kPanelH
        << "\" fill=\"none\" stroke=\"#444\"/>\n"
        << "<text x=\"" << x0 + kPanelW / 2 << "\" y=\"" << y0 + kPanelH + 32
        << "\" text-anchor=\"middle\">paired data (%)</text>\n"
        << "<text x=\"" << x0 - 8 << "\" y=\"" << y0 - 8 << "\">"
        << (is_r2 ? "R2" : "RMSE") << "</text>\n";
    for (int tick = 0; tick <= 4; ++tick) {
      const double v = lo + (hi - lo) * tick / 4.0;
      svg << "<text x=\"" << x0 - 4 << "\" y=\"" << py(v) + 4
          << "\" text-anchor=\"end\">" << short_num(v) << "</text>\n";
      const double p = 25.0 * tick;
      svg << "<text x=\"" << px(p) << "\" y=\"" << y0 + kPanelH + 14
          << "\" text-anchor=\"middle\">" << short_num(p) << "</text>\n";
    }
    std::size_t color = 0;
    for (const auto &[model, pts] : series) {
      const char *c = kPalette[color++ % std::size(kPalette)];
      std::ostringstream band, line;
      for (const auto &[p, s] : pts) {
        const double m = is_r2 ? s->r2_mean : s->rmse_mean;
        const double sd = is_r2 ? s->r2_std : s->rmse_std;
        band << px(p) << "," << py(m + sd) << " ";
        line << px(p) << "," << py(m) << " ";
      }
      for (auto it = pts.rbegin(); it != pts.rend(); ++it) {
        const double m = is_r2 ? it->second->r2_mean : it->second->rmse_mean;
        const double sd = is_r2 ? it->second->r2_std : it->second->rmse_std;
        band << px(it->first) << "," << py(m - sd) << " ";
      }
      svg << "<polygon points=\"" << band.str() << "\" fill=\"" << c
          << "\" fill-opacity=\"0.2\" stroke=\"none\"/>\n"
          << "<polyline points=\"" << line.str() << "\" fill=\"none\" stroke=\""
          << c << "\" stroke-width=\"2\"/>\n";
      for (const auto &[p, s] : pts)
        svg << "<circle cx=\"" << px(p) << "\" cy=\""
            << py(is_r2 ? s->r2_mean : s->rmse_mean) << "\" r=\"3\" fill=\""
            << c << "\"/>\n";
      if (panel == 0)
        svg << "<text x=\"" << x0 + 8 << "\" y=\""
            << y0 + 14 + 14 * static_cast<double>(color - 1) << "\" fill=\""
            << c << "\">" << xml_escape(model) << "</text>\n";
    }
    svg << "</g>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

MetricsReport transfer_rows(const TransferReport &report) {
  return MetricsReport{report.rows};
}

std::string report_svg(const MetricsReport &report, const std::string &title) {
  if (report.rows.empty())
    throw ContractError("refusing to draw an empty report");
  std::vector<std::string> groups, models;
  for (const auto &r : report.rows) {
    const std::string g = r.sensor + " / " + r.experiment;
    if (std::find(groups.begin(), groups.end(), g) == groups.end())
      groups.push_back(g);
    if (std::find(models.begin(), models.end(), r.model) == models.end())
      models.push_back(r.model);
  }
  double lo = 0.0, hi = 1.0;
  for (const auto &r : report.rows)
    lo = std::min(lo, r.r2);
  constexpr double kBar = 18, kGap = 24, kMargin = 60, kH = 240;
  const double group_w = static_cast<double>(models.size()) * kBar + kGap;
  const double width =
      2 * kMargin + std::max(200.0, group_w * static_cast<double>(groups.size()));
  const double height = kH + 2 * kMargin + 40;
  auto py = [&](double v) { return kMargin + kH - (v - lo) / (hi - lo) * kH; };

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " "
      << height << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<g font-family=\"sans-serif\" font-size=\"11\">\n"
      << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" "
      << "font-size=\"14\">" << xml_escape(title) << "</text>\n"
      << "<line x1=\"" << kMargin << "\" x2=\"" << width - kMargin
      << "\" y1=\"" << py(0) << "\" y2=\"" << py(0)
      << "\" stroke=\"#444\"/>\n"
      << "<text x=\"" << kMargin - 6 << "\" y=\"" << py(1) + 4
      << "\" text-anchor=\"end\">R2 = 1</text>\n";
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const double gx = kMargin + static_cast<double>(g) * group_w + kGap / 2;
    for (const auto &r : report.rows) {
      if (r.sensor + " / " + r.experiment != groups[g])
        continue;
      const auto m = static_cast<std::size_t>(
          std::find(models.begin(), models.end(), r.model) - models.begin());
      const double x = gx + static_cast<double>(m) * kBar;
      const double top = std::min(py(r.r2), py(0));
      const double h = std::abs(py(r.r2) - py(0));
      svg << "<rect x=\"" << x << "\" y=\"" << top << "\" width=\""
          << kBar - 2 << "\" height=\"" << h << "\" fill=\""
          << kPalette[m % std::size(kPalette)] << "\"><title>"
          << xml_escape(r.model) << " R2=" << short_num(r.r2)
          << "</title></rect>\n";
    }
    svg << "<text x=\"" << gx << "\" y=\"" << kMargin + kH + 16 << "\">"
        << xml_escape(groups[g]) << "</text>\n";
  }
  for (std::size_t m = 0; m < models.size(); ++m)
    svg << "<text x=\"" << kMargin + 80 * static_cast<double>(m)
        << "\" y=\"" << kMargin + kH + 34 << "\" fill=\""
        << kPalette[m % std::size(kPalette)] << "\">" << xml_escape(models[m])
        << "</text>\n";
  svg << "</g>\n</svg>\n";
  return svg.str();
}

void write_text(const std::string &path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw Error("cannot open '" + path + "' for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out)
    throw Error("failed writing '" + path + "'");
}

void emit_report(const MetricsReport &report, const std::string &path,
                 ReportFormat format) {
  write_text(path, format == ReportFormat::Csv
                       ? report_csv(report)
                       : report_svg(report, "Test R2 by model"));
}

MetricsReport load_report(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_report_csv(ss.str());
}

} // namespace senscal::evalx
