// SPDX-License-Identifier: Apache-2.0
/**
 * @file   report.hpp
 * @brief  CSV and SVG rendering of experiment results.
 */
#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "senscal/evalx/experiments.hpp"

namespace senscal::evalx {

inline constexpr const char *kReportHeader =
    "sensor,model,experiment,r2,rmse,r2_improvement_pct,rmse_improvement_pct,"
    "n_test";
inline constexpr const char *kLimitedHeader =
    "sensor,model,p_percent,n_chunks,n_skipped,r2_mean,r2_std,rmse_mean,"
    "rmse_std";

/// Rows under kReportHeader. Missing improvements are empty cells; numbers
/// use 17 significant digits. Throws ContractError on an empty report.
std::string report_csv(const MetricsReport &report);
/// Parses report_csv output. Throws FormatError on a wrong header or cell.
MetricsReport parse_report_csv(std::string_view text);

/// Per-chunk rows of every plan, in plan and chunk order.
MetricsReport chunk_rows(const LimitedDataResult &result);
/// One row per (model, P) under kLimitedHeader.
std::string limited_csv(const LimitedDataResult &result);
/// Mean R² and RMSE against P with +-1 std bands, one panel each.
std::string limited_svg(const LimitedDataResult &result);

MetricsReport transfer_rows(const TransferReport &report);
/// Grouped bars of R² per tested sensor and model.
std::string report_svg(const MetricsReport &report, const std::string &title);

enum class ReportFormat { Csv, Svg };

/// Writes report_csv or report_svg to `path`. Throws Error on I/O failure.
void emit_report(const MetricsReport &report, const std::string &path,
                 ReportFormat format);
MetricsReport load_report(const std::string &path);

/// Writes `text` to `path`, replacing it. Throws Error on I/O failure.
void write_text(const std::string &path, std::string_view text);

} // namespace senscal::evalx
