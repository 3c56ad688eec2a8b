// SPDX-License-Identifier: Apache-2.0
/**
 * @file   metrics.hpp
 * @brief  Regression metrics and relative improvement.
 */
#pragma once

#include <span>

namespace senscal::evalx {

/// Coefficient of determination 1 - SS_res / SS_tot. May be negative.
/// Throws DimensionError on length mismatch or fewer than two values and
/// DataError on constant truth.
double r2(std::span<const double> truth, std::span<const double> pred);

/// Root mean squared error. Throws DimensionError on length mismatch or
/// empty input.
double rmse(std::span<const double> truth, std::span<const double> pred);

enum class Direction { HigherIsBetter, LowerIsBetter };

/// Percent improvement of `candidate` over `baseline`:
/// (c - b) / b * 100 when higher is better, (b - c) / b * 100 otherwise.
/// Throws ParameterError on a zero baseline.
double relative_improvement(double candidate, double baseline,
                            Direction direction);

} // namespace senscal::evalx
