// SPDX-License-Identifier: Apache-2.0
/**
 * @file   gradcheck.hpp
 * @brief  Central finite-difference check of reverse-mode gradients.
 */
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "senscal/numcore/tensor.hpp"

namespace senscal::numcore {

struct GradCheckOptions {
  double h = 1e-4;
  /// Check at most this many randomly chosen coordinates (0 = all).
  std::size_t max_coords = 0;
  std::uint64_t seed = 0;
  /// Denominator floor for the relative error.
  double abs_floor = 1e-6;
};

/// Max over checked coordinates of |analytic - numeric| /
/// max(|analytic|, |numeric|, abs_floor). `loss` must rebuild the graph on
/// every call.
double finite_diff_check(const std::function<Tensor()> &loss,
                         std::vector<Tensor> params,
                         const GradCheckOptions &opts = {});

} // namespace senscal::numcore
