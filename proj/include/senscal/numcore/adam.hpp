// SPDX-License-Identifier: Apache-2.0
/**
 * @file   adam.hpp
 * @brief  Bias-corrected Adam optimiser over a fixed parameter list.
 */
#pragma once

#include <cstdint>
#include <vector>

#include "senscal/numcore/tensor.hpp"

namespace senscal::numcore {

struct AdamState {
  std::uint64_t step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

AdamState make_adam(const std::vector<Tensor> &params, double lr = 1e-3,
                    double beta1 = 0.9, double beta2 = 0.999,
                    double eps = 1e-8);

/// One update of every parameter from its grad buffer, then zeroes grads.
/// Throws ContractError if a parameter does not track gradients or the
/// state was built for a different parameter list.
void adam_step(std::vector<Tensor> &params, AdamState &state);

} // namespace senscal::numcore
