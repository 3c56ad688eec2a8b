// SPDX-License-Identifier: Apache-2.0
#include "senscal/numcore/adam.hpp"

#include <cmath>

#include "senscal/error.hpp"

namespace senscal::numcore {

AdamState make_adam(const std::vector<Tensor> &params, double lr,
                    double beta1, double beta2, double eps) {
  AdamState state;
  state.lr = lr;
  state.beta1 = beta1;
  state.beta2 = beta2;
  state.eps = eps;
  for (const auto &p : params) {
    state.m.emplace_back(p.size(), 0.0);
    state.v.emplace_back(p.size(), 0.0);
  }
  return state;
}

void adam_step(std::vector<Tensor> &params, AdamState &state) {
  if (params.size() != state.m.size())
    throw ContractError("adam_step: state holds " +
                        std::to_string(state.m.size()) + " buffers for " +
                        std::to_string(params.size()) + " parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].requires_grad() || !params[i].has_grad())
      throw ContractError("adam_step: parameter " + std::to_string(i) +
                          " has no gradient");
    if (params[i].size() != state.m[i].size())
      throw ContractError("adam_step: parameter " + std::to_string(i) +
                          " changed size");
  }

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].mutable_data();
    auto g = params[i].mutable_grad();
    auto &m = state.m[i];
    auto &v = state.v[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      w[j] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
      g[j] = 0.0;
    }
  }
}

} // namespace senscal::numcore
