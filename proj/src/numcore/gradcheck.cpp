// SPDX-License-Identifier: Apache-2.0
#include "senscal/numcore/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "senscal/error.hpp"
#include "senscal/numcore/rng.hpp"

namespace senscal::numcore {

double finite_diff_check(const std::function<Tensor()> &loss,
                         std::vector<Tensor> params,
                         const GradCheckOptions &opts) {
  if (!(opts.h > 0.0))
    throw ParameterError("finite_diff_check: h must be positive");

  for (auto &p : params)
    p.zero_grad();
  loss().backward();

  struct Coord {
    std::size_t param, index;
  };
  std::vector<Coord> coords;
  for (std::size_t p = 0; p < params.size(); ++p)
    for (std::size_t i = 0; i < params[p].size(); ++i)
      coords.push_back({p, i});
  if (opts.max_coords != 0 && coords.size() > opts.max_coords) {
    Rng rng = Rng::substream(opts.seed, "gradcheck");
    for (std::size_t i = 0; i < opts.max_coords; ++i)
      std::swap(coords[i], coords[i + rng.uniform_index(coords.size() - i)]);
    coords.resize(opts.max_coords);
  }

  double worst = 0.0;
  for (const auto &c : coords) {
    auto values = params[c.param].mutable_data();
    const double original = values[c.index];
    double plus, minus;
    {
      NoGradGuard no_grad;
      values[c.index] = original + opts.h;
      plus = loss().item();
      values[c.index] = original - opts.h;
      minus = loss().item();
    }
    values[c.index] = original;
    const double numeric = (plus - minus) / (2.0 * opts.h);
    const double analytic = params[c.param].grad()[c.index];
    const double denom =
        std::max({std::abs(analytic), std::abs(numeric), opts.abs_floor});
    worst = std::max(worst, std::abs(analytic - numeric) / denom);
  }
  for (auto &p : params)
    p.zero_grad();
  return worst;
}

} // namespace senscal::numcore
