// SPDX-License-Identifier: Apache-2.0
#include "senscal/dataio/windows.hpp"

#include <algorithm>
#include <cmath>

#include "senscal/error.hpp"

namespace senscal::dataio {

WindowSet WindowSet::subset(std::size_t begin, std::size_t n) const {
  std::vector<std::size_t> positions(n);
  for (std::size_t i = 0; i < n; ++i)
    positions[i] = begin + i;
  return select(positions);
}

WindowSet WindowSet::select(std::span<const std::size_t> positions) const {
  WindowSet out;
  out.M = M;
  out.K = K;
  out.overlap = overlap;
  out.variable_names = variable_names;
  out.data.reserve(positions.size() * M * K);
  if (targets)
    out.targets.emplace().reserve(positions.size());
  for (std::size_t p : positions) {
    if (p >= count())
      throw DimensionError("window index " + std::to_string(p) +
                           " out of range " + std::to_string(count()));
    auto w = window(p);
    out.data.insert(out.data.end(), w.begin(), w.end());
    out.end_index.push_back(end_index[p]);
    if (targets)
      out.targets->push_back((*targets)[p]);
  }
  return out;
}

WindowSet make_windows(const InputView &inputs, std::size_t M,
                       std::size_t overlap) {
  const Matrix &x = *inputs.x;
  const std::size_t n = x.rows;
  if (M == 0)
    throw ParameterError("window length must be positive");
  if (overlap >= M)
    throw ParameterError("overlap " + std::to_string(overlap) +
                         " must be < window length " + std::to_string(M));
  if (n < M)
    throw DataError("frame has " + std::to_string(n) +
                    " rows, fewer than window length M=" + std::to_string(M));

  // gap_prefix[i] = number of oversized gaps between rows 0..i.
  const std::int64_t max_gap = 2 * inputs.nominal_interval_s;
  std::vector<std::size_t> gap_prefix(n, 0);
  for (std::size_t i = 1; i < n; ++i)
    gap_prefix[i] =
        gap_prefix[i - 1] +
        (inputs.timestamps[i] - inputs.timestamps[i - 1] > max_gap ? 1 : 0);

  WindowSet ws;
  ws.M = M;
  ws.K = x.cols;
  ws.overlap = overlap;
  ws.variable_names.assign(inputs.variable_names.begin(),
                           inputs.variable_names.end());
  const std::size_t stride = M - overlap;
  for (std::size_t t = M - 1; t < n; t += stride) {
    const std::size_t first = t + 1 - M;
    if (gap_prefix[t] != gap_prefix[first])
      continue;
    ws.data.insert(ws.data.end(), x.values.begin() + first * x.cols,
                   x.values.begin() + (t + 1) * x.cols);
    ws.end_index.push_back(t);
  }
  return ws;
}

WindowSet make_windows(const SensorFrame &frame, std::size_t M,
                       std::size_t overlap) {
  WindowSet ws = make_windows(frame.inputs(), M, overlap);
  if (frame.y) {
    auto &targets = ws.targets.emplace();
    targets.reserve(ws.count());
    for (std::size_t t : ws.end_index)
      targets.push_back((*frame.y)[t]);
  }
  return ws;
}

void validate_mask_params(std::size_t M, double P, std::size_t span_length) {
  if (!(P > 0.0 && P < 1.0))
    throw ParameterError("mask probability must lie in (0, 1), got " +
                         std::to_string(P));
  if (span_length < 1 || span_length > M)
    throw ParameterError("span length must lie in [1, M], got " +
                         std::to_string(span_length));
}

std::vector<Span> draw_span_mask(std::size_t M, double P,
                                 std::size_t span_length, numcore::Rng &rng,
                                 std::span<std::uint8_t> mask) {
  validate_mask_params(M, P, span_length);
  std::fill(mask.begin(), mask.end(), 0);
  const auto target =
      static_cast<std::size_t>(std::ceil(P * static_cast<double>(M)));
  std::size_t masked = 0;
  std::vector<Span> spans;
  while (masked < target) {
    const std::size_t start = rng.uniform_index(M);
    const std::size_t len = std::min(span_length, M - start);
    for (std::size_t j = start; j < start + len; ++j) {
      masked += mask[j] == 0 ? 1 : 0;
      mask[j] = 1;
    }
    spans.push_back({start, len});
  }
  return spans;
}

MaskedWindows apply_span_mask(const WindowSet &ws, double P,
                              std::size_t span_length, numcore::Rng &rng) {
  validate_mask_params(ws.M, P, span_length);
  MaskedWindows out{ws, {}};
  MaskPlan &plan = out.plan;
  plan.M = ws.M;
  plan.span_length = span_length;
  plan.mask_prob = P;
  plan.masks.assign(ws.count() * ws.M, 0);
  plan.spans.reserve(ws.count());
  for (std::size_t i = 0; i < ws.count(); ++i) {
    std::span<std::uint8_t> mask(plan.masks.data() + i * ws.M, ws.M);
    plan.spans.push_back(draw_span_mask(ws.M, P, span_length, rng, mask));
    double *w = out.masked.data.data() + i * ws.M * ws.K;
    for (std::size_t t = 0; t < ws.M; ++t)
      if (mask[t])
        std::fill_n(w + t * ws.K, ws.K, 0.0);
  }
  return out;
}

} // namespace senscal::dataio
