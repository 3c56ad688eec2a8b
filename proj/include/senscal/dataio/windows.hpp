// SPDX-License-Identifier: Apache-2.0
/**
 * @file   windows.hpp
 * @brief  Sliding windows over a frame and span masking of timesteps.
 */
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "senscal/dataio/frame.hpp"
#include "senscal/numcore/rng.hpp"

namespace senscal::dataio {

/// Length-M slices of a frame, stored contiguously (window, time, variable).
struct WindowSet {
  std::size_t M = 0;
  std::size_t K = 0;
  std::size_t overlap = 0;
  std::vector<std::string> variable_names;
  std::vector<double> data;
  std::vector<std::size_t> end_index;
  std::optional<std::vector<double>> targets;

  std::size_t count() const { return end_index.size(); }
  std::span<const double> window(std::size_t i) const {
    return {data.data() + i * M * K, M * K};
  }
  /// Windows [begin, begin + n) as a new set.
  WindowSet subset(std::size_t begin, std::size_t n) const;
  /// Windows at the given positions, in order.
  WindowSet select(std::span<const std::size_t> positions) const;
};

/// Windows ending at t = M-1, M-1+stride, ... with stride = M - overlap.
/// A window whose rows span a timestamp gap > 2x the nominal interval is
/// skipped. Throws DataError when N < M, ParameterError on bad overlap.
WindowSet make_windows(const InputView &inputs, std::size_t M,
                       std::size_t overlap);
/// As above, with targets[i] = y[end_index[i]] when the frame has a
/// reference column.
WindowSet make_windows(const SensorFrame &frame, std::size_t M,
                       std::size_t overlap);

struct Span {
  std::size_t start;
  std::size_t length;
};

struct MaskPlan {
  std::size_t M = 0;
  std::size_t span_length = 0;
  double mask_prob = 0.0;
  /// count x M flags, 1 = masked timestep.
  std::vector<std::uint8_t> masks;
  /// Spans drawn for each window, in draw order.
  std::vector<std::vector<Span>> spans;

  std::span<const std::uint8_t> mask(std::size_t i) const {
    return {masks.data() + i * M, M};
  }
};

struct MaskedWindows {
  WindowSet masked;
  MaskPlan plan;
};

/// Draws spans for one window until at least ceil(P * M) timesteps are
/// masked. Each span starts uniformly in [0, M) and covers
/// min(S_l, M - start) steps. Writes flags into `mask` (size M).
std::vector<Span> draw_span_mask(std::size_t M, double P,
                                 std::size_t span_length, numcore::Rng &rng,
                                 std::span<std::uint8_t> mask);

/// Masks every window; masked timesteps have all K channels set to 0.
MaskedWindows apply_span_mask(const WindowSet &ws, double P,
                              std::size_t span_length, numcore::Rng &rng);

void validate_mask_params(std::size_t M, double P, std::size_t span_length);

} // namespace senscal::dataio
