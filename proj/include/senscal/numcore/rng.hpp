// SPDX-License-Identifier: Apache-2.0
/**
 * @file   rng.hpp
 * @brief  Seedable xoshiro256** generator with tagged substreams.
 *
 * All randomness in the pipeline (init, masking, dropout, shuffling, forest
 * bagging) is drawn from substreams keyed by (seed, purpose tag, index), so
 * adding draws for one purpose never perturbs another. Only integer
 * arithmetic feeds the stream, which keeps it identical across platforms.
 */
#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace senscal::numcore {

class Rng {
public:
  explicit Rng(std::uint64_t seed = 0);

  /// Independent stream derived from (seed, tag, index).
  static Rng substream(std::uint64_t seed, std::string_view tag,
                       std::uint64_t index = 0);

  std::uint64_t next_u64();

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform();

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_index(std::uint64_t n);

  /// Standard normal via Box-Muller; caches the second variate.
  double normal();

  const std::array<std::uint64_t, 4> &state() const { return state_; }

private:
  std::array<std::uint64_t, 4> state_{};
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

/// splitmix64 finalizer, exposed for hashing seeds and configs.
std::uint64_t splitmix64(std::uint64_t &x);

/// 64-bit FNV-1a over raw bytes.
std::uint64_t fnv1a(std::string_view bytes,
                    std::uint64_t basis = 0xcbf29ce484222325ULL);

} // namespace senscal::numcore
