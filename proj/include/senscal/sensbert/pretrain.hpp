// SPDX-License-Identifier: Apache-2.0
/**
 * @file   pretrain.hpp
 * @brief  Self-supervised masked-reconstruction pretraining.
 */
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "senscal/dataio/frame.hpp"
#include "senscal/dataio/windows.hpp"
#include "senscal/sensbert/model.hpp"

namespace senscal::sensbert {

enum class LossScope { Masked, All };

const char *to_string(LossScope scope);
/// Parses "masked" or "all"; throws ParameterError otherwise.
LossScope parse_loss_scope(std::string_view text);

struct PretrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  LossScope loss_scope = LossScope::Masked;
  std::uint64_t seed = 42;
  std::size_t overlap = 127;
  double mask_prob = 0.2;
  std::size_t span_length = 8;
  /// Stop after this many optimiser steps (0 = run all epochs).
  std::size_t max_steps = 0;

  void validate() const;
};

struct PretrainResult {
  EncoderParams encoder;
  DecoderParams decoder;
  /// Mean batch loss per epoch.
  std::vector<double> loss_history;
  std::size_t steps = 0;
};

/// Reconstruction loss over `batch` stacked windows of M rows. row_mask has
/// one flag per row. Masked scope averages, per window, the squared error
/// over entries of masked rows and then averages over windows; All scope
/// is the plain MSE. Throws ParameterError for Masked scope with no masked
/// row.
Tensor pretrain_loss(const Tensor &original, const Tensor &reconstructed,
                     std::span<const std::uint8_t> row_mask, std::size_t M,
                     LossScope scope);

/// Loss for the windows of a masked set, using the plan's flags.
Tensor pretrain_loss(const Tensor &original, const Tensor &reconstructed,
                     const dataio::MaskPlan &plan, LossScope scope);

/// Stacks windows [positions] into a (n*M) x K tensor.
Tensor stack_windows(const dataio::WindowSet &ws,
                     std::span<const std::size_t> positions);

/// Trains encoder and decoder on windows of the sensor inputs only.
/// Throws DataError if no window can be formed.
PretrainResult pretrain(const dataio::InputView &train,
                        const EncoderConfig &model,
                        const PretrainConfig &cfg);

/// Mean masked reconstruction loss over all windows of `ws` with masks
/// drawn from `mask_seed`. Records no graph.
double reconstruction_loss(const EncoderParams &enc, const DecoderParams &dec,
                           const dataio::WindowSet &ws, double mask_prob,
                           std::size_t span_length, std::uint64_t mask_seed,
                           LossScope scope);

} // namespace senscal::sensbert
