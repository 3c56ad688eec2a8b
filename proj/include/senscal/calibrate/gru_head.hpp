// SPDX-License-Identifier: Apache-2.0
/**
 * @file   gru_head.hpp
 * @brief  Recurrent calibration head trained on frozen encoder embeddings.
 *
 * Three stacked GRU layers read the M embedding vectors of a window; the
 * last layer's state at the final timestep passes through dropout and two
 * fully connected layers (G -> G/2 -> 1, ReLU between) to give one
 * calibrated value per window.
 *
 * GRU cell, per layer:
 *   z  = sigmoid(x W_z + h U_z + b_z)
 *   r  = sigmoid(x W_r + h U_r + b_r)
 *   n  = tanh(x W_n + b_n + r * (h U_n + b_hn))
 *   h' = (1 - z) * n + z * h
 */
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "senscal/dataio/windows.hpp"
#include "senscal/numcore/rng.hpp"
#include "senscal/numcore/tensor.hpp"
#include "senscal/sensbert/checkpoint.hpp"
#include "senscal/sensbert/model.hpp"

namespace senscal::calibrate {

using numcore::Tensor;

struct GruLayer {
  Tensor w_z, w_r, w_n; // in x G
  Tensor u_z, u_r, u_n; // G x G
  Tensor b_z, b_r, b_n, b_hn;
};

struct GruHeadParams {
  std::size_t input_dim = 0;
  std::size_t hidden = 64;
  double p_drop = 0.1;
  std::vector<GruLayer> layers;
  Tensor fc1_w, fc1_b; // G x G/2
  Tensor fc2_w, fc2_b; // G/2 x 1

  std::vector<std::pair<std::string, Tensor>> named() const;
  std::vector<Tensor> trainable() const;
  GruHeadParams clone() const;
};

inline constexpr std::size_t kGruLayers = 3;

/// Uniform +-1/sqrt(G) for GRU weights and biases, +-1/sqrt(fan_in) for
/// the dense layers.
GruHeadParams init_head(std::size_t input_dim, std::size_t hidden,
                        double p_drop, numcore::Rng &rng);

/// One GRU step: x is B x in, h is B x G.
Tensor gru_cell(const GruLayer &layer, const Tensor &x, const Tensor &h);

/// steps[t] is the B x input_dim slice at timestep t. Returns B x 1.
Tensor head_forward(const GruHeadParams &head, const std::vector<Tensor> &steps,
                    numcore::Rng &dropout_rng, bool training);

struct FinetuneConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  double p_drop = 0.1;
  std::size_t hidden = 64;
  std::uint64_t seed = 42;
  bool encoder_frozen = true;
  std::size_t max_steps = 0;

  void validate() const;
};

struct FinetuneResult {
  GruHeadParams head;
  std::vector<double> loss_history;
  std::size_t steps = 0;
};

/// Frozen per-window embeddings, (window, time, dim) contiguous.
struct Embeddings {
  std::size_t count = 0;
  std::size_t M = 0;
  std::size_t dim = 0;
  std::vector<double> values;

  /// Per-timestep B x dim tensors for the given windows.
  std::vector<Tensor> steps(std::span<const std::size_t> positions) const;
};

/// Runs the frozen encoder over every window. No graph is recorded.
Embeddings compute_embeddings(const sensbert::EncoderParams &encoder,
                              const dataio::WindowSet &ws);

/// Throws DimensionError when the window set's M, K or variable names
/// differ from the encoder's.
void check_compatible(const sensbert::EncoderParams &encoder,
                      const dataio::WindowSet &ws);

/// Trains a copy of `head` on the targets of `ws`; the encoder is only
/// read. Throws DataError on missing targets.
FinetuneResult finetune(const sensbert::EncoderParams &encoder,
                        const GruHeadParams &head, const dataio::WindowSet &ws,
                        const FinetuneConfig &cfg);

/// As above from precomputed embeddings of the same windows.
FinetuneResult finetune_embeddings(const Embeddings &emb,
                                   std::span<const double> targets,
                                   const GruHeadParams &head,
                                   const FinetuneConfig &cfg);

/// One prediction per window, dropout disabled.
std::vector<double> predict(const sensbert::EncoderParams &encoder,
                            const GruHeadParams &head,
                            const dataio::WindowSet &ws);
std::vector<double> predict_embeddings(const Embeddings &emb,
                                       const GruHeadParams &head);

void add_head(sensbert::Checkpoint &ckpt, const GruHeadParams &head);
GruHeadParams head_from_checkpoint(const sensbert::Checkpoint &ckpt);

} // namespace senscal::calibrate
