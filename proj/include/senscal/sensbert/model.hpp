// SPDX-License-Identifier: Apache-2.0
/**
 * @file   model.hpp
 * @brief  Transformer encoder and reconstruction decoder for sensor windows.
 *
 * A window is an M x K matrix (timesteps x variables). Batches are stacked
 * row-wise into (B*M) x K so that every per-timestep map is one matmul;
 * attention runs per window.
 *
 * Encoder:
 *   D  = LayerNorm(X W_in + b_in)
 *   H  = LayerNorm(D + PE)
 *   repeat R times:
 *     H = LayerNorm(FeedForward(LayerNorm(Proj(LayerNorm(MultiAttn(H))))))
 *   E  = H
 * FeedForward is GELU(H W1 + b1) W2 + b2. There are no residual paths.
 *
 * Decoder:
 *   X_hat = LayerNorm(Pred(Proj(GELU(E))))
 */
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "senscal/numcore/rng.hpp"
#include "senscal/numcore/tensor.hpp"

namespace senscal::sensbert {

using numcore::Tensor;

struct EncoderConfig {
  std::size_t M = 128;
  std::size_t K = 3;
  std::size_t h_dim = 64;
  std::size_t heads = 4;
  std::size_t blocks = 4;
  std::size_t ff_dim = 128;
  double ln_eps = 1e-6;

  std::size_t head_dim() const { return h_dim / heads; }
  /// Throws ParameterError on inconsistent sizes.
  void validate() const;
};

struct LayerNormParams {
  Tensor gamma;
  Tensor beta;
};

struct AttentionHead {
  Tensor w_q, w_k, w_v; // h_dim x head_dim
};

struct EncoderBlock {
  std::vector<AttentionHead> heads;
  Tensor w_o; // h_dim x h_dim
  LayerNormParams ln_attn;
  Tensor proj_w, proj_b;
  LayerNormParams ln_proj;
  Tensor ff1_w, ff1_b, ff2_w, ff2_b;
  LayerNormParams ln_ff;
};

struct EncoderParams {
  EncoderConfig config;
  std::vector<std::string> variable_names;
  Tensor in_w, in_b; // K x h_dim, h_dim
  LayerNormParams ln_in;
  LayerNormParams ln_pe;
  Tensor pe_table; // M x h_dim, fixed
  std::vector<EncoderBlock> blocks;

  /// Every tensor with a stable name, including the fixed PE table.
  std::vector<std::pair<std::string, Tensor>> named() const;
  /// Tensors updated by training (everything except the PE table).
  std::vector<Tensor> trainable() const;
  EncoderParams clone() const;
};

struct DecoderParams {
  Tensor proj_w, proj_b; // h_dim x h_dim
  Tensor pred_w, pred_b; // h_dim x K
  LayerNormParams ln_out;
  double ln_eps = 1e-6;

  std::vector<std::pair<std::string, Tensor>> named() const;
  std::vector<Tensor> trainable() const;
  DecoderParams clone() const;
};

/// Sinusoidal position table: sin at even dims, cos at odd dims, with
/// frequency 1 / 10000^(2i / h_dim).
Tensor positional_table(std::size_t M, std::size_t h_dim);

/// Weights uniform in +-1/sqrt(fan_in), layer norms gamma=1, beta=0.
EncoderParams init_encoder(const EncoderConfig &cfg,
                           std::vector<std::string> variable_names,
                           numcore::Rng &rng);
DecoderParams init_decoder(const EncoderConfig &cfg, numcore::Rng &rng);

/// Optional sink for the attention matrices computed during encode.
struct AttentionTrace {
  /// One M x M row-stochastic matrix per (block, window, head), in that
  /// nesting order.
  std::vector<Tensor> weights;
};

/// Encodes `batch` stacked windows, x: (batch*M) x K -> (batch*M) x h_dim.
Tensor encode_batch(const EncoderParams &params, const Tensor &x,
                    std::size_t batch, AttentionTrace *trace = nullptr);
/// Single window, x: M x K -> M x h_dim.
Tensor encode(const EncoderParams &params, const Tensor &x,
              AttentionTrace *trace = nullptr);
/// Row-wise map E: n x h_dim -> n x K.
Tensor decode(const DecoderParams &params, const Tensor &E);
/// encode with no graph recorded; never touches parameter state.
Tensor embed(const EncoderParams &params, const Tensor &x);

/// Multi-head scaled dot-product self-attention over each window, without
/// the output projection. h: (batch*M) x h_dim.
Tensor multi_head_attention(const std::vector<AttentionHead> &heads,
                            const Tensor &h, std::size_t batch,
                            std::size_t M, AttentionTrace *trace = nullptr);

/// FNV hash over names and raw value bytes.
std::uint64_t checksum(const std::vector<std::pair<std::string, Tensor>> &named);

} // namespace senscal::sensbert
