// SPDX-License-Identifier: Apache-2.0
/**
 * @file   ops.hpp
 * @brief  Differentiable primitives used by the encoder, decoder and GRU head.
 *
 * Matrices are 2-D row-major tensors. Vectors (biases, layer-norm affine
 * parameters) are 1-D. Every op throws DimensionError naming both shapes on
 * mismatch.
 */
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "senscal/numcore/rng.hpp"
#include "senscal/numcore/tensor.hpp"

namespace senscal::numcore {

/// a[m x k] * b[k x n].
Tensor matmul(const Tensor &a, const Tensor &b);
/// a[m x k] * b[n x k]^T, without materialising the transpose.
Tensor matmul_nt(const Tensor &a, const Tensor &b);
Tensor transpose(const Tensor &a);

Tensor add(const Tensor &a, const Tensor &b);
Tensor sub(const Tensor &a, const Tensor &b);
/// Elementwise (Hadamard) product.
Tensor mul(const Tensor &a, const Tensor &b);
Tensor scale(const Tensor &a, double factor);
/// alpha * a + beta, elementwise.
Tensor affine(const Tensor &a, double alpha, double beta);
/// x[m x n] + bias[n] broadcast over rows.
Tensor add_bias(const Tensor &x, const Tensor &bias);
/// x[m x n] + table[r x n] where m is a multiple of r (tiled over row blocks).
Tensor add_tiled(const Tensor &x, const Tensor &table);

/// x * Phi(x) with the exact Gaussian CDF.
Tensor gelu(const Tensor &x);
Tensor sigmoid(const Tensor &x);
Tensor tanh(const Tensor &x);
Tensor relu(const Tensor &x);

/// Row-wise softmax with max subtraction.
Tensor softmax_rows(const Tensor &x);

/// Normalises each row (one feature vector) to zero mean and unit variance,
/// then applies gamma * . + beta.
Tensor layer_norm(const Tensor &x, const Tensor &gamma, const Tensor &beta,
                  double eps);

/// Inverted dropout. Identity when !training or p == 0.
Tensor dropout(const Tensor &x, double p, Rng &rng, bool training);

Tensor sum(const Tensor &x);
/// Mean of squared differences.
Tensor mse(const Tensor &a, const Tensor &b);
/// sum_i w_i (a_i - b_i)^2 with constant weights w.
Tensor weighted_sse(const Tensor &a, const Tensor &b,
                    std::span<const double> weights);

/// Rows [begin, begin + count) of a 2-D tensor.
Tensor slice_rows(const Tensor &x, std::size_t begin, std::size_t count);
/// Rows selected by index (indices may repeat).
Tensor gather_rows(const Tensor &x, std::span<const std::size_t> indices);
Tensor concat_rows(const std::vector<Tensor> &parts);
Tensor concat_cols(const std::vector<Tensor> &parts);

} // namespace senscal::numcore
