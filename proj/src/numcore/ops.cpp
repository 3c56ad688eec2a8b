// SPDX-License-Identifier: Apache-2.0
#include "senscal/numcore/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "senscal/error.hpp"

namespace senscal::numcore {

namespace {

void require_2d(const Tensor &t, const char *op) {
  if (t.ndim() != 2)
    throw DimensionError(std::string(op) + ": expected a 2-D tensor, got " +
                         shape_str(t.shape()));
}

void require_same(const Tensor &a, const Tensor &b, const char *op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

// Grad buffer of parent i, or nullptr when that parent is untracked.
double *parent_grad(Node &self, std::size_t i) {
  Node &p = *self.parents[i];
  return p.requires_grad ? p.ensure_grad().data() : nullptr;
}

const double *parent_data(Node &self, std::size_t i) {
  return self.parents[i]->data.data();
}

// c[m x n] += a[m x k] * b[k x n]
void gemm_nn(const double *a, const double *b, double *c, std::size_t m,
             std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double *crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0)
        continue;
      const double *brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j)
        crow[j] += av * brow[j];
    }
  }
}

// c[m x n] += a[m x k] * b[n x k]^T
void gemm_nt(const double *a, const double *b, double *c, std::size_t m,
             std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double *arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double *brow = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p)
        acc += arow[p] * brow[p];
      c[i * n + j] += acc;
    }
  }
}

// c[k x n] += a[m x k]^T * b[m x n]
void gemm_tn(const double *a, const double *b, double *c, std::size_t m,
             std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double *brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0)
        continue;
      double *crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j)
        crow[j] += av * brow[j];
    }
  }
}

template <class F, class D>
Tensor unary(const Tensor &x, F f, D df, const char *name) {
  std::vector<double> out(x.size());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = f(in[i]);
  return Tensor::make_result(
      x.shape(), std::move(out), {x},
      [df](Node &self) {
        double *gx = parent_grad(self, 0);
        if (!gx)
          return;
        const double *xv = parent_data(self, 0);
        for (std::size_t i = 0; i < self.data.size(); ++i)
          gx[i] += self.grad[i] * df(xv[i], self.data[i]);
      },
      name);
}

} // namespace

Tensor matmul(const Tensor &a, const Tensor &b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k)
    throw DimensionError("matmul: inner dimensions differ, " +
                         shape_str(a.shape()) + " x " + shape_str(b.shape()));
  std::vector<double> out(m * n, 0.0);
  gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  return Tensor::make_result(
      {m, n}, std::move(out), {a, b},
      [m, k, n](Node &self) {
        const double *g = self.grad.data();
        if (double *ga = parent_grad(self, 0))
          gemm_nt(g, parent_data(self, 1), ga, m, n, k);
        if (double *gb = parent_grad(self, 1))
          gemm_tn(parent_data(self, 0), g, gb, m, k, n);
      },
      "matmul");
}

Tensor matmul_nt(const Tensor &a, const Tensor &b) {
  require_2d(a, "matmul_nt");
  require_2d(b, "matmul_nt");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k)
    throw DimensionError("matmul_nt: inner dimensions differ, " +
                         shape_str(a.shape()) + " x " +
                         shape_str(b.shape()) + "^T");
  std::vector<double> out(m * n, 0.0);
  gemm_nt(a.data().data(), b.data().data(), out.data(), m, k, n);
  return Tensor::make_result(
      {m, n}, std::move(out), {a, b},
      [m, k, n](Node &self) {
        const double *g = self.grad.data();
        // dA = G * B, dB = G^T * A
        if (double *ga = parent_grad(self, 0))
          gemm_nn(g, parent_data(self, 1), ga, m, n, k);
        if (double *gb = parent_grad(self, 1))
          gemm_tn(g, parent_data(self, 0), gb, m, n, k);
      },
      "matmul_nt");
}

Tensor transpose(const Tensor &a) {
  require_2d(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  auto in = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out[j * m + i] = in[i * n + j];
  return Tensor::make_result(
      {n, m}, std::move(out), {a},
      [m, n](Node &self) {
        double *ga = parent_grad(self, 0);
        if (!ga)
          return;
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j)
            ga[i * n + j] += self.grad[j * m + i];
      },
      "transpose");
}

Tensor add(const Tensor &a, const Tensor &b) {
  require_same(a, b, "add");
  std::vector<double> out(a.size());
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = av[i] + bv[i];
  return Tensor::make_result(
      a.shape(), std::move(out), {a, b},
      [](Node &self) {
        for (std::size_t p = 0; p < 2; ++p)
          if (double *g = parent_grad(self, p))
            for (std::size_t i = 0; i < self.grad.size(); ++i)
              g[i] += self.grad[i];
      },
      "add");
}

Tensor sub(const Tensor &a, const Tensor &b) {
  require_same(a, b, "sub");
  std::vector<double> out(a.size());
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = av[i] - bv[i];
  return Tensor::make_result(
      a.shape(), std::move(out), {a, b},
      [](Node &self) {
        if (double *g = parent_grad(self, 0))
          for (std::size_t i = 0; i < self.grad.size(); ++i)
            g[i] += self.grad[i];
        if (double *g = parent_grad(self, 1))
          for (std::size_t i = 0; i < self.grad.size(); ++i)
            g[i] -= self.grad[i];
      },
      "sub");
}

Tensor mul(const Tensor &a, const Tensor &b) {
  require_same(a, b, "mul");
  std::vector<double> out(a.size());
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = av[i] * bv[i];
  return Tensor::make_result(
      a.shape(), std::move(out), {a, b},
      [](Node &self) {
        const double *av = parent_data(self, 0);
        const double *bv = parent_data(self, 1);
        if (double *g = parent_grad(self, 0))
          for (std::size_t i = 0; i < self.grad.size(); ++i)
            g[i] += self.grad[i] * bv[i];
        if (double *g = parent_grad(self, 1))
          for (std::size_t i = 0; i < self.grad.size(); ++i)
            g[i] += self.grad[i] * av[i];
      },
      "mul");
}

Tensor scale(const Tensor &a, double factor) {
  return affine(a, factor, 0.0);
}

Tensor affine(const Tensor &a, double alpha, double beta) {
  return unary(
      a, [alpha, beta](double x) { return alpha * x + beta; },
      [alpha](double, double) { return alpha; }, "affine");
}

Tensor add_bias(const Tensor &x, const Tensor &bias) {
  require_2d(x, "add_bias");
  const std::size_t m = x.rows(), n = x.cols();
  if (bias.size() != n)
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) +
                         " does not match " + shape_str(x.shape()));
  std::vector<double> out(x.data().begin(), x.data().end());
  auto bv = bias.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out[i * n + j] += bv[j];
  return Tensor::make_result(
      x.shape(), std::move(out), {x, bias},
      [m, n](Node &self) {
        if (double *gx = parent_grad(self, 0))
          for (std::size_t i = 0; i < m * n; ++i)
            gx[i] += self.grad[i];
        if (double *gb = parent_grad(self, 1))
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j)
              gb[j] += self.grad[i * n + j];
      },
      "add_bias");
}

Tensor add_tiled(const Tensor &x, const Tensor &table) {
  require_2d(x, "add_tiled");
  require_2d(table, "add_tiled");
  const std::size_t r = table.rows(), n = table.cols();
  if (x.cols() != n || x.rows() % r != 0)
    throw DimensionError("add_tiled: " + shape_str(x.shape()) +
                         " is not a tiling of " + shape_str(table.shape()));
  const std::size_t block = r * n;
  std::vector<double> out(x.data().begin(), x.data().end());
  auto tv = table.data();
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] += tv[i % block];
  return Tensor::make_result(
      x.shape(), std::move(out), {x, table},
      [block](Node &self) {
        if (double *gx = parent_grad(self, 0))
          for (std::size_t i = 0; i < self.grad.size(); ++i)
            gx[i] += self.grad[i];
        if (double *gt = parent_grad(self, 1))
          for (std::size_t i = 0; i < self.grad.size(); ++i)
            gt[i % block] += self.grad[i];
      },
      "add_tiled");
}

Tensor gelu(const Tensor &x) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  return unary(
      x,
      [](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
      [inv_sqrt_2pi](double v, double) {
        const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
        const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
        return cdf + v * pdf;
      },
      "gelu");
}

Tensor sigmoid(const Tensor &x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0.0)
          return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); }, "sigmoid");
}

Tensor tanh(const Tensor &x) {
  return unary(
      x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; }, "tanh");
}

Tensor relu(const Tensor &x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; }, "relu");
}

Tensor softmax_rows(const Tensor &x) {
  require_2d(x, "softmax_rows");
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(m * n);
  auto in = x.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double *row = in.data() + i * n;
    double *o = out.data() + i * n;
    const double mx = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      o[j] = std::exp(row[j] - mx);
      z += o[j];
    }
    for (std::size_t j = 0; j < n; ++j)
      o[j] /= z;
  }
  return Tensor::make_result(
      x.shape(), std::move(out), {x},
      [m, n](Node &self) {
        double *gx = parent_grad(self, 0);
        if (!gx)
          return;
        for (std::size_t i = 0; i < m; ++i) {
          const double *y = self.data.data() + i * n;
          const double *g = self.grad.data() + i * n;
          double dot = 0.0;
          for (std::size_t j = 0; j < n; ++j)
            dot += g[j] * y[j];
          for (std::size_t j = 0; j < n; ++j)
            gx[i * n + j] += y[j] * (g[j] - dot);
        }
      },
      "softmax_rows");
}

Tensor layer_norm(const Tensor &x, const Tensor &gamma, const Tensor &beta,
                  double eps) {
  require_2d(x, "layer_norm");
  if (!(eps > 0.0))
    throw ParameterError("layer_norm: eps must be positive");
  const std::size_t m = x.rows(), n = x.cols();
  if (gamma.size() != n || beta.size() != n)
    throw DimensionError("layer_norm: affine parameters " +
                         shape_str(gamma.shape()) + "/" +
                         shape_str(beta.shape()) + " do not match " +
                         shape_str(x.shape()));
  std::vector<double> out(m * n);
  std::vector<double> normed(m * n);
  std::vector<double> inv_std(m);
  auto in = x.data();
  auto gv = gamma.data(), bv = beta.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double *row = in.data() + i * n;
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      mean += row[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      normed[i * n + j] = (row[j] - mean) * inv_std[i];
      out[i * n + j] = normed[i * n + j] * gv[j] + bv[j];
    }
  }
  return Tensor::make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [m, n, normed = std::move(normed),
       inv_std = std::move(inv_std)](Node &self) {
        const double *g = self.grad.data();
        const double *gv = parent_data(self, 1);
        if (double *gx = parent_grad(self, 0)) {
          const double dn = static_cast<double>(n);
          for (std::size_t i = 0; i < m; ++i) {
            double mean_dxh = 0.0, mean_dxh_xh = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              const double dxh = g[i * n + j] * gv[j];
              mean_dxh += dxh;
              mean_dxh_xh += dxh * normed[i * n + j];
            }
            mean_dxh /= dn;
            mean_dxh_xh /= dn;
            for (std::size_t j = 0; j < n; ++j) {
              const double dxh = g[i * n + j] * gv[j];
              gx[i * n + j] += inv_std[i] * (dxh - mean_dxh -
                                             normed[i * n + j] * mean_dxh_xh);
            }
          }
        }
        if (double *gg = parent_grad(self, 1))
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j)
              gg[j] += g[i * n + j] * normed[i * n + j];
        if (double *gb = parent_grad(self, 2))
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j)
              gb[j] += g[i * n + j];
      },
      "layer_norm");
}

Tensor dropout(const Tensor &x, double p, Rng &rng, bool training) {
  if (!(p >= 0.0) || p >= 1.0)
    throw ParameterError("dropout: p must lie in [0, 1), got " +
                         std::to_string(p));
  if (!training || p == 0.0)
    return x;
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(x.size());
  for (auto &m : mask)
    m = rng.uniform() < p ? 0.0 : keep_scale;
  std::vector<double> out(x.size());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = in[i] * mask[i];
  return Tensor::make_result(
      x.shape(), std::move(out), {x},
      [mask = std::move(mask)](Node &self) {
        if (double *gx = parent_grad(self, 0))
          for (std::size_t i = 0; i < mask.size(); ++i)
            gx[i] += self.grad[i] * mask[i];
      },
      "dropout");
}

Tensor sum(const Tensor &x) {
  double total = 0.0;
  for (double v : x.data())
    total += v;
  return Tensor::make_result(
      {}, {total}, {x},
      [](Node &self) {
        Node &p = *self.parents[0];
        if (!p.requires_grad)
          return;
        auto &g = p.ensure_grad();
        for (auto &v : g)
          v += self.grad[0];
      },
      "sum");
}

Tensor mse(const Tensor &a, const Tensor &b) {
  require_same(a, b, "mse");
  const double inv_n = 1.0 / static_cast<double>(a.size());
  std::vector<double> w(a.size(), inv_n);
  return weighted_sse(a, b, w);
}

Tensor weighted_sse(const Tensor &a, const Tensor &b,
                    std::span<const double> weights) {
  require_same(a, b, "weighted_sse");
  if (weights.size() != a.size())
    throw DimensionError("weighted_sse: " + std::to_string(weights.size()) +
                         " weights for tensor " + shape_str(a.shape()));
  auto av = a.data(), bv = b.data();
  double total = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = av[i] - bv[i];
    total += weights[i] * d * d;
  }
  std::vector<double> w(weights.begin(), weights.end());
  return Tensor::make_result(
      {}, {total}, {a, b},
      [w = std::move(w)](Node &self) {
        const double *av = parent_data(self, 0);
        const double *bv = parent_data(self, 1);
        const double g = self.grad[0];
        if (double *ga = parent_grad(self, 0))
          for (std::size_t i = 0; i < w.size(); ++i)
            ga[i] += g * 2.0 * w[i] * (av[i] - bv[i]);
        if (double *gb = parent_grad(self, 1))
          for (std::size_t i = 0; i < w.size(); ++i)
            gb[i] -= g * 2.0 * w[i] * (av[i] - bv[i]);
      },
      "weighted_sse");
}

Tensor slice_rows(const Tensor &x, std::size_t begin, std::size_t count) {
  require_2d(x, "slice_rows");
  if (count == 0 || begin + count > x.rows())
    throw DimensionError("slice_rows: rows [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of " +
                         shape_str(x.shape()));
  const std::size_t n = x.cols();
  auto in = x.data();
  std::vector<double> out(in.begin() + begin * n,
                          in.begin() + (begin + count) * n);
  return Tensor::make_result(
      {count, n}, std::move(out), {x},
      [offset = begin * n](Node &self) {
        if (double *gx = parent_grad(self, 0))
          for (std::size_t i = 0; i < self.grad.size(); ++i)
            gx[offset + i] += self.grad[i];
      },
      "slice_rows");
}

Tensor gather_rows(const Tensor &x, std::span<const std::size_t> indices) {
  require_2d(x, "gather_rows");
  if (indices.empty())
    throw DimensionError("gather_rows: empty index list");
  const std::size_t n = x.cols();
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  std::vector<double> out(idx.size() * n);
  auto in = x.data();
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= x.rows())
      throw DimensionError("gather_rows: index " + std::to_string(idx[r]) +
                           " out of " + shape_str(x.shape()));
    std::copy_n(in.begin() + idx[r] * n, n, out.begin() + r * n);
  }
  const std::size_t out_rows = idx.size();
  return Tensor::make_result(
      {out_rows, n}, std::move(out), {x},
      [n, idx = std::move(idx)](Node &self) {
        if (double *gx = parent_grad(self, 0))
          for (std::size_t r = 0; r < idx.size(); ++r)
            for (std::size_t j = 0; j < n; ++j)
              gx[idx[r] * n + j] += self.grad[r * n + j];
      },
      "gather_rows");
}

Tensor concat_rows(const std::vector<Tensor> &parts) {
  if (parts.empty())
    throw DimensionError("concat_rows: no inputs");
  const std::size_t n = parts.front().cols();
  std::size_t total_rows = 0;
  for (const auto &p : parts) {
    require_2d(p, "concat_rows");
    if (p.cols() != n)
      throw DimensionError("concat_rows: column mismatch " +
                           shape_str(parts.front().shape()) + " vs " +
                           shape_str(p.shape()));
    total_rows += p.rows();
  }
  std::vector<double> out;
  out.reserve(total_rows * n);
  for (const auto &p : parts)
    out.insert(out.end(), p.data().begin(), p.data().end());
  return Tensor::make_result(
      {total_rows, n}, std::move(out), parts,
      [](Node &self) {
        std::size_t offset = 0;
        for (std::size_t p = 0; p < self.parents.size(); ++p) {
          const std::size_t len = self.parents[p]->data.size();
          if (double *g = parent_grad(self, p))
            for (std::size_t i = 0; i < len; ++i)
              g[i] += self.grad[offset + i];
          offset += len;
        }
      },
      "concat_rows");
}

Tensor concat_cols(const std::vector<Tensor> &parts) {
  if (parts.empty())
    throw DimensionError("concat_cols: no inputs");
  const std::size_t m = parts.front().rows();
  std::size_t total_cols = 0;
  std::vector<std::size_t> widths;
  for (const auto &p : parts) {
    require_2d(p, "concat_cols");
    if (p.rows() != m)
      throw DimensionError("concat_cols: row mismatch " +
                           shape_str(parts.front().shape()) + " vs " +
                           shape_str(p.shape()));
    widths.push_back(p.cols());
    total_cols += p.cols();
  }
  std::vector<double> out(m * total_cols);
  std::size_t col0 = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    auto in = parts[p].data();
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(in.begin() + i * widths[p], widths[p],
                  out.begin() + i * total_cols + col0);
    col0 += widths[p];
  }
  return Tensor::make_result(
      {m, total_cols}, std::move(out), parts,
      [m, total_cols, widths = std::move(widths)](Node &self) {
        std::size_t col0 = 0;
        for (std::size_t p = 0; p < widths.size(); ++p) {
          if (double *g = parent_grad(self, p))
            for (std::size_t i = 0; i < m; ++i)
              for (std::size_t j = 0; j < widths[p]; ++j)
                g[i * widths[p] + j] += self.grad[i * total_cols + col0 + j];
          col0 += widths[p];
        }
      },
      "concat_cols");
}

} // namespace senscal::numcore
