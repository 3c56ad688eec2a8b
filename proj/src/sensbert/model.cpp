// SPDX-License-Identifier: Apache-2.0
#include "senscal/sensbert/model.hpp"

#include <cmath>
#include <cstring>

#include "senscal/error.hpp"
#include "senscal/numcore/ops.hpp"

namespace senscal::sensbert {

namespace nc = numcore;

void EncoderConfig::validate() const {
  if (M == 0 || K == 0 || h_dim == 0 || heads == 0 || blocks == 0 ||
      ff_dim == 0)
    throw ParameterError("encoder sizes must be positive");
  if (h_dim % heads != 0)
    throw ParameterError("h_dim " + std::to_string(h_dim) +
                         " is not divisible by heads " +
                         std::to_string(heads));
  if (!(ln_eps > 0.0))
    throw ParameterError("layer-norm eps must be positive");
}

namespace {

Tensor uniform_param(nc::Shape shape, std::size_t fan_in, nc::Rng &rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> values(nc::shape_size(shape));
  for (auto &v : values)
    v = (2.0 * rng.uniform() - 1.0) * bound;
  return Tensor::from(std::move(shape), std::move(values), true);
}

LayerNormParams init_ln(std::size_t n) {
  return {Tensor::full({n}, 1.0, true), Tensor::zeros({n}, true)};
}

Tensor clone_tensor(const Tensor &t) {
  return Tensor::from(t.shape(),
                      std::vector<double>(t.data().begin(), t.data().end()),
                      t.requires_grad());
}

LayerNormParams clone_ln(const LayerNormParams &ln) {
  return {clone_tensor(ln.gamma), clone_tensor(ln.beta)};
}

void push_ln(std::vector<std::pair<std::string, Tensor>> &out,
             const std::string &name, const LayerNormParams &ln) {
  out.emplace_back(name + ".gamma", ln.gamma);
  out.emplace_back(name + ".beta", ln.beta);
}

Tensor apply_ln(const Tensor &x, const LayerNormParams &ln, double eps) {
  return nc::layer_norm(x, ln.gamma, ln.beta, eps);
}

Tensor linear(const Tensor &x, const Tensor &w, const Tensor &b) {
  return nc::add_bias(nc::matmul(x, w), b);
}

} // namespace

std::vector<std::pair<std::string, Tensor>> EncoderParams::named() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("input_proj.weight", in_w);
  out.emplace_back("input_proj.bias", in_b);
  push_ln(out, "input_norm", ln_in);
  push_ln(out, "position_norm", ln_pe);
  out.emplace_back("position_table", pe_table);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto &blk = blocks[b];
    const std::string p = "block" + std::to_string(b) + ".";
    for (std::size_t h = 0; h < blk.heads.size(); ++h) {
      const std::string hp = p + "head" + std::to_string(h) + ".";
      out.emplace_back(hp + "query", blk.heads[h].w_q);
      out.emplace_back(hp + "key", blk.heads[h].w_k);
      out.emplace_back(hp + "value", blk.heads[h].w_v);
    }
    out.emplace_back(p + "attn_out", blk.w_o);
    push_ln(out, p + "attn_norm", blk.ln_attn);
    out.emplace_back(p + "proj.weight", blk.proj_w);
    out.emplace_back(p + "proj.bias", blk.proj_b);
    push_ln(out, p + "proj_norm", blk.ln_proj);
    out.emplace_back(p + "ff1.weight", blk.ff1_w);
    out.emplace_back(p + "ff1.bias", blk.ff1_b);
    out.emplace_back(p + "ff2.weight", blk.ff2_w);
    out.emplace_back(p + "ff2.bias", blk.ff2_b);
    push_ln(out, p + "ff_norm", blk.ln_ff);
  }
  return out;
}

std::vector<Tensor> EncoderParams::trainable() const {
  std::vector<Tensor> out;
  for (auto &[name, t] : named())
    if (t.requires_grad())
      out.push_back(t);
  return out;
}

EncoderParams EncoderParams::clone() const {
  EncoderParams out;
  out.config = config;
  out.variable_names = variable_names;
  out.in_w = clone_tensor(in_w);
  out.in_b = clone_tensor(in_b);
  out.ln_in = clone_ln(ln_in);
  out.ln_pe = clone_ln(ln_pe);
  out.pe_table = clone_tensor(pe_table);
  for (const auto &blk : blocks) {
    EncoderBlock c;
    for (const auto &h : blk.heads)
      c.heads.push_back({clone_tensor(h.w_q), clone_tensor(h.w_k),
                         clone_tensor(h.w_v)});
    c.w_o = clone_tensor(blk.w_o);
    c.ln_attn = clone_ln(blk.ln_attn);
    c.proj_w = clone_tensor(blk.proj_w);
    c.proj_b = clone_tensor(blk.proj_b);
    c.ln_proj = clone_ln(blk.ln_proj);
    c.ff1_w = clone_tensor(blk.ff1_w);
    c.ff1_b = clone_tensor(blk.ff1_b);
    c.ff2_w = clone_tensor(blk.ff2_w);
    c.ff2_b = clone_tensor(blk.ff2_b);
    c.ln_ff = clone_ln(blk.ln_ff);
    out.blocks.push_back(std::move(c));
  }
  return out;
}

std::vector<std::pair<std::string, Tensor>> DecoderParams::named() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("proj.weight", proj_w);
  out.emplace_back("proj.bias", proj_b);
  out.emplace_back("pred.weight", pred_w);
  out.emplace_back("pred.bias", pred_b);
  push_ln(out, "out_norm", ln_out);
  return out;
}

std::vector<Tensor> DecoderParams::trainable() const {
  std::vector<Tensor> out;
  for (auto &[name, t] : named())
    out.push_back(t);
  return out;
}

DecoderParams DecoderParams::clone() const {
  return {clone_tensor(proj_w), clone_tensor(proj_b), clone_tensor(pred_w),
          clone_tensor(pred_b), clone_ln(ln_out), ln_eps};
}

Tensor positional_table(std::size_t M, std::size_t h_dim) {
  std::vector<double> values(M * h_dim);
  for (std::size_t pos = 0; pos < M; ++pos)
    for (std::size_t d = 0; d < h_dim; ++d) {
      const double exponent =
          static_cast<double>(2 * (d / 2)) / static_cast<double>(h_dim);
      const double angle =
          static_cast<double>(pos) / std::pow(10000.0, exponent);
      values[pos * h_dim + d] = d % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  return Tensor::from({M, h_dim}, std::move(values), false);
}

EncoderParams init_encoder(const EncoderConfig &cfg,
                           std::vector<std::string> variable_names,
                           nc::Rng &rng) {
  cfg.validate();
  if (variable_names.size() != cfg.K)
    throw DimensionError("encoder expects " + std::to_string(cfg.K) +
                         " variable names, got " +
                         std::to_string(variable_names.size()));
  const std::size_t H = cfg.h_dim, dh = cfg.head_dim(), F = cfg.ff_dim;
  EncoderParams p;
  p.config = cfg;
  p.variable_names = std::move(variable_names);
  p.in_w = uniform_param({cfg.K, H}, cfg.K, rng);
  p.in_b = uniform_param({H}, cfg.K, rng);
  p.ln_in = init_ln(H);
  p.ln_pe = init_ln(H);
  p.pe_table = positional_table(cfg.M, H);
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    EncoderBlock blk;
    for (std::size_t h = 0; h < cfg.heads; ++h)
      blk.heads.push_back({uniform_param({H, dh}, H, rng),
                           uniform_param({H, dh}, H, rng),
                           uniform_param({H, dh}, H, rng)});
    blk.w_o = uniform_param({H, H}, H, rng);
    blk.ln_attn = init_ln(H);
    blk.proj_w = uniform_param({H, H}, H, rng);
    blk.proj_b = uniform_param({H}, H, rng);
    blk.ln_proj = init_ln(H);
    blk.ff1_w = uniform_param({H, F}, H, rng);
    blk.ff1_b = uniform_param({F}, H, rng);
    blk.ff2_w = uniform_param({F, H}, F, rng);
    blk.ff2_b = uniform_param({H}, F, rng);
    blk.ln_ff = init_ln(H);
    p.blocks.push_back(std::move(blk));
  }
  return p;
}

DecoderParams init_decoder(const EncoderConfig &cfg, nc::Rng &rng) {
  cfg.validate();
  const std::size_t H = cfg.h_dim;
  DecoderParams d;
  d.proj_w = uniform_param({H, H}, H, rng);
  d.proj_b = uniform_param({H}, H, rng);
  d.pred_w = uniform_param({H, cfg.K}, H, rng);
  d.pred_b = uniform_param({cfg.K}, H, rng);
  d.ln_out = init_ln(cfg.K);
  d.ln_eps = cfg.ln_eps;
  return d;
}

Tensor multi_head_attention(const std::vector<AttentionHead> &heads,
                            const Tensor &h, std::size_t batch,
                            std::size_t M, AttentionTrace *trace) {
  if (heads.empty())
    throw ParameterError("attention needs at least one head");
  if (h.rows() != batch * M)
    throw DimensionError("attention input " + nc::shape_str(h.shape()) +
                         " is not " + std::to_string(batch) + " windows of " +
                         std::to_string(M) + " rows");
  const double scale = 1.0 / std::sqrt(static_cast<double>(heads[0].w_q.cols()));
  std::vector<Tensor> head_outputs;
  head_outputs.reserve(heads.size());
  std::vector<std::vector<Tensor>> per_window(batch);
  for (const auto &head : heads) {
    Tensor q = nc::matmul(h, head.w_q);
    Tensor k = nc::matmul(h, head.w_k);
    Tensor v = nc::matmul(h, head.w_v);
    std::vector<Tensor> windows;
    windows.reserve(batch);
    for (std::size_t b = 0; b < batch; ++b) {
      Tensor qb = batch == 1 ? q : nc::slice_rows(q, b * M, M);
      Tensor kb = batch == 1 ? k : nc::slice_rows(k, b * M, M);
      Tensor vb = batch == 1 ? v : nc::slice_rows(v, b * M, M);
      Tensor weights = nc::softmax_rows(nc::scale(nc::matmul_nt(qb, kb), scale));
      if (trace)
        per_window[b].push_back(weights);
      windows.push_back(nc::matmul(weights, vb));
    }
    head_outputs.push_back(batch == 1 ? windows[0] : nc::concat_rows(windows));
  }
  if (trace)
    for (auto &w : per_window)
      for (auto &t : w)
        trace->weights.push_back(t);
  return heads.size() == 1 ? head_outputs[0] : nc::concat_cols(head_outputs);
}

Tensor encode_batch(const EncoderParams &params, const Tensor &x,
                    std::size_t batch, AttentionTrace *trace) {
  const auto &cfg = params.config;
  if (x.ndim() != 2 || x.cols() != cfg.K || x.rows() != batch * cfg.M)
    throw DimensionError("encode: input " + nc::shape_str(x.shape()) +
                         " does not match " + std::to_string(batch) +
                         " windows of " + std::to_string(cfg.M) + "x" +
                         std::to_string(cfg.K));
  const double eps = cfg.ln_eps;
  Tensor d = apply_ln(linear(x, params.in_w, params.in_b), params.ln_in, eps);
  Tensor h = apply_ln(nc::add_tiled(d, params.pe_table), params.ln_pe, eps);
  for (const auto &blk : params.blocks) {
    Tensor attn = nc::matmul(
        multi_head_attention(blk.heads, h, batch, cfg.M, trace), blk.w_o);
    Tensor a = apply_ln(attn, blk.ln_attn, eps);
    Tensor p = apply_ln(linear(a, blk.proj_w, blk.proj_b), blk.ln_proj, eps);
    Tensor ff = linear(nc::gelu(linear(p, blk.ff1_w, blk.ff1_b)), blk.ff2_w,
                       blk.ff2_b);
    h = apply_ln(ff, blk.ln_ff, eps);
  }
  return h;
}

Tensor encode(const EncoderParams &params, const Tensor &x,
              AttentionTrace *trace) {
  return encode_batch(params, x, 1, trace);
}

Tensor decode(const DecoderParams &params, const Tensor &E) {
  if (E.ndim() != 2 || E.cols() != params.proj_w.rows())
    throw DimensionError("decode: embeddings " + nc::shape_str(E.shape()) +
                         " do not match projection " +
                         nc::shape_str(params.proj_w.shape()));
  Tensor d = linear(nc::gelu(E), params.proj_w, params.proj_b);
  Tensor pred = linear(d, params.pred_w, params.pred_b);
  return nc::layer_norm(pred, params.ln_out.gamma, params.ln_out.beta,
                         params.ln_eps);
}

Tensor embed(const EncoderParams &params, const Tensor &x) {
  nc::NoGradGuard no_grad;
  return encode(params, x);
}

std::uint64_t
checksum(const std::vector<std::pair<std::string, Tensor>> &named) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto &[name, t] : named) {
    h = nc::fnv1a(name, h);
    auto d = t.data();
    h = nc::fnv1a(std::string_view(reinterpret_cast<const char *>(d.data()),
                                   d.size() * sizeof(double)),
                  h);
  }
  return h;
}

} // namespace senscal::sensbert
