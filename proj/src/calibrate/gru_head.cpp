// SPDX-License-Identifier: Apache-2.0
#include "senscal/calibrate/gru_head.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "senscal/error.hpp"
#include "senscal/numcore/adam.hpp"
#include "senscal/numcore/ops.hpp"
#include "senscal/sensbert/pretrain.hpp"

namespace senscal::calibrate {

namespace nc = numcore;

namespace {

Tensor uniform_param(nc::Shape shape, double bound, nc::Rng &rng) {
  std::vector<double> values(nc::shape_size(shape));
  for (auto &v : values)
    v = (2.0 * rng.uniform() - 1.0) * bound;
  return Tensor::from(std::move(shape), std::move(values), true);
}

Tensor clone_tensor(const Tensor &t) {
  return Tensor::from(t.shape(),
                      std::vector<double>(t.data().begin(), t.data().end()),
                      t.requires_grad());
}

Tensor linear(const Tensor &x, const Tensor &w, const Tensor &b) {
  return nc::add_bias(nc::matmul(x, w), b);
}

std::size_t meta_size(const sensbert::Checkpoint &ckpt, const char *key) {
  auto v = ckpt.meta(key);
  if (!v)
    throw FormatError(std::string("checkpoint metadata lacks '") + key + "'");
  try {
    return static_cast<std::size_t>(std::stoull(*v));
  } catch (const std::exception &) {
    throw FormatError(std::string("checkpoint metadata '") + key +
                      "' is not an integer");
  }
}

} // namespace

std::vector<std::pair<std::string, Tensor>> GruHeadParams::named() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto &g = layers[l];
    const std::string p = "gru" + std::to_string(l) + ".";
    out.emplace_back(p + "update.input", g.w_z);
    out.emplace_back(p + "reset.input", g.w_r);
    out.emplace_back(p + "candidate.input", g.w_n);
    out.emplace_back(p + "update.hidden", g.u_z);
    out.emplace_back(p + "reset.hidden", g.u_r);
    out.emplace_back(p + "candidate.hidden", g.u_n);
    out.emplace_back(p + "update.bias", g.b_z);
    out.emplace_back(p + "reset.bias", g.b_r);
    out.emplace_back(p + "candidate.bias", g.b_n);
    out.emplace_back(p + "candidate.hidden_bias", g.b_hn);
  }
  out.emplace_back("fc1.weight", fc1_w);
  out.emplace_back("fc1.bias", fc1_b);
  out.emplace_back("fc2.weight", fc2_w);
  out.emplace_back("fc2.bias", fc2_b);
  return out;
}

std::vector<Tensor> GruHeadParams::trainable() const {
  std::vector<Tensor> out;
  for (auto &[name, t] : named())
    out.push_back(t);
  return out;
}

GruHeadParams GruHeadParams::clone() const {
  GruHeadParams out;
  out.input_dim = input_dim;
  out.hidden = hidden;
  out.p_drop = p_drop;
  for (const auto &g : layers)
    out.layers.push_back({clone_tensor(g.w_z), clone_tensor(g.w_r),
                          clone_tensor(g.w_n), clone_tensor(g.u_z),
                          clone_tensor(g.u_r), clone_tensor(g.u_n),
                          clone_tensor(g.b_z), clone_tensor(g.b_r),
                          clone_tensor(g.b_n), clone_tensor(g.b_hn)});
  out.fc1_w = clone_tensor(fc1_w);
  out.fc1_b = clone_tensor(fc1_b);
  out.fc2_w = clone_tensor(fc2_w);
  out.fc2_b = clone_tensor(fc2_b);
  return out;
}

GruHeadParams init_head(std::size_t input_dim, std::size_t hidden,
                        double p_drop, nc::Rng &rng) {
  if (input_dim == 0 || hidden < 2)
    throw ParameterError("head needs input_dim > 0 and hidden >= 2");
  if (!(p_drop >= 0.0) || p_drop >= 1.0)
    throw ParameterError("dropout rate must lie in [0, 1)");
  GruHeadParams head;
  head.input_dim = input_dim;
  head.hidden = hidden;
  head.p_drop = p_drop;
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (std::size_t l = 0; l < kGruLayers; ++l) {
    const std::size_t in = l == 0 ? input_dim : hidden;
    GruLayer g;
    g.w_z = uniform_param({in, hidden}, bound, rng);
    g.w_r = uniform_param({in, hidden}, bound, rng);
    g.w_n = uniform_param({in, hidden}, bound, rng);
    g.u_z = uniform_param({hidden, hidden}, bound, rng);
    g.u_r = uniform_param({hidden, hidden}, bound, rng);
    g.u_n = uniform_param({hidden, hidden}, bound, rng);
    g.b_z = uniform_param({hidden}, bound, rng);
    g.b_r = uniform_param({hidden}, bound, rng);
    g.b_n = uniform_param({hidden}, bound, rng);
    g.b_hn = uniform_param({hidden}, bound, rng);
    head.layers.push_back(std::move(g));
  }
  const std::size_t fc_hidden = hidden / 2;
  const double b1 = 1.0 / std::sqrt(static_cast<double>(hidden));
  const double b2 = 1.0 / std::sqrt(static_cast<double>(fc_hidden));
  head.fc1_w = uniform_param({hidden, fc_hidden}, b1, rng);
  head.fc1_b = uniform_param({fc_hidden}, b1, rng);
  head.fc2_w = uniform_param({fc_hidden, 1}, b2, rng);
  head.fc2_b = uniform_param({1}, b2, rng);
  return head;
}

Tensor gru_cell(const GruLayer &layer, const Tensor &x, const Tensor &h) {
  Tensor z = nc::sigmoid(nc::add_bias(
      nc::add(nc::matmul(x, layer.w_z), nc::matmul(h, layer.u_z)), layer.b_z));
  Tensor r = nc::sigmoid(nc::add_bias(
      nc::add(nc::matmul(x, layer.w_r), nc::matmul(h, layer.u_r)), layer.b_r));
  Tensor hidden_part = linear(h, layer.u_n, layer.b_hn);
  Tensor n = nc::tanh(nc::add(linear(x, layer.w_n, layer.b_n),
                              nc::mul(r, hidden_part)));
  // (1 - z) * n + z * h == n + z * (h - n)
  return nc::add(n, nc::mul(z, nc::sub(h, n)));
}

Tensor head_forward(const GruHeadParams &head, const std::vector<Tensor> &steps,
                    nc::Rng &dropout_rng, bool training) {
  if (steps.empty())
    throw DimensionError("head_forward: empty sequence");
  const std::size_t batch = steps.front().rows();
  for (const auto &s : steps)
    if (s.ndim() != 2 || s.rows() != batch || s.cols() != head.input_dim)
      throw DimensionError("head_forward: step " + nc::shape_str(s.shape()) +
                           " does not match batch " + std::to_string(batch) +
                           " x input " + std::to_string(head.input_dim));
  std::vector<Tensor> seq = steps;
  for (const auto &layer : head.layers) {
    Tensor h = Tensor::zeros({batch, head.hidden});
    for (auto &x : seq) {
      h = gru_cell(layer, x, h);
      x = h;
    }
  }
  Tensor last = nc::dropout(seq.back(), head.p_drop, dropout_rng, training);
  Tensor hidden = nc::relu(linear(last, head.fc1_w, head.fc1_b));
  return linear(hidden, head.fc2_w, head.fc2_b);
}

void FinetuneConfig::validate() const {
  if (!encoder_frozen)
    throw ParameterError("fine-tuning always keeps the encoder frozen");
  if (epochs == 0 || batch_size == 0)
    throw ParameterError("finetune epochs and batch size must be positive");
  if (!(lr > 0.0))
    throw ParameterError("finetune learning rate must be positive");
  if (!(p_drop >= 0.0) || p_drop >= 1.0)
    throw ParameterError("dropout rate must lie in [0, 1)");
}

std::vector<Tensor>
Embeddings::steps(std::span<const std::size_t> positions) const {
  std::vector<Tensor> out;
  out.reserve(M);
  const std::size_t B = positions.size();
  for (std::size_t t = 0; t < M; ++t) {
    std::vector<double> values(B * dim);
    for (std::size_t b = 0; b < B; ++b)
      std::copy_n(this->values.begin() + (positions[b] * M + t) * dim, dim,
                  values.begin() + b * dim);
    out.push_back(Tensor::from({B, dim}, std::move(values)));
  }
  return out;
}

void check_compatible(const sensbert::EncoderParams &encoder,
                      const dataio::WindowSet &ws) {
  const auto &c = encoder.config;
  if (ws.M != c.M || ws.K != c.K)
    throw DimensionError("windows are " + std::to_string(ws.M) + "x" +
                         std::to_string(ws.K) + " but the encoder expects " +
                         std::to_string(c.M) + "x" + std::to_string(c.K));
  if (ws.variable_names != encoder.variable_names)
    throw DimensionError("window variables do not match encoder variables");
}

Embeddings compute_embeddings(const sensbert::EncoderParams &encoder,
                              const dataio::WindowSet &ws) {
  check_compatible(encoder, ws);
  nc::NoGradGuard no_grad;
  Embeddings emb;
  emb.count = ws.count();
  emb.M = ws.M;
  emb.dim = encoder.config.h_dim;
  emb.values.reserve(emb.count * emb.M * emb.dim);
  constexpr std::size_t kChunk = 64;
  std::vector<std::size_t> positions;
  for (std::size_t start = 0; start < ws.count(); start += kChunk) {
    const std::size_t n = std::min(kChunk, ws.count() - start);
    positions.resize(n);
    std::iota(positions.begin(), positions.end(), start);
    Tensor e = sensbert::encode_batch(
        encoder, sensbert::stack_windows(ws, positions), n);
    emb.values.insert(emb.values.end(), e.data().begin(), e.data().end());
  }
  return emb;
}

FinetuneResult finetune_embeddings(const Embeddings &emb,
                                   std::span<const double> targets,
                                   const GruHeadParams &head,
                                   const FinetuneConfig &cfg) {
  cfg.validate();
  if (targets.size() != emb.count)
    throw DataError("finetune: " + std::to_string(targets.size()) +
                    " targets for " + std::to_string(emb.count) + " windows");
  if (emb.count == 0)
    throw DataError("finetune: no windows");
  if (head.input_dim != emb.dim)
    throw DimensionError("head expects inputs of " +
                         std::to_string(head.input_dim) + ", embeddings have " +
                         std::to_string(emb.dim));

  FinetuneResult result{head.clone(), {}, 0};
  std::vector<Tensor> params = result.head.trainable();
  nc::AdamState adam = nc::make_adam(params, cfg.lr);
  nc::Rng dropout_rng = nc::Rng::substream(cfg.seed, "finetune-dropout");

  std::vector<std::size_t> order(emb.count);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    nc::Rng shuffle = nc::Rng::substream(cfg.seed, "finetune-shuffle", epoch);
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle.uniform_index(i)]);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - start);
      std::span<const std::size_t> positions(order.data() + start, n);
      std::vector<double> y(n);
      for (std::size_t i = 0; i < n; ++i)
        y[i] = targets[positions[i]];
      Tensor pred = head_forward(result.head, emb.steps(positions),
                                 dropout_rng, true);
      Tensor loss = nc::mse(pred, Tensor::from({n, 1}, std::move(y)));
      loss_sum += loss.item();
      ++batches;
      loss.backward();
      nc::adam_step(params, adam);
      ++result.steps;
      if (cfg.max_steps != 0 && result.steps >= cfg.max_steps)
        break;
    }
    result.loss_history.push_back(loss_sum / static_cast<double>(batches));
    if (cfg.max_steps != 0 && result.steps >= cfg.max_steps)
      break;
  }
  return result;
}

FinetuneResult finetune(const sensbert::EncoderParams &encoder,
                        const GruHeadParams &head, const dataio::WindowSet &ws,
                        const FinetuneConfig &cfg) {
  if (!ws.targets)
    throw DataError("finetune: windows carry no reference targets");
  const Embeddings emb = compute_embeddings(encoder, ws);
  return finetune_embeddings(emb, *ws.targets, head, cfg);
}

std::vector<double> predict_embeddings(const Embeddings &emb,
                                       const GruHeadParams &head) {
  if (head.input_dim != emb.dim)
    throw DimensionError("head expects inputs of " +
                         std::to_string(head.input_dim) + ", embeddings have " +
                         std::to_string(emb.dim));
  nc::NoGradGuard no_grad;
  nc::Rng unused(0);
  std::vector<double> out;
  out.reserve(emb.count);
  constexpr std::size_t kChunk = 128;
  std::vector<std::size_t> positions;
  for (std::size_t start = 0; start < emb.count; start += kChunk) {
    const std::size_t n = std::min(kChunk, emb.count - start);
    positions.resize(n);
    std::iota(positions.begin(), positions.end(), start);
    Tensor pred = head_forward(head, emb.steps(positions), unused, false);
    out.insert(out.end(), pred.data().begin(), pred.data().end());
  }
  return out;
}

std::vector<double> predict(const sensbert::EncoderParams &encoder,
                            const GruHeadParams &head,
                            const dataio::WindowSet &ws) {
  return predict_embeddings(compute_embeddings(encoder, ws), head);
}

void add_head(sensbert::Checkpoint &ckpt, const GruHeadParams &head) {
  ckpt.set_meta("head.input_dim", std::to_string(head.input_dim));
  ckpt.set_meta("head.hidden", std::to_string(head.hidden));
  ckpt.set_meta("head.layers", std::to_string(head.layers.size()));
  ckpt.set_meta("head.p_drop", sensbert::format_exact(head.p_drop));
  for (const auto &[name, t] : head.named())
    ckpt.add("head/" + name, t);
}

GruHeadParams head_from_checkpoint(const sensbert::Checkpoint &ckpt) {
  GruHeadParams head;
  head.input_dim = meta_size(ckpt, "head.input_dim");
  head.hidden = meta_size(ckpt, "head.hidden");
  const std::size_t n_layers = meta_size(ckpt, "head.layers");
  if (n_layers != kGruLayers)
    throw FormatError("head checkpoint has " + std::to_string(n_layers) +
                      " GRU layers, expected " + std::to_string(kGruLayers));
  head.p_drop = sensbert::split_doubles(ckpt.meta("head.p_drop").value_or("0"))
                    .at(0);
  const std::size_t G = head.hidden;
  auto get = [&](const std::string &name, nc::Shape shape) {
    return sensbert::tensor_from_checkpoint(ckpt, "head/" + name, shape);
  };
  for (std::size_t l = 0; l < n_layers; ++l) {
    const std::size_t in = l == 0 ? head.input_dim : G;
    const std::string p = "gru" + std::to_string(l) + ".";
    head.layers.push_back(
        {get(p + "update.input", {in, G}), get(p + "reset.input", {in, G}),
         get(p + "candidate.input", {in, G}), get(p + "update.hidden", {G, G}),
         get(p + "reset.hidden", {G, G}), get(p + "candidate.hidden", {G, G}),
         get(p + "update.bias", {G}), get(p + "reset.bias", {G}),
         get(p + "candidate.bias", {G}),
         get(p + "candidate.hidden_bias", {G})});
  }
  head.fc1_w = get("fc1.weight", {G, G / 2});
  head.fc1_b = get("fc1.bias", {G / 2});
  head.fc2_w = get("fc2.weight", {G / 2, 1});
  head.fc2_b = get("fc2.bias", {1});
  return head;
}

} // namespace senscal::calibrate
