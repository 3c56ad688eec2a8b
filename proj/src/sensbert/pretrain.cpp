// SPDX-License-Identifier: Apache-2.0
#include "senscal/sensbert/pretrain.hpp"

#include <algorithm>
#include <numeric>

#include "senscal/error.hpp"
#include "senscal/numcore/adam.hpp"
#include "senscal/numcore/ops.hpp"

namespace senscal::sensbert {

namespace nc = numcore;

const char *to_string(LossScope scope) {
  return scope == LossScope::Masked ? "masked" : "all";
}

LossScope parse_loss_scope(std::string_view text) {
  if (text == "masked")
    return LossScope::Masked;
  if (text == "all")
    return LossScope::All;
  throw ParameterError("loss scope must be 'masked' or 'all', got '" +
                       std::string(text) + "'");
}

void PretrainConfig::validate() const {
  if (epochs == 0 || batch_size == 0)
    throw ParameterError("pretrain epochs and batch size must be positive");
  if (!(lr > 0.0))
    throw ParameterError("pretrain learning rate must be positive");
}

Tensor pretrain_loss(const Tensor &original, const Tensor &reconstructed,
                     std::span<const std::uint8_t> row_mask, std::size_t M,
                     LossScope scope) {
  if (original.shape() != reconstructed.shape())
    throw DimensionError("pretrain_loss: " +
                         nc::shape_str(original.shape()) + " vs " +
                         nc::shape_str(reconstructed.shape()));
  if (scope == LossScope::All)
    return nc::mse(reconstructed, original);

  const std::size_t rows = original.rows(), K = original.cols();
  if (M == 0 || rows % M != 0 || row_mask.size() != rows)
    throw DimensionError("pretrain_loss: mask of " +
                         std::to_string(row_mask.size()) + " rows for " +
                         std::to_string(rows) + " rows of windows of " +
                         std::to_string(M));
  const std::size_t batch = rows / M;
  std::vector<std::size_t> counts(batch, 0);
  for (std::size_t r = 0; r < rows; ++r)
    counts[r / M] += row_mask[r] ? 1 : 0;
  const auto active = static_cast<std::size_t>(
      std::count_if(counts.begin(), counts.end(),
                    [](std::size_t c) { return c > 0; }));
  if (active == 0)
    throw ParameterError("masked pretrain loss with an empty mask");
  std::vector<double> weights(rows * K, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!row_mask[r])
      continue;
    const double w = 1.0 / (static_cast<double>(active) *
                            static_cast<double>(counts[r / M]) *
                            static_cast<double>(K));
    std::fill_n(weights.begin() + r * K, K, w);
  }
  return nc::weighted_sse(reconstructed, original, weights);
}

Tensor pretrain_loss(const Tensor &original, const Tensor &reconstructed,
                     const dataio::MaskPlan &plan, LossScope scope) {
  return pretrain_loss(original, reconstructed, plan.masks, plan.M, scope);
}

Tensor stack_windows(const dataio::WindowSet &ws,
                     std::span<const std::size_t> positions) {
  std::vector<double> values;
  values.reserve(positions.size() * ws.M * ws.K);
  for (std::size_t p : positions) {
    auto w = ws.window(p);
    values.insert(values.end(), w.begin(), w.end());
  }
  return Tensor::from({positions.size() * ws.M, ws.K}, std::move(values));
}

namespace {

struct MaskedBatch {
  Tensor original;
  Tensor masked;
  std::vector<std::uint8_t> row_mask;
};

MaskedBatch make_masked_batch(const dataio::WindowSet &ws,
                              std::span<const std::size_t> positions,
                              double mask_prob, std::size_t span_length,
                              nc::Rng &rng) {
  MaskedBatch b;
  b.original = stack_windows(ws, positions);
  std::vector<double> masked(b.original.data().begin(),
                             b.original.data().end());
  b.row_mask.assign(positions.size() * ws.M, 0);
  for (std::size_t i = 0; i < positions.size(); ++i) {
    std::span<std::uint8_t> mask(b.row_mask.data() + i * ws.M, ws.M);
    dataio::draw_span_mask(ws.M, mask_prob, span_length, rng, mask);
    for (std::size_t t = 0; t < ws.M; ++t)
      if (mask[t])
        std::fill_n(masked.begin() + (i * ws.M + t) * ws.K, ws.K, 0.0);
  }
  b.masked = Tensor::from(b.original.shape(), std::move(masked));
  return b;
}

} // namespace

PretrainResult pretrain(const dataio::InputView &train,
                        const EncoderConfig &model,
                        const PretrainConfig &cfg) {
  cfg.validate();
  model.validate();
  if (train.x == nullptr || train.x->cols != model.K)
    throw DimensionError("pretrain: model expects K=" +
                         std::to_string(model.K) + " input variables");
  const dataio::WindowSet ws = dataio::make_windows(train, model.M, cfg.overlap);
  if (ws.count() == 0)
    throw DataError("pretrain: no window could be formed");
  dataio::validate_mask_params(model.M, cfg.mask_prob, cfg.span_length);

  nc::Rng init_rng = nc::Rng::substream(cfg.seed, "pretrain-init");
  PretrainResult result{
      init_encoder(model, ws.variable_names, init_rng),
      init_decoder(model, init_rng), {}, 0};
  std::vector<Tensor> params = result.encoder.trainable();
  for (auto &t : result.decoder.trainable())
    params.push_back(t);
  nc::AdamState adam = nc::make_adam(params, cfg.lr);

  std::vector<std::size_t> order(ws.count());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    nc::Rng shuffle_rng = nc::Rng::substream(cfg.seed, "pretrain-shuffle", epoch);
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.uniform_index(i)]);
    nc::Rng mask_rng = nc::Rng::substream(cfg.seed, "pretrain-mask", epoch);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - start);
      std::span<const std::size_t> positions(order.data() + start, n);
      MaskedBatch batch = make_masked_batch(ws, positions, cfg.mask_prob,
                                            cfg.span_length, mask_rng);
      Tensor e = encode_batch(result.encoder, batch.masked, n);
      Tensor recon = decode(result.decoder, e);
      Tensor loss = pretrain_loss(batch.original, recon, batch.row_mask,
                                  model.M, cfg.loss_scope);
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

double reconstruction_loss(const EncoderParams &enc, const DecoderParams &dec,
                           const dataio::WindowSet &ws, double mask_prob,
                           std::size_t span_length, std::uint64_t mask_seed,
                           LossScope scope) {
  if (ws.count() == 0)
    throw DataError("reconstruction_loss: empty window set");
  nc::NoGradGuard no_grad;
  nc::Rng rng = nc::Rng::substream(mask_seed, "eval-mask");
  constexpr std::size_t kChunk = 64;
  double total = 0.0;
  std::vector<std::size_t> positions;
  for (std::size_t start = 0; start < ws.count(); start += kChunk) {
    const std::size_t n = std::min(kChunk, ws.count() - start);
    positions.resize(n);
    std::iota(positions.begin(), positions.end(), start);
    MaskedBatch batch =
        make_masked_batch(ws, positions, mask_prob, span_length, rng);
    Tensor recon = decode(dec, encode_batch(enc, batch.masked, n));
    total += pretrain_loss(batch.original, recon, batch.row_mask, ws.M, scope)
                 .item() *
             static_cast<double>(n);
  }
  return total / static_cast<double>(ws.count());
}

} // namespace senscal::sensbert
