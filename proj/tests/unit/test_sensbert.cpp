// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "grad_suite.hpp"
#include "test_support.hpp"

#include "senscal/dataio/synth.hpp"
#include "senscal/dataio/windows.hpp"
#include "senscal/error.hpp"
#include "senscal/numcore/ops.hpp"
#include "senscal/sensbert/checkpoint.hpp"
#include "senscal/sensbert/model.hpp"
#include "senscal/sensbert/pretrain.hpp"

using namespace senscal;
using namespace senscal::sensbert;
using numcore::Rng;

namespace {

EncoderConfig tiny_config() {
  EncoderConfig cfg;
  cfg.M = 6;
  cfg.K = 3;
  cfg.h_dim = 8;
  cfg.heads = 2;
  cfg.blocks = 2;
  cfg.ff_dim = 12;
  return cfg;
}

dataio::WindowSet random_windows(std::size_t n, std::size_t M, Rng &rng) {
  dataio::WindowSet ws;
  ws.M = M;
  ws.K = 3;
  ws.variable_names = {"S", "T", "Rh"};
  ws.data.resize(n * M * 3);
  for (auto &v : ws.data)
    v = rng.normal();
  for (std::size_t i = 0; i < n; ++i)
    ws.end_index.push_back(M - 1 + i);
  return ws;
}

} // namespace

TEST_CASE("encoder config validation") {
  EncoderConfig cfg = tiny_config();
  CHECK_NOTHROW(cfg.validate());
  cfg.heads = 3;
  CHECK_THROWS_AS(cfg.validate(), ParameterError);
  cfg = tiny_config();
  cfg.blocks = 0;
  CHECK_THROWS_AS(cfg.validate(), ParameterError);
}

TEST_CASE("positional table is the sinusoidal encoding") {
  Tensor pe = positional_table(5, 6);
  for (std::size_t pos = 0; pos < 5; ++pos)
    for (std::size_t i = 0; i < 3; ++i) {
      const double angle =
          static_cast<double>(pos) / std::pow(10000.0, 2.0 * i / 6.0);
      CHECK(pe.at(pos, 2 * i) == doctest::Approx(std::sin(angle)));
      CHECK(pe.at(pos, 2 * i + 1) == doctest::Approx(std::cos(angle)));
    }
  CHECK_FALSE(pe.requires_grad());
}

TEST_CASE("encoder and decoder shapes and initialisation determinism") {
  const EncoderConfig cfg = tiny_config();
  Rng r1(3), r2(3);
  auto e1 = init_encoder(cfg, {"S", "T", "Rh"}, r1);
  auto e2 = init_encoder(cfg, {"S", "T", "Rh"}, r2);
  CHECK(checksum(e1.named()) == checksum(e2.named()));
  CHECK(e1.blocks.size() == 2);
  CHECK(e1.blocks[0].heads.size() == 2);
  CHECK(e1.blocks[0].heads[0].w_q.shape() == numcore::Shape{8, 4});

  Rng rng(4);
  Tensor x = testing::random_tensor({6, 3}, rng, 1.0, false);
  Tensor E = encode(e1, x);
  CHECK(E.shape() == numcore::Shape{6, 8});
  auto dec = init_decoder(cfg, r1);
  CHECK(decode(dec, E).shape() == numcore::Shape{6, 3});
  CHECK_THROWS_AS(encode(e1, testing::random_tensor({5, 3}, rng)),
                  DimensionError);
}

TEST_CASE("encoder output rows are layer normalised") {
  // The last operation is a LayerNorm at gamma = 1, beta = 0.
  Rng rng(8);
  auto enc = init_encoder(tiny_config(), {"S", "T", "Rh"}, rng);
  Tensor E = embed(enc, testing::random_tensor({6, 3}, rng, 1.0, false));
  for (std::size_t i = 0; i < 6; ++i) {
    double m = 0, v = 0;
    for (std::size_t j = 0; j < 8; ++j)
      m += E.at(i, j) / 8;
    for (std::size_t j = 0; j < 8; ++j)
      v += (E.at(i, j) - m) * (E.at(i, j) - m) / 8;
    CHECK(std::abs(m) < 1e-12);
    CHECK(v == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("attention weights form row-stochastic matrices") {
  Rng rng(12);
  auto enc = init_encoder(tiny_config(), {"S", "T", "Rh"}, rng);
  AttentionTrace trace;
  encode_batch(enc, testing::random_tensor({12, 3}, rng, 1.0, false), 2,
               &trace);
  REQUIRE(!trace.weights.empty());
  for (const auto &w : trace.weights) {
    REQUIRE(w.cols() == 6);
    for (std::size_t i = 0; i < w.rows(); ++i) {
      double s = 0;
      for (std::size_t j = 0; j < 6; ++j) {
        CHECK(w.at(i, j) >= 0.0);
        s += w.at(i, j);
      }
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("batched encoding equals per-window encoding bitwise") {
  Rng rng(21);
  auto enc = init_encoder(tiny_config(), {"S", "T", "Rh"}, rng);
  auto ws = random_windows(5, 6, rng);
  std::vector<std::size_t> all(5);
  std::iota(all.begin(), all.end(), 0);
  Tensor batched = encode_batch(enc, stack_windows(ws, all), 5);
  for (std::size_t i = 0; i < 5; ++i) {
    const std::size_t one[] = {i};
    Tensor single = encode(enc, stack_windows(ws, one));
    for (std::size_t k = 0; k < single.size(); ++k)
      CHECK(single.data()[k] == batched.data()[i * single.size() + k]);
  }
}

TEST_CASE("masked loss averages squared error over masked rows per window") {
  Rng rng(31);
  const std::size_t M = 4, K = 3, B = 3;
  Tensor a = testing::random_tensor({B * M, K}, rng, 1.0, false);
  Tensor b = testing::random_tensor({B * M, K}, rng, 1.0, false);
  // Window 1 has no masked rows and is excluded from the average.
  const std::vector<std::uint8_t> mask{1, 0, 0, 1, 0, 0, 0, 0, 0, 1, 1, 1};
  double expect = 0.0;
  for (std::size_t w : {0u, 2u}) {
    double se = 0;
    std::size_t rows = 0;
    for (std::size_t t = 0; t < M; ++t) {
      if (!mask[w * M + t])
        continue;
      ++rows;
      for (std::size_t k = 0; k < K; ++k) {
        const double d = a.at(w * M + t, k) - b.at(w * M + t, k);
        se += d * d;
      }
    }
    expect += se / static_cast<double>(rows * K) / 2.0;
  }
  CHECK(pretrain_loss(a, b, mask, M, LossScope::Masked).item() ==
        doctest::Approx(expect).epsilon(1e-12));
  CHECK(pretrain_loss(a, b, mask, M, LossScope::All).item() ==
        doctest::Approx(numcore::mse(a, b).item()).epsilon(1e-12));
  const std::vector<std::uint8_t> none(B * M, 0);
  CHECK_THROWS_AS(pretrain_loss(a, b, none, M, LossScope::Masked),
                  ParameterError);
  CHECK(parse_loss_scope("all") == LossScope::All);
  CHECK(std::string(to_string(LossScope::Masked)) == "masked");
}

TEST_CASE("composed encoder-decoder loss passes the gradient check") {
  for (std::uint64_t i = 0; i < 3; ++i) {
    Rng rng = Rng::substream(5, "enc-dec-unit", i);
    CHECK(testing::grad::encoder_decoder_loss_case(rng, 60) < 1e-3);
  }
}

TEST_CASE("checkpoint round trip is exact and rejects corruption") {
  Rng rng(44);
  const EncoderConfig cfg = tiny_config();
  auto enc = init_encoder(cfg, {"S", "T", "Rh"}, rng);
  auto dec = init_decoder(cfg, rng);
  Checkpoint ck;
  add_encoder(ck, enc);
  add_decoder(ck, dec);
  dataio::StandardizerStats stats{{1.5, 2.5, 3.5}, {0.1, 0.2, 0.3}, 7.0, 2.0};
  add_standardizer(ck, stats);
  ck.set_meta("note", "x=y");
  const std::string bytes = serialize_checkpoint(ck);
  CHECK(bytes.substr(0, kCheckpointMagic.size()) == kCheckpointMagic);

  Checkpoint back = deserialize_checkpoint(bytes);
  CHECK(serialize_checkpoint(back) == bytes);
  CHECK(checksum(encoder_from_checkpoint(back).named()) ==
        checksum(enc.named()));
  CHECK(checksum(decoder_from_checkpoint(back).named()) ==
        checksum(dec.named()));
  auto s = standardizer_from_checkpoint(back);
  REQUIRE(s);
  CHECK(s->x_std == stats.x_std);
  CHECK(*s->y_mean == 7.0);
  CHECK(back.meta("note") == "x=y");

  std::string bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(deserialize_checkpoint(bad), FormatError);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() / 2)),
                  FormatError);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/ckpt.sbckpt"), DataError);
}

TEST_CASE("exact double formatting round trips") {
  for (double v : {0.1, -1e-300, 1.0 / 3.0, 12345678.9})
    CHECK(split_doubles(format_exact(v)).at(0) == v);
  CHECK(split_doubles(join_doubles({1.5, -2.0, 0.1})) ==
        std::vector<double>{1.5, -2.0, 0.1});
}

TEST_CASE("pretraining is deterministic and reduces the masked loss") {
  dataio::SyntheticConfig sc;
  sc.n_samples = 400;
  auto frame = dataio::synth_generate(sc);
  // Standardise inline so the test does not depend on preprocessing.
  for (std::size_t k = 0; k < 3; ++k) {
    auto col = frame.x.column(k);
    double m = std::accumulate(col.begin(), col.end(), 0.0) / col.size();
    double v = 0;
    for (double x : col)
      v += (x - m) * (x - m) / col.size();
    for (std::size_t i = 0; i < frame.size(); ++i)
      frame.x(i, k) = (frame.x(i, k) - m) / std::sqrt(v);
  }
  EncoderConfig model = tiny_config();
  model.M = 8;
  PretrainConfig pc;
  pc.overlap = 7;
  pc.span_length = 2;
  pc.epochs = 3;
  pc.batch_size = 16;
  pc.lr = 3e-3;
  auto r1 = pretrain(frame.inputs(), model, pc);
  auto r2 = pretrain(frame.inputs(), model, pc);
  CHECK(checksum(r1.encoder.named()) == checksum(r2.encoder.named()));
  CHECK(r1.loss_history == r2.loss_history);
  CHECK(r1.loss_history.size() == 3);

  auto ws = dataio::make_windows(frame, 8, 7);
  Rng init_rng = Rng::substream(pc.seed, "pretrain-init");
  auto enc0 = init_encoder(model, ws.variable_names, init_rng);
  auto dec0 = init_decoder(model, init_rng);
  const double before =
      reconstruction_loss(enc0, dec0, ws, 0.2, 2, 99, LossScope::Masked);
  const double after = reconstruction_loss(r1.encoder, r1.decoder, ws, 0.2,
                                           2, 99, LossScope::Masked);
  CHECK(after < before);

  pc.max_steps = 5;
  CHECK(pretrain(frame.inputs(), model, pc).steps == 5);
  pc.lr = 0.0;
  CHECK_THROWS_AS(pretrain(frame.inputs(), model, pc), ParameterError);
}
