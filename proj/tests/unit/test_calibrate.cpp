// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "doctest.h"
#include "grad_suite.hpp"
#include "test_support.hpp"

#include "senscal/calibrate/baselines.hpp"
#include "senscal/calibrate/gru_head.hpp"
#include "senscal/error.hpp"
#include "senscal/numcore/ops.hpp"
#include "senscal/sensbert/checkpoint.hpp"
#include "senscal/sensbert/model.hpp"

using namespace senscal;
using namespace senscal::calibrate;
using dataio::Matrix;
using numcore::Rng;
namespace nc = senscal::numcore;

namespace {

Matrix random_matrix(std::size_t n, std::size_t p, Rng &rng) {
  Matrix x(n, p);
  for (auto &v : x.values)
    v = rng.normal();
  return x;
}

dataio::WindowSet random_windows(std::size_t n, std::size_t M, Rng &rng) {
  dataio::WindowSet ws;
  ws.M = M;
  ws.K = 3;
  ws.variable_names = {"S", "T", "Rh"};
  ws.data.resize(n * M * 3);
  for (auto &v : ws.data)
    v = rng.normal();
  ws.targets.emplace(n);
  for (std::size_t i = 0; i < n; ++i) {
    ws.end_index.push_back(M - 1 + i);
    // Target depends on the last timestep's signal.
    (*ws.targets)[i] = ws.data[(i * M + M - 1) * 3];
  }
  return ws;
}

sensbert::EncoderParams tiny_encoder(std::size_t M, Rng &rng) {
  sensbert::EncoderConfig cfg;
  cfg.M = M;
  cfg.h_dim = 8;
  cfg.heads = 2;
  cfg.blocks = 1;
  cfg.ff_dim = 8;
  return sensbert::init_encoder(cfg, {"S", "T", "Rh"}, rng);
}

} // namespace

TEST_CASE("gru cell output is a convex combination of candidate and state") {
  // h' = (1 - z) n + z h with z in (0, 1) and n in (-1, 1): every unit of h'
  // lies between n and h. Recompute the gates independently.
  Rng rng(2);
  auto head = init_head(3, 4, 0.0, rng);
  const auto &L = head.layers[0];
  Tensor x = testing::random_tensor({2, 3}, rng, 1.0, false);
  Tensor h = testing::random_tensor({2, 4}, rng, 0.5, false);
  Tensor out = gru_cell(L, x, h);

  auto gate = [&](const Tensor &w, const Tensor &u, const Tensor &b) {
    return nc::add_bias(nc::add(nc::matmul(x, w), nc::matmul(h, u)), b);
  };
  Tensor z = nc::sigmoid(gate(L.w_z, L.u_z, L.b_z));
  Tensor r = nc::sigmoid(gate(L.w_r, L.u_r, L.b_r));
  Tensor n = nc::tanh(nc::add(
      nc::add_bias(nc::matmul(x, L.w_n), L.b_n),
      nc::mul(r, nc::add_bias(nc::matmul(h, L.u_n), L.b_hn))));
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double zi = z.data()[i], ni = n.data()[i], hi = h.data()[i];
    CHECK(out.data()[i] ==
          doctest::Approx((1.0 - zi) * ni + zi * hi).epsilon(1e-12));
    CHECK(out.data()[i] >= std::min(ni, hi) - 1e-12);
    CHECK(out.data()[i] <= std::max(ni, hi) + 1e-12);
  }
}

TEST_CASE("head forward shape and inference determinism") {
  Rng rng(3);
  auto head = init_head(5, 6, 0.1, rng);
  CHECK(head.layers.size() == kGruLayers);
  CHECK(head.fc1_w.shape() == nc::Shape{6, 3});
  std::vector<Tensor> steps;
  for (int t = 0; t < 4; ++t)
    steps.push_back(testing::random_tensor({3, 5}, rng, 1.0, false));
  Rng d1(1), d2(2);
  Tensor a = head_forward(head, steps, d1, false);
  Tensor b = head_forward(head, steps, d2, false);
  CHECK(a.shape() == nc::Shape{3, 1});
  CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
}

TEST_CASE("head loss passes the gradient check") {
  for (std::uint64_t i = 0; i < 3; ++i) {
    Rng rng = Rng::substream(8, "gru-unit", i);
    CHECK(testing::grad::gru_head_loss_case(rng, 80) < 1e-3);
  }
}

TEST_CASE("precomputed embeddings match the encoder output") {
  Rng rng(5);
  auto enc = tiny_encoder(6, rng);
  auto ws = random_windows(70, 6, rng);
  Embeddings emb = compute_embeddings(enc, ws);
  CHECK(emb.count == 70);
  CHECK(emb.dim == 8);
  const std::size_t probe[] = {65};
  Tensor single = sensbert::embed(enc, sensbert::stack_windows(ws, probe));
  auto steps = emb.steps(probe);
  REQUIRE(steps.size() == 6);
  for (std::size_t t = 0; t < 6; ++t)
    for (std::size_t j = 0; j < 8; ++j)
      CHECK(steps[t].at(0, j) == single.at(t, j));
}

TEST_CASE("fine-tuning leaves the encoder untouched and fits the targets") {
  Rng rng(6);
  auto enc = tiny_encoder(4, rng);
  const auto before = sensbert::checksum(enc.named());
  auto ws = random_windows(256, 4, rng);
  FinetuneConfig fc;
  fc.epochs = 15;
  fc.hidden = 8;
  fc.lr = 3e-3;
  Rng hrng(9);
  auto head = init_head(8, 8, 0.1, hrng);
  auto r1 = finetune(enc, head, ws, fc);
  auto r2 = finetune(enc, head, ws, fc);
  CHECK(sensbert::checksum(enc.named()) == before);
  CHECK(r1.loss_history == r2.loss_history);
  CHECK(r1.loss_history.back() < r1.loss_history.front());
  CHECK(r1.steps == 15 * 8);
  // The initial head is not modified in place.
  CHECK(sensbert::checksum(head.named()) !=
        sensbert::checksum(r1.head.named()));
  auto p = predict(enc, r1.head, ws);
  CHECK(p.size() == 256);

  fc.encoder_frozen = false;
  CHECK_THROWS_AS(fc.validate(), ParameterError);
}

TEST_CASE("encoder and windows must agree on shape") {
  Rng rng(7);
  auto enc = tiny_encoder(6, rng);
  CHECK_THROWS_AS(check_compatible(enc, random_windows(4, 5, rng)),
                  DimensionError);
  auto ws = random_windows(4, 6, rng);
  ws.K = 2;
  ws.data.resize(4 * 6 * 2);
  CHECK_THROWS_AS(check_compatible(enc, ws), DimensionError);
}

TEST_CASE("head checkpoint round trip") {
  Rng rng(10);
  auto head = init_head(8, 6, 0.2, rng);
  sensbert::Checkpoint ck;
  add_head(ck, head);
  auto back = head_from_checkpoint(
      sensbert::deserialize_checkpoint(sensbert::serialize_checkpoint(ck)));
  CHECK(back.hidden == 6);
  CHECK(back.p_drop == 0.2);
  CHECK(sensbert::checksum(back.named()) == sensbert::checksum(head.named()));
}

TEST_CASE("mlr recovers noiseless linear coefficients exactly") {
  Rng rng(42);
  const std::size_t n = 200, p = 10;
  Matrix x = random_matrix(n, p, rng);
  std::vector<double> beta(p);
  for (auto &b : beta)
    b = rng.normal() * 3.0;
  const double intercept = -1.25;
  std::vector<double> y(n, intercept);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j)
      y[i] += x(i, j) * beta[j];
  MlrModel m = mlr_fit(x, y);
  CHECK_FALSE(m.ridge_fallback);
  for (std::size_t j = 0; j < p; ++j)
    CHECK(std::abs(m.coef[j] - beta[j]) < 1e-9);
  CHECK(std::abs(m.intercept - intercept) < 1e-9);
}

TEST_CASE("mlr residuals are orthogonal to the design") {
  Rng rng(43);
  const std::size_t n = 120, p = 4;
  Matrix x = random_matrix(n, p, rng);
  std::vector<double> y(n);
  for (auto &v : y)
    v = rng.normal();
  MlrModel m = mlr_fit(x, y);
  auto pred = mlr_predict(m, x);
  // Normal equations: X^T r = 0 and sum(r) = 0.
  double rsum = 0;
  for (std::size_t i = 0; i < n; ++i)
    rsum += y[i] - pred[i];
  CHECK(std::abs(rsum) < 1e-9);
  for (std::size_t j = 0; j < p; ++j) {
    double dot = 0;
    for (std::size_t i = 0; i < n; ++i)
      dot += x(i, j) * (y[i] - pred[i]);
    CHECK(std::abs(dot) < 1e-9);
  }
  // Cross-check against the normal-equation solution.
  Eigen::MatrixXd A(n, p + 1);
  Eigen::VectorXd b(n);
  for (std::size_t i = 0; i < n; ++i) {
    A(i, 0) = 1.0;
    for (std::size_t j = 0; j < p; ++j)
      A(i, j + 1) = x(i, j);
    b(i) = y[i];
  }
  Eigen::VectorXd sol = (A.transpose() * A).ldlt().solve(A.transpose() * b);
  CHECK(m.intercept == doctest::Approx(sol(0)).epsilon(1e-8));
  for (std::size_t j = 0; j < p; ++j)
    CHECK(m.coef[j] == doctest::Approx(sol(j + 1)).epsilon(1e-8));
}

TEST_CASE("mlr falls back to ridge on a rank-deficient design") {
  Rng rng(44);
  Matrix x = random_matrix(50, 3, rng);
  for (std::size_t i = 0; i < 50; ++i)
    x(i, 2) = 2.0 * x(i, 0);
  std::vector<double> y(50);
  for (std::size_t i = 0; i < 50; ++i)
    y[i] = x(i, 0) + x(i, 1);
  MlrModel m = mlr_fit(x, y);
  CHECK(m.ridge_fallback);
  auto pred = mlr_predict(m, x);
  for (std::size_t i = 0; i < 50; ++i)
    CHECK(pred[i] == doctest::Approx(y[i]).epsilon(1e-5));
  CHECK_THROWS_AS(mlr_fit(x, std::vector<double>(49, 0.0)), DimensionError);
}

TEST_CASE("flattened design is time-major with end-time targets") {
  Rng rng(45);
  auto ws = random_windows(3, 4, rng);
  Design d = flatten_windows(ws);
  CHECK(d.x.rows == 3);
  CHECK(d.x.cols == 12);
  CHECK(d.x(1, 5) == ws.window(1)[5]);
  CHECK(d.y == *ws.targets);
}

TEST_CASE("random forest is independent of the job count") {
  Rng rng(46);
  Matrix x = random_matrix(300, 5, rng);
  std::vector<double> y(300);
  for (std::size_t i = 0; i < 300; ++i)
    y[i] = std::sin(x(i, 0)) + 0.5 * x(i, 1) * x(i, 2);
  RfParams p;
  p.n_trees = 12;
  p.jobs = 1;
  auto serial = rf_predict(rf_fit(x, y, p), x);
  p.jobs = 4;
  auto parallel = rf_predict(rf_fit(x, y, p), x);
  CHECK(serial == parallel);
}

TEST_CASE("random forest structure respects depth and leaf limits") {
  Rng rng(47);
  Matrix x = random_matrix(400, 3, rng);
  std::vector<double> y(400);
  for (std::size_t i = 0; i < 400; ++i)
    y[i] = x(i, 0) > 0 ? 2.0 : -1.0;
  RfParams p;
  p.n_trees = 5;
  p.max_depth = 3;
  p.min_leaf = 10;
  p.bootstrap = false;
  p.max_features = 3;
  auto model = rf_fit(x, y, p);
  for (const auto &t : model.trees) {
    CHECK(t.depth() <= 3);
    for (const auto &node : t.nodes)
      if (node.feature < 0)
        CHECK(std::isfinite(node.value));
  }
  // A single clean threshold is learnt exactly without bootstrap.
  auto pred = rf_predict(model, x);
  for (std::size_t i = 0; i < 400; ++i)
    CHECK(pred[i] == doctest::Approx(y[i]));
  p.n_trees = 0;
  CHECK_THROWS_AS(p.validate(), ParameterError);
}

TEST_CASE("constant targets give a single-leaf tree") {
  Rng rng(48);
  Matrix x = random_matrix(50, 2, rng);
  std::vector<double> y(50, 3.5);
  RfParams p;
  p.n_trees = 3;
  auto model = rf_fit(x, y, p);
  for (const auto &t : model.trees)
    CHECK(t.nodes.size() == 1);
  CHECK(rf_predict(model, x)[7] == 3.5);
}
