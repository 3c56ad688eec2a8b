// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "doctest.h"
#include "grad_suite.hpp"
#include "test_support.hpp"

#include "senscal/error.hpp"
#include "senscal/numcore/adam.hpp"
#include "senscal/numcore/gradcheck.hpp"
#include "senscal/numcore/ops.hpp"
#include "senscal/numcore/rng.hpp"
#include "senscal/numcore/tensor.hpp"

using namespace senscal;
using numcore::Rng;
using numcore::Tensor;
namespace nc = senscal::numcore;

TEST_CASE("rng streams are reproducible and tag separated") {
  Rng a(123), b(123), c(124);
  for (int i = 0; i < 8; ++i) {
    const auto va = a.next_u64();
    CHECK(va == b.next_u64());
    CHECK(va != c.next_u64());
  }
  Rng s1 = Rng::substream(42, "alpha", 0);
  Rng s2 = Rng::substream(42, "alpha", 0);
  Rng s3 = Rng::substream(42, "alpha", 1);
  Rng s4 = Rng::substream(42, "beta", 0);
  const auto v1 = s1.next_u64();
  CHECK(v1 == s2.next_u64());
  CHECK(v1 != s3.next_u64());
  CHECK(v1 != s4.next_u64());
}

TEST_CASE("rng uniform and normal moments") {
  Rng rng(9);
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    su += u;
    const double z = rng.normal();
    sn += z;
    sn2 += z * z;
  }
  CHECK(su / n == doctest::Approx(0.5).epsilon(0.01));
  CHECK(std::abs(sn / n) < 0.01);
  CHECK(sn2 / n == doctest::Approx(1.0).epsilon(0.02));

  std::vector<int> hits(7, 0);
  for (int i = 0; i < 70000; ++i)
    ++hits[rng.uniform_index(7)];
  for (int h : hits)
    CHECK(std::abs(h - 10000) < 500);
}

TEST_CASE("fnv1a matches published 64-bit vectors") {
  CHECK(nc::fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(nc::fnv1a("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(nc::fnv1a("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("tensor construction validates extents") {
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1.0, 2.0, 3.0}), DimensionError);
  Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t.at(1, 2) == 6.0);
  CHECK(Tensor::scalar(2.5).item() == 2.5);
}

TEST_CASE("matmul against hand-computed product") {
  Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b = Tensor::from({3, 2}, {7, 8, 9, 10, 11, 12});
  Tensor c = nc::matmul(a, b);
  const std::vector<double> expect{58, 64, 139, 154};
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(c.data()[i] == expect[i]);
  Tensor ct = nc::matmul_nt(a, nc::transpose(b));
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(ct.data()[i] == expect[i]);
  CHECK_THROWS_AS(nc::matmul(a, a), DimensionError);
}

TEST_CASE("gelu uses the exact erf form") {
  Tensor x = Tensor::from({1, 4}, {-2.0, -0.5, 1.0, 3.0});
  Tensor y = nc::gelu(x);
  for (std::size_t i = 0; i < 4; ++i) {
    const double v = x.data()[i];
    CHECK(y.data()[i] ==
          doctest::Approx(0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))))
              .epsilon(1e-14));
  }
  CHECK(nc::gelu(Tensor::from({1, 1}, {1.0})).item() ==
        doctest::Approx(0.8413447460685429).epsilon(1e-14));
}

TEST_CASE("softmax rows sum to one and ignore row shifts") {
  Rng rng(3);
  Tensor x = testing::random_tensor({4, 5}, rng, 3.0, false);
  std::vector<double> shifted(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 5; ++j)
      shifted[i * 5 + j] += 100.0 * static_cast<double>(i + 1);
  Tensor a = nc::softmax_rows(x);
  Tensor b = nc::softmax_rows(Tensor::from({4, 5}, shifted));
  for (std::size_t i = 0; i < 4; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < 5; ++j) {
      s += a.at(i, j);
      CHECK(a.at(i, j) == doctest::Approx(b.at(i, j)).epsilon(1e-12));
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("layer norm rows have zero mean and near-unit variance") {
  Rng rng(5);
  const double eps = 1e-6;
  Tensor x = testing::random_tensor({3, 6}, rng, 2.0, false);
  Tensor g = Tensor::full({6}, 1.0), b = Tensor::zeros({6});
  Tensor y = nc::layer_norm(x, g, b, eps);
  for (std::size_t i = 0; i < 3; ++i) {
    double mx = 0, vx = 0, my = 0, vy = 0;
    for (std::size_t j = 0; j < 6; ++j) {
      mx += x.at(i, j) / 6;
      my += y.at(i, j) / 6;
    }
    for (std::size_t j = 0; j < 6; ++j) {
      vx += (x.at(i, j) - mx) * (x.at(i, j) - mx) / 6;
      vy += (y.at(i, j) - my) * (y.at(i, j) - my) / 6;
    }
    CHECK(std::abs(my) < 1e-12);
    CHECK(vy == doctest::Approx(vx / (vx + eps)).epsilon(1e-10));
  }
}

TEST_CASE("dropout is identity at inference and rescales kept units") {
  Rng rng(11);
  Tensor x = Tensor::full({100, 100}, 1.0);
  CHECK(nc::dropout(x, 0.4, rng, false).node() == x.node());
  Tensor y = nc::dropout(x, 0.4, rng, true);
  std::size_t zeros = 0;
  for (double v : y.data()) {
    if (v == 0.0)
      ++zeros;
    else
      CHECK(v == doctest::Approx(1.0 / 0.6));
  }
  CHECK(static_cast<double>(zeros) / 1e4 == doctest::Approx(0.4).epsilon(0.05));
  CHECK_THROWS_AS(nc::dropout(x, 1.0, rng, true), ParameterError);
}

TEST_CASE("backward accumulates across shared subgraphs") {
  Tensor x = Tensor::from({1, 3}, {1.0, -2.0, 0.5}, true);
  // f = sum(x*x + 3x): df/dx = 2x + 3.
  Tensor f = nc::sum(nc::add(nc::mul(x, x), nc::scale(x, 3.0)));
  f.backward();
  CHECK(x.grad()[0] == doctest::Approx(5.0));
  CHECK(x.grad()[1] == doctest::Approx(-1.0));
  CHECK(x.grad()[2] == doctest::Approx(4.0));
}

TEST_CASE("no-grad guard produces detached results") {
  Tensor x = Tensor::from({1, 2}, {1.0, 2.0}, true);
  {
    nc::NoGradGuard guard;
    CHECK(nc::NoGradGuard::active());
    Tensor y = nc::mul(x, x);
    CHECK_FALSE(y.requires_grad());
  }
  CHECK_FALSE(nc::NoGradGuard::active());
  CHECK(nc::mul(x, x).requires_grad());
}

TEST_CASE("adam first step moves each weight by lr against the gradient sign") {
  // After one step the bias-corrected moments are g and g^2, so the update is
  // lr * g / (|g| + eps).
  Tensor p = Tensor::from({1, 3}, {0.5, -1.0, 2.0}, true);
  const std::vector<double> g{0.3, -4.0, 1e-3};
  auto grad = p.mutable_grad();
  std::copy(g.begin(), g.end(), grad.begin());
  std::vector<Tensor> params{p};
  auto state = nc::make_adam(params);
  nc::adam_step(params, state);
  const std::vector<double> start{0.5, -1.0, 2.0};
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(p.data()[i] ==
          doctest::Approx(start[i] - 1e-3 * g[i] / (std::abs(g[i]) + 1e-8))
              .epsilon(1e-12));
  CHECK(state.step == 1);
  CHECK(p.grad()[0] == 0.0);
}

TEST_CASE("adam minimises a convex quadratic") {
  Tensor p = Tensor::from({1, 2}, {3.0, -2.0}, true);
  Tensor target = Tensor::from({1, 2}, {1.0, 1.0});
  std::vector<Tensor> params{p};
  auto state = nc::make_adam(params, 0.05);
  for (int i = 0; i < 2000; ++i) {
    nc::mse(p, target).backward();
    nc::adam_step(params, state);
  }
  CHECK(p.data()[0] == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(p.data()[1] == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("every primitive passes the finite-difference check") {
  for (const auto &c : testing::grad::primitive_cases()) {
    for (std::uint64_t i = 0; i < 5; ++i) {
      Rng rng = Rng::substream(17, c.name, i);
      const double err = c.run(rng);
      INFO(c.name << " instance " << i << " rel err " << err);
      CHECK(err < 1e-3);
    }
  }
}

TEST_CASE("gradient check flags a wrong backward") {
  // A primitive whose backward is off by a factor must be caught.
  Tensor x = Tensor::from({1, 2}, {0.7, -0.3}, true);
  auto broken = [&] {
    Tensor y = Tensor::make_result(
        {}, {x.data()[0] * x.data()[0] + x.data()[1]}, {x},
        [](nc::Node &self) {
          auto &gx = self.parents[0]->ensure_grad();
          gx[0] += self.grad[0] * 3.0 * self.parents[0]->data[0];
          gx[1] += self.grad[0];
        },
        "broken");
    return y;
  };
  CHECK(nc::finite_diff_check(broken, {x}) > 0.1);
}
