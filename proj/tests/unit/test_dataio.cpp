// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "doctest.h"
#include "test_support.hpp"

#include "senscal/dataio/csv.hpp"
#include "senscal/dataio/frame.hpp"
#include "senscal/dataio/preprocess.hpp"
#include "senscal/dataio/synth.hpp"
#include "senscal/dataio/windows.hpp"
#include "senscal/error.hpp"

using namespace senscal;
using namespace senscal::dataio;

namespace {

/// Frame with x(i, k) = 10 i + k and y(i) = -i, one row per minute.
SensorFrame ramp_frame(std::size_t n, std::int64_t interval = 60) {
  SensorFrame f;
  f.variable_names = role_names();
  f.nominal_interval_s = interval;
  f.x = Matrix(n, 3);
  f.y.emplace(n);
  for (std::size_t i = 0; i < n; ++i) {
    f.timestamps.push_back(1000 + static_cast<std::int64_t>(i) * interval);
    for (std::size_t k = 0; k < 3; ++k)
      f.x(i, k) = 10.0 * static_cast<double>(i) + static_cast<double>(k);
    (*f.y)[i] = -static_cast<double>(i);
  }
  return f;
}

} // namespace

TEST_CASE("linear-interpolation quantiles") {
  const std::vector<double> v{4, 1, 3, 2};
  CHECK(quantile_linear(v, 0.25) == doctest::Approx(1.75));
  CHECK(quantile_linear(v, 0.5) == doctest::Approx(2.5));
  CHECK(quantile_linear(v, 0.0) == 1.0);
  CHECK(quantile_linear(v, 1.0) == 4.0);
  CHECK_THROWS_AS(quantile_linear(std::vector<double>{}, 0.5), DataError);
  CHECK_THROWS_AS(quantile_linear(v, 1.5), ParameterError);
}

TEST_CASE("iqr fence uses 1.5 interquartile ranges") {
  std::vector<double> v(8);
  std::iota(v.begin(), v.end(), 1.0);
  // q1 = 2.75, q3 = 6.25, iqr = 3.5
  const Fence f = iqr_fence(v);
  CHECK(f.lo == doctest::Approx(-2.5));
  CHECK(f.hi == doctest::Approx(11.5));
}

TEST_CASE("iqr filter drops a row flagged in any column, target included") {
  SensorFrame f = ramp_frame(40);
  f.x(5, 2) = 1e6;
  (*f.y)[17] = -1e6;
  SensorFrame out = iqr_filter(f);
  CHECK(out.size() == 38);
  CHECK(std::find(out.timestamps.begin(), out.timestamps.end(),
                  f.timestamps[5]) == out.timestamps.end());
  CHECK(std::find(out.timestamps.begin(), out.timestamps.end(),
                  f.timestamps[17]) == out.timestamps.end());
  // Survivors keep their order and values.
  CHECK(std::is_sorted(out.timestamps.begin(), out.timestamps.end()));
  CHECK(out.x(5, 0) == f.x(6, 0));
}

TEST_CASE("chronological split keeps the first floor(n * frac) rows") {
  SensorFrame f = ramp_frame(101);
  auto [train, test] = split_train_test(f, 0.9);
  CHECK(train.size() == 90);
  CHECK(test.size() == 11);
  CHECK(train.timestamps.back() < test.timestamps.front());
  CHECK(test.x(0, 0) == f.x(90, 0));
  CHECK_THROWS_AS(split_train_test(f, 1.0), ParameterError);
}

TEST_CASE("standardizer uses train statistics for every split") {
  SensorFrame f = ramp_frame(50);
  auto [train, test] = split_train_test(f, 0.8);
  const auto stats = fit_standardizer(train);
  // Independent population mean and std of column 0 over the train rows.
  double m = 0, v = 0;
  for (std::size_t i = 0; i < train.size(); ++i)
    m += train.x(i, 0) / static_cast<double>(train.size());
  for (std::size_t i = 0; i < train.size(); ++i)
    v += (train.x(i, 0) - m) * (train.x(i, 0) - m) /
         static_cast<double>(train.size());
  CHECK(stats.x_mean[0] == doctest::Approx(m));
  CHECK(stats.x_std[0] == doctest::Approx(std::sqrt(v)));
  REQUIRE(stats.y_mean);

  SensorFrame z = apply_standardizer(stats, test);
  CHECK(z.x(0, 0) == doctest::Approx((test.x(0, 0) - m) / std::sqrt(v)));
  SensorFrame back = invert_standardizer(stats, z);
  for (std::size_t i = 0; i < test.size(); ++i) {
    CHECK(back.x(i, 1) == doctest::Approx(test.x(i, 1)));
    CHECK((*back.y)[i] == doctest::Approx((*test.y)[i]));
  }

  SensorFrame flat = ramp_frame(10);
  for (std::size_t i = 0; i < 10; ++i)
    flat.x(i, 1) = 3.0;
  CHECK_THROWS_AS(fit_standardizer(flat), DataError);
}

TEST_CASE("timestamp parsing") {
  CHECK(parse_timestamp("2016-07-01T00:00:00Z") == 1467331200);
  CHECK(parse_timestamp("2016-07-01 00:01") == 1467331260);
  CHECK(parse_timestamp("2016-07-01") == 1467331200);
  CHECK(parse_timestamp("2016-07-01T02:00:00+02:00") == 1467331200);
  CHECK(parse_timestamp("2016-06-30T19:00:00-05:00") == 1467331200);
  CHECK(parse_timestamp("2016-07-01T00:00:00.750Z") == 1467331200);
  CHECK(parse_timestamp("1467331200") == 1467331200);
  CHECK(parse_timestamp("1970-01-01T00:00:00Z") == 0);
  CHECK(parse_timestamp("2000-02-29T12:00:00Z") == 951825600);
  CHECK_FALSE(parse_timestamp("yesterday"));
  CHECK_FALSE(parse_timestamp("2016-13-01"));
  CHECK_FALSE(parse_timestamp(""));
}

TEST_CASE("csv loading maps roles and drops unparseable rows") {
  const std::string text = "time,pm,temp,rh,ref\n"
                           "2016-07-01T00:00:00Z,10,20,50,9\n"
                           "2016-07-01T00:01:00Z,,20,50,9\n"
                           "2016-07-01T00:02:00Z,12,21,NaN-ish,9\n"
                           "2016-07-01T00:03:00Z,13,22,52,11\n";
  ColumnMap cols;
  cols.timestamp = "time";
  cols.signal = "pm";
  cols.temperature = "temp";
  cols.humidity = "rh";
  cols.reference = "ref";
  auto res = load_csv_text(text, cols);
  CHECK(res.dropped == 2);
  REQUIRE(res.frame.size() == 2);
  CHECK(res.frame.x(1, 0) == 13.0);
  CHECK(res.frame.x(1, 2) == 52.0);
  CHECK((*res.frame.y)[1] == 11.0);
  CHECK(res.frame.variable_names == std::vector<std::string>{"S", "T", "Rh"});

  cols.reference.reset();
  CHECK_FALSE(load_csv_text(text, cols).frame.y);

  cols.humidity = "missing";
  CHECK_THROWS_AS(load_csv_text(text, cols), DataError);
}

TEST_CASE("csv loading rejects non-increasing timestamps") {
  const std::string text = "timestamp,signal,temperature,humidity,reference\n"
                           "100,1,2,3,4\n"
                           "100,1,2,3,4\n";
  CHECK_THROWS_AS(load_csv_text(text, ColumnMap{}), DataError);
}

TEST_CASE("quoted csv fields") {
  auto t = parse_csv("a,\"b,c\",d\n1,\"x \"\"q\"\"\",3\n");
  REQUIRE(t.header.size() == 3);
  CHECK(t.header[1] == "b,c");
  CHECK(t.rows[0][1] == "x \"q\"");
  CHECK(csv_escape("p,q") == "\"p,q\"");
  CHECK_THROWS_AS(parse_csv("a\n\"open\n"), DataError);
}

TEST_CASE("csv text round trip is exact") {
  SyntheticConfig sc;
  sc.n_samples = 50;
  SensorFrame f = synth_generate(sc);
  auto back = load_csv_text(to_csv_text(f), ColumnMap{}).frame;
  CHECK(back.timestamps == f.timestamps);
  CHECK(back.x.values == f.x.values);
  CHECK(*back.y == *f.y);
  CHECK(back.nominal_interval_s == 60);
}

TEST_CASE("window count follows the stride formula") {
  for (std::size_t n : {16u, 17u, 50u, 200u})
    for (std::size_t M : {4u, 8u, 16u})
      for (std::size_t ov : {std::size_t{0}, M / 2, M - 1}) {
        if (n < M)
          continue;
        SensorFrame f = ramp_frame(n);
        WindowSet ws = make_windows(f, M, ov);
        const std::size_t stride = M - ov;
        CHECK(ws.count() == (n - M) / stride + 1);
      }
}

TEST_CASE("windows hold consecutive rows and end-time targets") {
  SensorFrame f = ramp_frame(30);
  WindowSet ws = make_windows(f, 5, 3);
  REQUIRE(ws.targets);
  for (std::size_t i = 0; i < ws.count(); ++i) {
    const std::size_t end = ws.end_index[i];
    CHECK(end == 4 + 2 * i);
    CHECK((*ws.targets)[i] == (*f.y)[end]);
    auto w = ws.window(i);
    for (std::size_t t = 0; t < 5; ++t)
      for (std::size_t k = 0; k < 3; ++k)
        CHECK(w[t * 3 + k] == f.x(end - 4 + t, k));
  }
  CHECK_THROWS_AS(make_windows(f, 5, 5), ParameterError);
  CHECK_THROWS_AS(make_windows(f, 31, 0), DataError);
}

TEST_CASE("windows never straddle a timestamp gap") {
  SensorFrame f = ramp_frame(40);
  for (std::size_t i = 20; i < 40; ++i)
    f.timestamps[i] += 3600;
  WindowSet ws = make_windows(f, 8, 7);
  // 13 windows end in rows 7..19 and 13 in rows 27..39.
  CHECK(ws.count() == 26);
  for (std::size_t end : ws.end_index)
    CHECK((end < 20 || end >= 27));
}

TEST_CASE("span mask meets its masked fraction with bounded spans") {
  numcore::Rng rng = numcore::Rng::substream(42, "mask-test");
  std::vector<std::uint8_t> mask(128);
  std::size_t total = 0;
  for (int i = 0; i < 1000; ++i) {
    auto spans = draw_span_mask(128, 0.2, 8, rng, mask);
    const auto masked =
        static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1));
    CHECK(masked >= 26); // ceil(0.2 * 128)
    total += masked;
    std::vector<std::uint8_t> from_spans(128, 0);
    for (const auto &s : spans) {
      CHECK(s.length >= 1);
      CHECK(s.length <= 8);
      CHECK(s.start + s.length <= 128);
      std::fill_n(from_spans.begin() + s.start, s.length, 1);
    }
    CHECK(from_spans == mask);
  }
  const double frac = static_cast<double>(total) / (1000.0 * 128.0);
  CHECK(frac >= 0.2);
  CHECK(frac <= 0.24);
}

TEST_CASE("applied masks zero whole timesteps") {
  SensorFrame f = ramp_frame(60);
  WindowSet ws = make_windows(f, 10, 9);
  numcore::Rng rng(1);
  auto mw = apply_span_mask(ws, 0.3, 3, rng);
  for (std::size_t i = 0; i < ws.count(); ++i) {
    auto orig = ws.window(i), masked = mw.masked.window(i);
    auto m = mw.plan.mask(i);
    for (std::size_t t = 0; t < 10; ++t)
      for (std::size_t k = 0; k < 3; ++k)
        CHECK(masked[t * 3 + k] == (m[t] ? 0.0 : orig[t * 3 + k]));
  }
  numcore::Rng again(1);
  CHECK(apply_span_mask(ws, 0.3, 3, again).plan.masks == mw.plan.masks);
  CHECK_THROWS_AS(validate_mask_params(10, 0.0, 3), ParameterError);
  CHECK_THROWS_AS(validate_mask_params(10, 0.2, 11), ParameterError);
}

TEST_CASE("window subsets and selections") {
  WindowSet ws = make_windows(ramp_frame(40), 4, 3);
  WindowSet sub = ws.subset(3, 5);
  CHECK(sub.count() == 5);
  CHECK(sub.end_index.front() == ws.end_index[3]);
  CHECK((*sub.targets)[4] == (*ws.targets)[7]);
  const std::vector<std::size_t> pos{9, 0};
  WindowSet sel = ws.select(pos);
  CHECK(sel.end_index == std::vector<std::size_t>{ws.end_index[9], ws.end_index[0]});
  CHECK(std::equal(sel.window(0).begin(), sel.window(0).end(),
                   ws.window(9).begin()));
}

TEST_CASE("synthetic data is seed-determined and humidity distorted") {
  SyntheticConfig sc;
  sc.n_samples = 3000;
  SensorFrame a = synth_generate(sc), b = synth_generate(sc);
  CHECK(a.x.values == b.x.values);
  CHECK(*a.y == *b.y);
  sc.seed = 11;
  CHECK(synth_generate(sc).x.values != a.x.values);

  CHECK(a.timestamps.front() == 1467331200);
  CHECK(a.timestamps[1] - a.timestamps[0] == 60);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.x(i, 2) >= 5.0);
    CHECK(a.x(i, 2) <= 98.0);
  }
  CHECK(humidity_response(0.0) == 0.0);
  CHECK(humidity_response(90.0) > humidity_response(50.0));

  // Without noise or drift the signal is exactly truth * distortion.
  SyntheticConfig clean;
  clean.n_samples = 200;
  clean.sensor_noise = 0.0;
  clean.temp_drift_gain = 0.0;
  SensorFrame c = synth_generate(clean);
  for (std::size_t i = 0; i < c.size(); ++i)
    CHECK(c.x(i, 0) ==
          doctest::Approx((*c.y)[i] *
                          (1.0 + 0.5 * humidity_response(c.x(i, 2)))));

  SyntheticConfig bad;
  bad.ar_coef = 1.0;
  CHECK_THROWS_AS(synth_generate(bad), ParameterError);
}
