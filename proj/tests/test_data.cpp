#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>

#include "cwgen/data.hpp"
#include "cwgen/errors.hpp"
#include "cwgen/jmce.hpp"

using namespace cwgen;
using namespace cwgen::data;

namespace {

std::filesystem::path write_temp(const std::string& name, const std::string& text) {
  const auto p = std::filesystem::temp_directory_path() / name;
  std::ofstream(p) << text;
  return p;
}

Series ramp(std::size_t d, std::size_t n) {
  Series s;
  s.values = Matrix(d, n);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t t = 0; t < n; ++t) s.values(i, t) = std::sin(0.1 * static_cast<double>(t * (i + 1))) + 0.01 * t;
  return s;
}

}  // namespace

TEST_CASE("white-noise configuration has identity covariance") {
  SyntheticConfig c;
  c.length = 20000;
  c.trend_slope = 0.0;
  c.season_amplitude = 0.0;
  c.noise_scale = 1.0;
  c.vol_amplitude = 0.0;
  c.var_coeff = {0.0};
  c.correlation = 0.0;
  const auto s = generate_synthetic(c, 1);
  const Matrix& x = s.series.values;
  for (std::size_t p = 0; p < 3; ++p) {
    for (std::size_t q = 0; q < 3; ++q) {
      double acc = 0.0;
      for (std::size_t t = 0; t < c.length; ++t) acc += x(p, t) * x(q, t);
      CHECK(std::abs(acc / static_cast<double>(c.length) - (p == q ? 1.0 : 0.0)) < 0.05);
    }
  }
  // Sliding-window targets over a long block of white noise average to I.
  const auto cov = jmce::sliding_window_cov(x, 15).cov;
  for (std::size_t p = 0; p < 3; ++p) {
    double mean = 0.0;
    for (const auto& m : cov) mean += m(p, p);
    CHECK(std::abs(mean / static_cast<double>(cov.size()) * 15.0 / 14.0 - 1.0) < 0.05);
  }
}

TEST_CASE("noise-free single channel is an exact sine") {
  SyntheticConfig c;
  c.dim = 1;
  c.length = 200;
  c.trend_slope = 0.0;
  c.season_amplitude = 1.5;
  c.noise_scale = 0.0;
  const auto s = generate_synthetic(c, 3);
  for (std::size_t t = 0; t < c.length; ++t) {
    const double expect = 1.5 * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / 24.0);
    CHECK(s.series.values(0, t) == expect);
  }
}

TEST_CASE("lag-1 autocorrelation of the noise matches the VAR coefficient") {
  SyntheticConfig c;
  c.length = 20000;
  const auto s = generate_synthetic(c, 5);
  for (std::size_t i = 0; i < c.dim; ++i) {
    double num = 0.0, den = 0.0;
    for (std::size_t t = 1; t < c.length; ++t) {
      num += s.noise(i, t) * s.noise(i, t - 1);
      den += s.noise(i, t - 1) * s.noise(i, t - 1);
    }
    CHECK(std::abs(num / den - 0.5) < 0.05);
  }
}

TEST_CASE("generator rejects unstable or invalid settings") {
  SyntheticConfig c;
  c.var_coeff = {1.0};
  CHECK_THROWS_AS(generate_synthetic(c, 0), ContractViolation);
  c.var_coeff = {0.5, 0.2};
  CHECK_THROWS_AS(generate_synthetic(c, 0), ContractViolation);
  c.var_coeff = {0.5};
  c.vol_amplitude = 1.0;
  CHECK_THROWS_AS(generate_synthetic(c, 0), ContractViolation);
  c.vol_amplitude = 0.5;
  c.correlation = -0.6;
  CHECK_THROWS_AS(generate_synthetic(c, 0), ContractViolation);
  c.correlation = 0.3;
  c.length = 0;
  CHECK_THROWS_AS(generate_synthetic(c, 0), ContractViolation);
}

TEST_CASE("generation is deterministic in the seed") {
  SyntheticConfig c;
  c.length = 300;
  CHECK(generate_synthetic(c, 4).series.values == generate_synthetic(c, 4).series.values);
  CHECK_FALSE(generate_synthetic(c, 4).series.values == generate_synthetic(c, 5).series.values);
}

TEST_CASE("ground-truth conditional moments match Monte Carlo continuations") {
  // Re-simulate the noise forward from a fixed state and compare moments.
  SyntheticConfig c;
  c.length = 100;
  const auto s = generate_synthetic(c, 8);
  const std::size_t last = 40, h = 4;
  const Matrix mu = true_conditional_mean(s, last, h);
  const auto cov = true_conditional_cov(s, last, h);
  const Matrix k = linalg::cholesky(s.innovation_corr);
  std::mt19937_64 rng(99);
  std::normal_distribution<double> normal;
  const int n = 40000;
  Matrix sum(3, h), sum2(3, 3);
  std::vector<double> xi(3);
  for (int r = 0; r < n; ++r) {
    std::vector<double> state = s.noise.column(last);
    for (std::size_t j = 1; j <= h; ++j) {
      for (double& v : xi) v = normal(rng);
      const auto eta = k * std::span<const double>(xi);
      for (std::size_t i = 0; i < 3; ++i) state[i] = s.var_coeff[i] * state[i] + s.scale[last + j] * eta[i];
      for (std::size_t i = 0; i < 3; ++i) sum(i, j - 1) += s.deterministic(i, last + j) + state[i];
    }
    for (std::size_t p = 0; p < 3; ++p)
      for (std::size_t q = 0; q < 3; ++q)
        sum2(p, q) += (state[p] - (mu(p, h - 1) - s.deterministic(p, last + h))) *
                      (state[q] - (mu(q, h - 1) - s.deterministic(q, last + h)));
  }
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < h; ++j) {
      const double se = std::sqrt(cov[j](i, i) / n);
      CHECK(std::abs(sum(i, j) / n - mu(i, j)) < 4.0 * se);
    }
  }
  for (std::size_t p = 0; p < 3; ++p)
    for (std::size_t q = 0; q < 3; ++q) CHECK(std::abs(sum2(p, q) / n - cov[h - 1](p, q)) < 0.02);
}

TEST_CASE("expected sliding-window covariance matches Monte Carlo within 3 sigma") {
  SyntheticConfig c;
  c.length = 60;
  const std::size_t first = 30, h = 12, w = 15;
  const auto ref = generate_synthetic(c, 0);
  const auto expect = expected_sliding_window_cov(ref, first, h, w);
  const int n = 2000;
  const std::size_t steps[] = {0, 6, 11};
  double sum[3][3][3] = {}, sum2[3][3][3] = {};
  for (int r = 0; r < n; ++r) {
    const auto s = generate_synthetic(c, 1000 + static_cast<std::uint64_t>(r));
    Matrix block(3, h);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t t = 0; t < h; ++t) block(i, t) = s.noise(i, first + t);
    const auto got = jmce::sliding_window_cov(block, w).cov;
    for (int k = 0; k < 3; ++k)
      for (std::size_t p = 0; p < 3; ++p)
        for (std::size_t q = 0; q < 3; ++q) {
          const double v = got[steps[k]](p, q);
          sum[k][p][q] += v;
          sum2[k][p][q] += v * v;
        }
  }
  for (int k = 0; k < 3; ++k)
    for (std::size_t p = 0; p < 3; ++p)
      for (std::size_t q = 0; q < 3; ++q) {
        const double m = sum[k][p][q] / n;
        const double se = std::sqrt((sum2[k][p][q] / n - m * m) / n);
        CHECK(std::abs(m - expect[steps[k]](p, q)) <= 3.0 * se);
      }
}

TEST_CASE("csv loading") {
  SUBCASE("three columns, ten rows") {
    std::string text = "a,b,c\n";
    for (int t = 0; t < 10; ++t) text += std::to_string(t) + "," + std::to_string(2 * t) + ",-1.5e-3\n";
    const Series s = load_csv(write_temp("cw_ok.csv", text));
    CHECK(s.dim() == 3);
    CHECK(s.length() == 10);
    CHECK(s.values(1, 4) == 8.0);
    CHECK(s.names == std::vector<std::string>{"a", "b", "c"});
  }
  SUBCASE("timestamp column is dropped") {
    const std::string text =
        "date,HUFL,HULL,MUFL,MULL,LUFL,LULL,OT\n"
        "2016-07-01 00:00:00,5.827,2.009,1.599,0.462,4.203,1.340,30.531\n"
        "2016-07-01 01:00:00,5.693,2.076,1.492,0.426,4.142,1.371,27.787\n";
    const Series s = load_csv(write_temp("cw_ett.csv", text), CsvSchema{true});
    CHECK(s.dim() == 7);
    CHECK(s.length() == 2);
    CHECK(s.values(6, 1) == 27.787);
  }
  SUBCASE("header only") {
    CHECK_THROWS_AS(load_csv(write_temp("cw_hdr.csv", "a,b\n")), DataError);
  }
  SUBCASE("empty file") {
    CHECK_THROWS_AS(load_csv(write_temp("cw_empty.csv", "")), DataError);
  }
  SUBCASE("ragged row names its line") {
    try {
      load_csv(write_temp("cw_ragged.csv", "a,b\n1,2\n3\n"));
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
  }
  SUBCASE("non-numeric cell names its line and column") {
    try {
      load_csv(write_temp("cw_nan.csv", "a,b\n1,2\n3,x7\n"));
      FAIL("expected DataError");
    } catch (const DataError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("line 3") != std::string::npos);
      CHECK(msg.find("'b'") != std::string::npos);
    }
  }
  SUBCASE("write then load round trip") {
    Series s = ramp(2, 30);
    s.names = {"u", "v"};
    const auto p = std::filesystem::temp_directory_path() / "cw_rt.csv";
    write_csv(p, s);
    CHECK(load_csv(p).values == s.values);
  }
}

TEST_CASE("split lengths") {
  SplitSpec spec;
  spec.ratios = {3.0, 1.0, 1.0};
  auto s = split_and_normalize(ramp(2, 500), spec);
  CHECK(s.train.length() == 300);
  CHECK(s.val.length() == 100);
  CHECK(s.test.length() == 100);
  spec.ratios = {7.0, 1.0, 2.0};
  s = split_and_normalize(ramp(2, 1000), spec);
  CHECK(s.train.length() == 700);
  CHECK(s.val.length() == 100);
  CHECK(s.test.length() == 200);
}

TEST_CASE("splits are chronological and normalized with train statistics only") {
  const Series raw = ramp(3, 1000);
  const auto s = split_and_normalize(raw, SplitSpec{});
  CHECK(s.train.offset == 0);
  CHECK(s.train.offset + s.train.length() - 1 < s.val.offset);
  CHECK(s.val.offset + s.val.length() - 1 < s.test.offset);
  for (std::size_t i = 0; i < 3; ++i) {
    double m = 0.0;
    for (std::size_t t = 0; t < 700; ++t) m += raw.values(i, t);
    m /= 700.0;
    double v = 0.0;
    for (std::size_t t = 0; t < 700; ++t) v += (raw.values(i, t) - m) * (raw.values(i, t) - m);
    v /= 700.0;
    CHECK(s.train.mean[i] == m);
    CHECK(s.train.std[i] == std::sqrt(v));
    CHECK(s.test.mean[i] == m);
    CHECK(s.test.values(i, 5) == (raw.values(i, 805) - m) / std::sqrt(v));
  }
  // The trend makes the later splits sit above zero.
  CHECK(s.test.values(0, 0) > 0.0);
}

TEST_CASE("split errors") {
  Series constant = ramp(2, 500);
  for (std::size_t t = 0; t < 500; ++t) constant.values(1, t) = 4.0;
  CHECK_THROWS_AS(split_and_normalize(constant, SplitSpec{}), DataError);
  CHECK_THROWS_AS(split_and_normalize(ramp(2, 150), SplitSpec{}), DataError);
}

TEST_CASE("window counts") {
  CHECK(make_windows(ramp(1, 360), 168, 192, WindowMode::kEvaluation).size() == 1);
  CHECK(make_windows(ramp(1, 72), 24, 12, WindowMode::kEvaluation).size() == 2);
  CHECK(make_windows(ramp(1, 100), 24, 12, WindowMode::kTraining).size() == 65);
  CHECK(make_windows(ramp(1, 107), 24, 12, WindowMode::kEvaluation).size() == 2);
  CHECK_THROWS_AS(make_windows(ramp(1, 30), 24, 12, WindowMode::kTraining), DataError);
}

TEST_CASE("windows pair a history with the immediately following future") {
  Series s = ramp(2, 100);
  s.offset = 500;
  const auto w = make_windows(s, 24, 12, WindowMode::kEvaluation);
  REQUIRE(w.size() == 2);
  CHECK(w[1].start == 536);
  CHECK(w[1].history(1, 0) == s.values(1, 36));
  CHECK(w[1].history(1, 23) == s.values(1, 59));
  CHECK(w[1].future(0, 0) == s.values(0, 60));
  CHECK(w[1].future(0, 11) == s.values(0, 71));
}

TEST_CASE("level shift and time-major layout") {
  Series s = ramp(2, 10);
  const Matrix before = s.values;
  apply_level_shift(s, 1.0);
  CHECK(s.values(1, 3) == before(1, 3) + 1.0);
  const auto flat = to_time_major(before);
  CHECK(flat[3 * 2 + 1] == before(1, 3));
  CHECK(from_time_major(flat, 2, 10) == before);
}
