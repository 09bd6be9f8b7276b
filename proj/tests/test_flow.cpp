#include "doctest.h"

#include <cmath>
#include <random>

#include "cwgen/errors.hpp"
#include "cwgen/flow.hpp"
#include "cwgen/generative.hpp"
#include "cwgen/whitening.hpp"
#include "support.hpp"

using namespace cwgen;
using namespace cwgen::flow;
using generative::GenConfig;
using generative::GenModel;
using nn::Tensor;

namespace {

GenConfig toy_config(generative::Variant v) {
  GenConfig c;
  c.kind = generative::Kind::kFlow;
  c.variant = v;
  c.dim = 2;
  c.history = 4;
  c.horizon = 3;
  c.hidden = 6;
  c.projection = 4;
  c.width = 8;
  c.epochs = 2;
  c.batch = 8;
  c.seed = 23;
  return c;
}

Tensor normal_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  Tensor t = Tensor::matrix(r, c);
  std::normal_distribution<double> n;
  for (double& v : t.storage()) v = n(rng);
  return t;
}

// E[eps - x0 | x_tau] on the linear path from N(m, s^2) data to N(0, 1).
VectorField gaussian_field(double m, double s) {
  return [=](const Tensor& x, double tau) {
    const double var = (1.0 - tau) * (1.0 - tau) * s * s + tau * tau;
    const double k = (tau - (1.0 - tau) * s * s) / var;
    Tensor out = x;
    for (double& v : out.storage()) v = -m + k * (v - (1.0 - tau) * m);
    return out;
  };
}

}  // namespace

TEST_CASE("interpolant endpoints are exact") {
  std::mt19937_64 rng(1);
  for (int k = 0; k < 100; ++k) {
    const Matrix x0 = test::random_matrix(3, 4, rng), eps = test::random_matrix(3, 4, rng);
    CHECK(interpolant(x0, eps, 0.0) == x0);
    CHECK(interpolant(x0, eps, 1.0) == eps);
    const Matrix mid = interpolant(x0, eps, 0.25);
    CHECK(mid(1, 2) == doctest::Approx(0.75 * x0(1, 2) + 0.25 * eps(1, 2)).epsilon(1e-14));
  }
  CHECK_THROWS_AS(interpolant(Matrix(2, 2), Matrix(2, 3), 0.5), ContractViolation);
}

TEST_CASE("flow matching objective") {
  std::mt19937_64 rng(2);
  const Matrix x0 = test::random_matrix(2, 3, rng), eps = test::random_matrix(2, 3, rng);
  CHECK(fm_objective(eps - x0, x0, eps) == 0.0);
  double sq = 0.0;
  for (std::size_t i = 0; i < 6; ++i) sq += std::pow(eps.data()[i] - x0.data()[i], 2);
  CHECK(fm_objective(Matrix(2, 3), x0, eps) == doctest::Approx(sq).epsilon(1e-14));

  const Tensor tx = normal_tensor(4, 5, rng), te = normal_tensor(4, 5, rng), tv = normal_tensor(4, 5, rng);
  double expect = 0.0;
  for (std::size_t r = 0; r < 4; ++r) {
    Matrix v(1, 5), a(1, 5), e(1, 5);
    for (std::size_t c = 0; c < 5; ++c) {
      v(0, c) = tv.at(r, c);
      a(0, c) = tx.at(r, c);
      e(0, c) = te.at(r, c);
    }
    expect += fm_objective(v, a, e) / 4.0;
  }
  nn::Graph g;
  CHECK(fm_loss(g, g.constant(tv), tx, te).value()[0] == doctest::Approx(expect).epsilon(1e-13));
  CHECK_THROWS_AS(fm_loss(g, g.constant(tv), normal_tensor(4, 4, rng), te), ContractViolation);
}

TEST_CASE("zero field returns the terminal draw") {
  std::mt19937_64 rng(3);
  const Tensor term = normal_tensor(6, 4, rng);
  const VectorField zero = [](const Tensor& x, double) { return Tensor(x.shape(), 0.0); };
  CHECK(fm_sample(zero, term, FlowConfig{}) == term);
}

TEST_CASE("zero field preserves the cw terminal distribution") {
  std::mt19937_64 rng(4);
  jmce::JmceOutput prior{Matrix::from_rows({{0.5}, {-1.0}}), {Matrix::from_rows({{1.2, 0.0}, {0.6, 0.4}})}};
  const int m = 10000;
  Tensor term = Tensor::matrix(m, 2);
  for (int r = 0; r < m; ++r) {
    const Matrix x = whitening::sample_cw_noise(prior.mean, prior, rng);
    term.at(r, 0) = x(0, 0);
    term.at(r, 1) = x(1, 0);
  }
  const VectorField zero = [](const Tensor& x, double) { return Tensor(x.shape(), 0.0); };
  const Tensor out = fm_sample(zero, term, FlowConfig{});
  const Matrix cov = prior.covariance(0);
  for (std::size_t i = 0; i < 2; ++i) {
    double mean = 0.0, var = 0.0;
    for (int r = 0; r < m; ++r) mean += out.at(r, i) / m;
    for (int r = 0; r < m; ++r) var += std::pow(out.at(r, i) - mean, 2) / m;
    CHECK(std::abs(mean - prior.mean(i, 0)) < 3.0 * std::sqrt(cov(i, i) / m));
    CHECK(std::abs(var - cov(i, i)) < 3.0 * cov(i, i) * std::sqrt(2.0 / m));
  }
}

TEST_CASE("exact field of a point mass is integrated exactly") {
  std::mt19937_64 rng(5);
  const Tensor target = normal_tensor(1, 6, rng);
  const VectorField f = [&](const Tensor& x, double tau) {
    Tensor v = x;
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = (x[i] - target[i]) / tau;
    return v;
  };
  const Tensor eps = normal_tensor(1, 6, rng);
  FlowConfig cfg;
  const Tensor out = fm_sample(f, eps, cfg);
  for (std::size_t i = 0; i < 6; ++i) CHECK(std::abs(out[i] - (target[i] + cfg.tau_min * (eps[i] - target[i]))) < 1e-10);
}

TEST_CASE("step halving converges monotonically") {
  std::mt19937_64 rng(6);
  const Tensor term = normal_tensor(2000, 1, rng);
  const auto f = gaussian_field(1.5, 0.3);
  auto run = [&](std::size_t n) {
    FlowConfig c;
    c.n_steps = n;
    return fm_sample(f, term, c);
  };
  std::vector<Tensor> outs;
  for (std::size_t n : {10, 20, 40, 80}) outs.push_back(run(n));
  double prev = 1e300;
  for (std::size_t k = 0; k + 1 < outs.size(); ++k) {
    double d = 0.0;
    for (std::size_t i = 0; i < term.size(); ++i) d += std::abs(outs[k][i] - outs[k + 1][i]) / term.size();
    CHECK(d < prev);
    prev = d;
  }
  double mean = 0.0;
  for (double v : outs.back().data()) mean += v / term.size();
  CHECK(std::abs(mean - 1.5) < 0.05);
}

TEST_CASE("sampler configuration and divergence checks") {
  CHECK_THROWS_AS((FlowConfig{1, 1e-3}.validate()), ContractViolation);
  CHECK_THROWS_AS((FlowConfig{50, 1.0}.validate()), ContractViolation);
  const VectorField blowup = [](const Tensor& x, double) {
    Tensor v = x;
    for (double& e : v.storage()) e *= -1e10;
    return v;
  };
  CHECK_THROWS_AS(fm_sample(blowup, Tensor::matrix(1, 2, 1.0), FlowConfig{}), NumericError);
}

TEST_CASE("state skip gain is the Gaussian-optimal linear coefficient") {
  const GenConfig c = toy_config(generative::Variant::kRaw);
  for (double tau : {0.0, 0.2, 0.5, 0.9, 1.0}) {
    // Regression slope of eps - x0 on x_tau when x0 and eps are iid N(0, 1).
    const double slope = (tau - (1.0 - tau)) / ((1.0 - tau) * (1.0 - tau) + tau * tau);
    CHECK(c.state_gain(tau) == doctest::Approx(slope).epsilon(1e-14));
  }
}

TEST_CASE("a small network overfits a fixed toy set") {
  const auto windows = test::toy_windows(2, 4, 3, 400, 5);
  GenModel model(toy_config(generative::Variant::kRaw));
  std::mt19937_64 rng(7);
  const std::size_t b = 16, n = 6;
  Tensor hist = Tensor::matrix(b, 8), state = Tensor::matrix(b, n), x0 = Tensor::matrix(b, n);
  const Tensor eps = normal_tensor(b, n, rng);
  std::vector<double> tau(b);
  std::uniform_real_distribution<double> u;
  for (std::size_t r = 0; r < b; ++r) {
    const auto h = data::to_time_major(windows[r * 7].history);
    const auto f = data::to_time_major(windows[r * 7].future);
    tau[r] = u(rng);
    std::copy(h.begin(), h.end(), hist.data().begin() + static_cast<long>(r * 8));
    for (std::size_t i = 0; i < n; ++i) {
      x0.at(r, i) = f[i];
      state.at(r, i) = f[i] + tau[r] * (eps.at(r, i) - f[i]);
    }
  }
  auto loss = [&](nn::Graph& g) { return fm_loss(g, model.forward(g, hist, 1, state, tau), x0, eps); };
  double first = 0.0, last = 0.0;
  nn::AdamConfig adam;
  adam.lr = 3e-3;
  for (int step = 0; step < 200; ++step) {
    model.params().zero_grad();
    nn::Graph g;
    const nn::Var l = loss(g);
    if (step == 0) first = l.value()[0];
    g.backward(l);
    nn::adam_step(model.params(), adam);
  }
  {
    nn::Graph g;
    last = loss(g).value()[0];
  }
  MESSAGE("toy loss " << first << " -> " << last);
  CHECK(last <= 0.5 * first);
}

TEST_CASE("identity prior reproduces raw flow matching bit for bit") {
  const auto train = test::toy_windows(2, 4, 3, 300, 8);
  const auto val = test::toy_windows(2, 4, 3, 300, 9);
  const generative::IdentityPrior ident(2, 3);
  const auto raw = generative::train_generative(train, val, toy_config(generative::Variant::kRaw), nullptr);
  const auto cw = generative::train_generative(train, val, toy_config(generative::Variant::kCw), &ident);
  CHECK(raw.step_losses == cw.step_losses);
  CHECK(raw.val_losses == cw.val_losses);
  for (std::size_t i = 0; i < raw.model.params().size(); ++i)
    CHECK(raw.model.params().at(i).value == cw.model.params().at(i).value);
  const std::span<const data::TimeSeriesWindow> some(val.data(), 3);
  const auto sr = generative::sample(raw.model, some, nullptr, 5, 11);
  const auto sc = generative::sample(cw.model, some, &ident, 5, 11);
  for (std::size_t w = 0; w < 3; ++w)
    for (std::size_t j = 0; j < 5; ++j) CHECK(sr[w].members[j] == sc[w].members[j]);
}

TEST_CASE("ensembles are seeded per window and member") {
  const auto windows = test::toy_windows(2, 4, 3, 300, 8);
  const GenModel m(toy_config(generative::Variant::kRaw));
  const std::span<const data::TimeSeriesWindow> two(windows.data(), 2);
  const auto a = generative::sample(m, two, nullptr, 6, 42);
  const auto b = generative::sample(m, two, nullptr, 6, 42);
  const auto c = generative::sample(m, two, nullptr, 3, 42);
  REQUIRE(a.size() == 2);
  CHECK(a[0].size() == 6);
  CHECK(a[1].model_id == "flow_raw");
  CHECK(a[0].sampler_steps == 50);
  for (std::size_t j = 0; j < 6; ++j) CHECK(a[1].members[j] == b[1].members[j]);
  for (std::size_t j = 0; j < 3; ++j) CHECK(a[1].members[j] == c[1].members[j]);
  CHECK_FALSE(a[0].members[0] == a[1].members[0]);
  CHECK_FALSE(a[0].members[0] == a[0].members[1]);
  CHECK(generative::window_seed(42, 1) != generative::window_seed(42, 0));
}

TEST_CASE("kind and variant names") {
  CHECK(generative::parse_kind("diff") == generative::Kind::kDiffusion);
  CHECK(generative::parse_kind("flow") == generative::Kind::kFlow);
  CHECK(generative::parse_variant("cw") == generative::Variant::kCw);
  CHECK_THROWS_AS(generative::parse_kind("gan"), ContractViolation);
  CHECK_THROWS_AS(generative::parse_variant("whitened"), ContractViolation);
  CHECK(toy_config(generative::Variant::kCw).id() == "flow_cw");
}
