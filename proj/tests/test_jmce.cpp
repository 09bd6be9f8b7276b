#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <random>

#include "cwgen/data.hpp"
#include "cwgen/errors.hpp"
#include "cwgen/jmce.hpp"
#include "support.hpp"

using namespace cwgen;
using namespace cwgen::jmce;
using linalg::Matrix;

namespace {

Matrix with_spectrum(const std::vector<double>& values, std::mt19937_64& rng) {
  const auto q = linalg::sym_eigen(test::random_symmetric(values.size(), rng)).vectors;
  return linalg::symmetrize(q * Matrix::diagonal(values) * q.transpose());
}

JmceOutput random_output(std::size_t d, std::size_t tf, std::mt19937_64& rng) {
  JmceOutput o{test::random_matrix(d, tf, rng), {}};
  for (std::size_t t = 0; t < tf; ++t) {
    Matrix l = test::random_matrix(d, d, rng);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = i + 1; j < d; ++j) l(i, j) = 0.0;
    o.factors.push_back(l);
  }
  return o;
}

// Straight-line recomputation of the window loss from eigenvalues.
LossBreakdown oracle_loss(const JmceOutput& o, const Matrix& x0, const CovTargets& tg, double lambda_min,
                          double w_eigen) {
  LossBreakdown b;
  for (std::size_t k = 0; k < x0.data().size(); ++k) b.l2 += std::pow(x0.data()[k] - o.mean.data()[k], 2);
  for (std::size_t t = 0; t < x0.cols(); ++t) {
    const Matrix s = o.factors[t] * o.factors[t].transpose();
    double fro = 0.0;
    for (double v : linalg::sym_eigen(linalg::symmetrize(tg.cov[t] - s)).values) {
      b.l_svd += std::abs(v);
      fro += v * v;
    }
    b.l_f += std::sqrt(fro);
    for (double v : linalg::sym_eigen(linalg::symmetrize(s)).values) b.eigen_penalty += std::max(0.0, lambda_min - v);
  }
  const double dt = static_cast<double>(x0.rows() * x0.cols());
  b.total = b.l2 + b.l_svd + lambda_min * std::sqrt(dt) * b.l_f + w_eigen * b.eigen_penalty;
  return b;
}

std::vector<data::TimeSeriesWindow> synthetic_windows(std::size_t length, std::uint64_t seed,
                                                      data::WindowMode mode, std::size_t th, std::size_t tf) {
  data::SyntheticConfig c;
  c.dim = 2;
  c.length = length;
  const auto s = data::generate_synthetic(c, seed);
  data::SplitSpec spec;
  spec.history = th;
  spec.horizon = tf;
  return data::make_windows(data::split_and_normalize(s.series, spec).train, th, tf, mode);
}

JmceConfig small_config() {
  JmceConfig c;
  c.dim = 2;
  c.history = 3;
  c.horizon = 2;
  c.window = 3;
  c.hidden = 4;
  c.projection = 3;
  c.width = 5;
  c.seed = 21;
  return c;
}

}  // namespace

TEST_CASE("sliding-window covariance examples") {
  SUBCASE("constant series gives zero matrices") {
    const auto tg = sliding_window_cov(Matrix(2, 6, 3.0), 3);
    REQUIRE(tg.cov.size() == 6);
    for (const auto& m : tg.cov) CHECK(m == Matrix(2, 2));
  }
  SUBCASE("population variance of a centered window") {
    const auto tg = sliding_window_cov(Matrix::from_rows({{1.0, 2.0, 3.0}}), 3);
    CHECK(tg.cov[1](0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    // Clipped at the edges: {1, 2} and {2, 3}.
    CHECK(tg.cov[0](0, 0) == doctest::Approx(0.25));
    CHECK(tg.cov[2](0, 0) == doctest::Approx(0.25));
  }
  SUBCASE("identical channels give rank-one matrices") {
    Matrix x(2, 8);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n;
    for (std::size_t t = 0; t < 8; ++t) x(0, t) = x(1, t) = n(rng);
    for (const auto& m : sliding_window_cov(x, 5).cov) {
      CHECK(m(0, 1) == doctest::Approx(m(0, 0)).epsilon(1e-14));
      CHECK(m(1, 1) == doctest::Approx(m(0, 0)).epsilon(1e-14));
      CHECK(std::abs(linalg::sym_eigen(m).values[1]) < 1e-12);
    }
  }
  SUBCASE("window must be odd and at least three") {
    CHECK_THROWS_AS(sliding_window_cov(Matrix(1, 5), 4), ContractViolation);
    CHECK_THROWS_AS(sliding_window_cov(Matrix(1, 5), 1), ContractViolation);
  }
}

TEST_CASE("targets are PSD") {
  std::mt19937_64 rng(2);
  for (int k = 0; k < 50; ++k) {
    const auto tg = sliding_window_cov(test::random_matrix(3, 12, rng), 7);
    for (const auto& m : tg.cov) CHECK(linalg::min_eigenvalue(m) > -1e-12);
  }
}

TEST_CASE("eigen penalty examples") {
  CHECK(eigen_penalty(Matrix::identity(3), 0.1) == 0.0);
  CHECK(eigen_penalty(0.05 * Matrix::identity(2), 0.1) == doctest::Approx(0.1).epsilon(1e-14));
  std::mt19937_64 rng(3);
  for (int k = 0; k < 20; ++k) {
    const Matrix s = with_spectrum({0.02, 0.4, 1.7}, rng);
    CHECK(std::abs(eigen_penalty(s, 0.1) - 0.08) < 1e-9);
  }
}

TEST_CASE("eigen penalty never decreases when the matrix shrinks") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  for (int k = 0; k < 200; ++k) {
    const Matrix s = test::random_spd(3, rng, 0.01);
    const double c = u(rng);
    CHECK(eigen_penalty(c * s, 0.1) >= eigen_penalty(s, 0.1) - 1e-15);
  }
}

TEST_CASE("factor products are PSD for arbitrary entries") {
  std::mt19937_64 rng(5);
  for (int k = 0; k < 200; ++k) {
    const JmceOutput o = random_output(4, 3, rng);
    for (std::size_t t = 0; t < 3; ++t) CHECK(linalg::min_eigenvalue(o.covariance(t)) >= -1e-10);
  }
}

TEST_CASE("loss examples") {
  std::mt19937_64 rng(6);
  const std::size_t d = 3, tf = 4;
  JmceOutput o{test::random_matrix(d, tf, rng), {}};
  CovTargets tg{{}, 3};
  for (std::size_t t = 0; t < tf; ++t) {
    tg.cov.push_back(test::random_spd(d, rng, 0.2));
    o.factors.push_back(linalg::cholesky(tg.cov.back()));
  }
  const LossWeights w{0.1, 50.0};
  SUBCASE("perfect fit") {
    const auto b = jmce_loss(o, o.mean, tg, w);
    CHECK(b.total < 1e-12);
  }
  SUBCASE("mean offset only") {
    Matrix x0 = o.mean;
    x0(0, 1) += 0.5;
    x0(2, 3) -= 1.5;
    const auto b = jmce_loss(o, x0, tg, w);
    CHECK(b.total == doctest::Approx(0.25 + 2.25).epsilon(1e-10));
    CHECK(b.l2 == doctest::Approx(2.5).epsilon(1e-14));
  }
}

TEST_CASE("loss matches a straight-line oracle and the breakdown identity") {
  std::mt19937_64 rng(7);
  for (int k = 0; k < 100; ++k) {
    const JmceOutput o = random_output(3, 4, rng);
    const Matrix x0 = test::random_matrix(3, 4, rng);
    const CovTargets tg = sliding_window_cov(test::random_matrix(3, 4, rng, 2.0), 3);
    const auto b = jmce_loss(o, x0, tg, {0.1, 50.0});
    const auto r = oracle_loss(o, x0, tg, 0.1, 50.0);
    CHECK(std::abs(b.total - r.total) < 1e-8);
    CHECK(std::abs(b.l_svd - r.l_svd) < 1e-8);
    CHECK(std::abs(b.l_f - r.l_f) < 1e-8);
    CHECK(std::abs(b.eigen_penalty - r.eigen_penalty) < 1e-8);
    const double identity = b.l2 + b.l_svd + 0.1 * std::sqrt(12.0) * b.l_f + 50.0 * b.eigen_penalty;
    CHECK(std::abs(b.total - identity) <= 1e-12 * std::max(1.0, b.total));
  }
}

TEST_CASE("loss rejects shape mismatches") {
  std::mt19937_64 rng(8);
  const JmceOutput o = random_output(2, 3, rng);
  const CovTargets tg = sliding_window_cov(test::random_matrix(2, 3, rng), 3);
  CHECK_THROWS_AS(jmce_loss(o, Matrix(2, 4), tg, {}), ContractViolation);
  CHECK_THROWS_AS(jmce_loss(o, Matrix(3, 3), tg, {}), ContractViolation);
}

TEST_CASE("row ops have correct gradients") {
  std::mt19937_64 rng(9);
  nn::NetParams p;
  nn::Tensor packed = nn::Tensor::matrix(3, packed_size(3));
  std::normal_distribution<double> n;
  for (double& v : packed.storage()) v = n(rng);
  p.add("packed", packed);
  nn::Tensor target = nn::Tensor::matrix(3, 9);
  for (std::size_t r = 0; r < 3; ++r) {
    const Matrix s = test::random_spd(3, rng, 0.05);
    for (std::size_t k = 0; k < 9; ++k) target.at(r, k) = s.data()[k];
  }
  SUBCASE("gram and frobenius") {
    CHECK(test::gradient_check(p, [&](nn::Graph& g, nn::NetParams& q) {
            const nn::Var s = lower_tri_gram(g.parameter(q.get("packed")), 3);
            return nn::sum(row_frobenius(nn::sub(s, g.constant(target))));
          }) < 1e-4);
  }
  SUBCASE("nuclear") {
    CHECK(test::gradient_check(p, [&](nn::Graph& g, nn::NetParams& q) {
            const nn::Var s = lower_tri_gram(g.parameter(q.get("packed")), 3);
            return nn::sum(row_sym_nuclear(nn::sub(s, g.constant(target)), 3));
          }) < 1e-4);
  }
  SUBCASE("eigen penalty") {
    // lambda_min chosen so some but not all eigenvalues are penalised.
    CHECK(test::gradient_check(p, [&](nn::Graph& g, nn::NetParams& q) {
            const nn::Var s = lower_tri_gram(g.parameter(q.get("packed")), 3);
            return nn::sum(row_eigen_penalty(s, 3, 1.0));
          }) < 1e-4);
  }
}

TEST_CASE("zero-weight network predicts zero mean and zero factors") {
  JmceModel m(small_config());
  m.params().fill_values(0.0);
  std::mt19937_64 rng(10);
  const JmceOutput o = m.predict(test::random_matrix(2, 3, rng));
  CHECK(o.mean == Matrix(2, 2));
  for (const auto& l : o.factors) CHECK(l == Matrix(2, 2));
  CHECK(o.covariance(0) == Matrix(2, 2));
}

TEST_CASE("forward is deterministic and factors are lower triangular") {
  const JmceModel a(small_config()), b(small_config());
  std::mt19937_64 rng(11);
  const Matrix c = test::random_matrix(2, 3, rng);
  const JmceOutput oa = a.predict(c), ob = b.predict(c), again = a.predict(c);
  CHECK(oa.mean == ob.mean);
  CHECK(oa.mean == again.mean);
  for (std::size_t t = 0; t < 2; ++t) {
    CHECK(oa.factors[t] == ob.factors[t]);
    CHECK(oa.factors[t](0, 1) == 0.0);
  }
}

TEST_CASE("graph loss agrees with the scalar loss and its gradient with finite differences") {
  JmceConfig c = small_config();
  c.lambda_min = 0.3;
  JmceModel m(c);
  std::mt19937_64 rng(12);
  std::vector<data::TimeSeriesWindow> ws;
  std::vector<CovTargets> tg;
  for (int k = 0; k < 3; ++k) {
    ws.push_back({test::random_matrix(2, 3, rng), test::random_matrix(2, 2, rng, 1.5), 0});
    tg.push_back(sliding_window_cov(ws.back().future, 3));
  }
  std::vector<const data::TimeSeriesWindow*> wp;
  std::vector<const CovTargets*> tp;
  for (int k = 0; k < 3; ++k) {
    wp.push_back(&ws[k]);
    tp.push_back(&tg[k]);
  }
  const TrainBatch batch = make_batch(wp, tp);

  nn::Graph g;
  const auto fwd = m.forward(g, batch.history);
  const GraphLoss gl = graph_loss(g, fwd, batch, 2, 2, c.weights());
  const auto outs = m.predict(ws);
  std::vector<Matrix> x0;
  for (const auto& w : ws) x0.push_back(w.future);
  const LossBreakdown ref = jmce_loss(outs, x0, tg, c.weights());
  CHECK(gl.parts.total == doctest::Approx(ref.total).epsilon(1e-12));
  CHECK(gl.parts.l_svd == doctest::Approx(ref.l_svd).epsilon(1e-12));
  CHECK(gl.parts.eigen_penalty == doctest::Approx(ref.eigen_penalty).epsilon(1e-12));
  CHECK(gl.total.value()[0] == doctest::Approx(ref.total).epsilon(1e-12));

  const double err = test::gradient_check(m.params(), [&](nn::Graph& h, nn::NetParams&) {
    return graph_loss(h, m.forward(h, batch.history), batch, 2, 2, c.weights()).total;
  });
  CHECK(err < 1e-3);
}

TEST_CASE("checkpoint round trip keeps predictions and settings") {
  JmceConfig c = small_config();
  c.lambda_min = 0.2;
  c.diag_init = 0.7;
  const JmceModel m(c);
  const auto path = std::filesystem::temp_directory_path() / "cwgen_jmce.ckpt";
  m.save(path);
  const JmceModel r = JmceModel::load(path);
  CHECK(r.config().lambda_min == 0.2);
  CHECK(r.config().window == 3);
  std::mt19937_64 rng(13);
  const Matrix h = test::random_matrix(2, 3, rng);
  CHECK(r.predict(h).mean == m.predict(h).mean);
  std::filesystem::remove(path);
}

TEST_CASE("zero epochs returns the initial parameters") {
  const auto train = synthetic_windows(600, 1, data::WindowMode::kTraining, 3, 2);
  JmceConfig c = small_config();
  c.epochs = 0;
  const auto r = train_jmce(train, train, c);
  const JmceModel init(c);
  for (std::size_t i = 0; i < init.params().size(); ++i) CHECK(r.model.params().at(i).value == init.params().at(i).value);
  CHECK(r.best_epoch == 0);
  CHECK(r.epochs.size() == 1);
}

TEST_CASE("a diverging run aborts and keeps the best checkpoint") {
  const auto train = synthetic_windows(600, 1, data::WindowMode::kTraining, 3, 2);
  JmceConfig c = small_config();
  c.epochs = 3;
  c.lr = 1e200;
  const auto r = train_jmce(train, train, c);
  CHECK(r.aborted);
  CHECK_FALSE(r.abort_reason.empty());
  const JmceModel init(c);
  for (std::size_t i = 0; i < init.params().size(); ++i) CHECK(r.model.params().at(i).value == init.params().at(i).value);
}

TEST_CASE("training lowers the validation mean error") {
  data::SyntheticConfig sc;
  sc.length = 1500;
  const auto syn = data::generate_synthetic(sc, 3);
  const auto splits = data::split_and_normalize(syn.series, data::SplitSpec{});
  const auto train = data::make_windows(splits.train, 24, 12, data::WindowMode::kTraining);
  const auto val = data::make_windows(splits.val, 24, 12, data::WindowMode::kTraining);
  JmceConfig c;
  c.epochs = 6;
  c.seed = 3;
  const auto r = train_jmce(train, val, c);
  REQUIRE_FALSE(r.aborted);
  CHECK(r.epochs.size() == 7);
  CHECK(r.best_epoch > 0);
  CHECK(r.epochs[r.best_epoch].val.l2 < r.epochs[0].val.l2);
  CHECK(r.epochs[r.best_epoch].val.total < r.epochs[0].val.total);

  // Mean error against the true conditional mean, in normalized units.
  const JmceModel untrained(c);
  double err_trained = 0.0, err_init = 0.0;
  for (const auto& w : val) {
    const std::size_t last = w.start + 23;
    const Matrix truth = data::true_conditional_mean(syn, last, 12);
    const Matrix a = r.model.predict(w.history).mean, b = untrained.predict(w.history).mean;
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t t = 0; t < 12; ++t) {
        const double z = (truth(i, t) - splits.train.mean[i]) / splits.train.std[i];
        err_trained += std::pow(a(i, t) - z, 2);
        err_init += std::pow(b(i, t) - z, 2);
      }
  }
  CHECK(err_trained < err_init);
}
