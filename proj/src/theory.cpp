#include "cwgen/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "cwgen/errors.hpp"

namespace cwgen::theory {

namespace {

void check_spec(const GaussianSpec& g, const char* op) {
  const std::size_t d = g.mean.size();
  if (d == 0 || g.cov.rows() != d || g.cov.cols() != d) {
    throw ContractViolation(std::string(op) + ": mean and covariance sizes differ");
  }
}

// Solves L y = b and L^T x = y for the Cholesky factor L.
std::vector<double> chol_solve(const Matrix& l, std::vector<double> b) {
  const std::size_t d = l.rows();
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t k = 0; k < i; ++k) b[i] -= l(i, k) * b[k];
    b[i] /= l(i, i);
  }
  for (std::size_t i = d; i-- > 0;) {
    for (std::size_t k = i + 1; k < d; ++k) b[i] -= l(k, i) * b[k];
    b[i] /= l(i, i);
  }
  return b;
}

double log_det_chol(const Matrix& l) {
  double s = 0.0;
  for (std::size_t i = 0; i < l.rows(); ++i) s += std::log(l(i, i));
  return 2.0 * s;
}

double sqnorm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

std::vector<double> diff(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

// E_{x ~ N(m, S)} [log q(x)] for Gaussian q.
double expected_log_density(const GaussianSpec& p, const GaussianSpec& q) {
  const std::size_t d = p.mean.size();
  const Matrix lq = linalg::cholesky(q.cov);
  double tr = 0.0;
  for (std::size_t j = 0; j < d; ++j) tr += chol_solve(lq, p.cov.column(j))[j];
  const auto delta = diff(p.mean, q.mean);
  const auto sd = chol_solve(lq, delta);
  double quad = 0.0;
  for (std::size_t i = 0; i < d; ++i) quad += delta[i] * sd[i];
  return -0.5 * (static_cast<double>(d) * std::log(2.0 * std::numbers::pi) + log_det_chol(lq) + tr + quad);
}

}  // namespace

double gaussian_kld(const GaussianSpec& p, const GaussianSpec& q) {
  check_spec(p, "gaussian_kld");
  check_spec(q, "gaussian_kld");
  if (p.mean.size() != q.mean.size()) throw ContractViolation("gaussian_kld: dimensions differ");
  const std::size_t d = p.mean.size();
  const Matrix lp = linalg::cholesky(p.cov);
  const Matrix lq = linalg::cholesky(q.cov);
  double tr = 0.0;
  for (std::size_t j = 0; j < d; ++j) tr += chol_solve(lq, p.cov.column(j))[j];
  const auto delta = diff(q.mean, p.mean);
  const auto sd = chol_solve(lq, delta);
  double quad = 0.0;
  for (std::size_t i = 0; i < d; ++i) quad += delta[i] * sd[i];
  const double kld = 0.5 * (tr + quad - static_cast<double>(d) + log_det_chol(lq) - log_det_chol(lp));
  return std::max(0.0, kld);
}

double gaussian_log_density(const GaussianSpec& g, const std::vector<double>& x) {
  check_spec(g, "gaussian_log_density");
  if (x.size() != g.mean.size()) throw ContractViolation("gaussian_log_density: dimension mismatch");
  const Matrix l = linalg::cholesky(g.cov);
  const auto delta = diff(x, g.mean);
  const auto sd = chol_solve(l, delta);
  double quad = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) quad += delta[i] * sd[i];
  return -0.5 * (static_cast<double>(x.size()) * std::log(2.0 * std::numbers::pi) + log_det_chol(l) + quad);
}

double theorem1_lhs(const std::vector<double>& mu, const Matrix& sigma, const std::vector<double>& mu_hat,
                    const Matrix& sigma_hat) {
  const std::size_t d = mu.size();
  if (d == 0 || mu_hat.size() != d || sigma.rows() != d || sigma_hat.rows() != d) {
    throw ContractViolation("theorem1_lhs: dimension mismatch");
  }
  const double lmin = linalg::min_eigenvalue(sigma_hat);
  if (!(lmin > 0.0)) throw ContractViolation("theorem1_lhs: sigma_hat must be positive definite");
  const Matrix ds = sigma - sigma_hat;
  return (sqnorm(diff(mu, mu_hat)) + linalg::nuclear_norm(ds)) / lmin +
         std::sqrt(static_cast<double>(d)) * linalg::frobenius_norm(ds);
}

ConditionReport theorem1_check(const std::vector<double>& mu, const Matrix& sigma, const std::vector<double>& mu_hat,
                               const Matrix& sigma_hat) {
  ConditionReport r;
  r.lhs = theorem1_lhs(mu, sigma, mu_hat, sigma_hat);
  r.rhs = sqnorm(mu);
  r.holds = r.lhs <= r.rhs;
  const GaussianSpec p{mu, sigma};
  r.kld_hat = gaussian_kld(p, {mu_hat, sigma_hat});
  r.kld_0 = gaussian_kld(p, {std::vector<double>(mu.size(), 0.0), Matrix::identity(mu.size())});
  r.ordering_ok = r.kld_hat <= r.kld_0 + kOrderingSlack;
  return r;
}

Matrix random_spd(std::size_t d, std::mt19937_64& rng, double lo, double hi) {
  if (d == 0 || !(lo > 0.0) || !(hi >= lo)) throw ContractViolation("random_spd: invalid arguments");
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix q(d, d);
  for (;;) {
    for (double& v : q.data()) v = n(rng);
    bool ok = true;
    for (std::size_t j = 0; j < d && ok; ++j) {
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t k = 0; k < j; ++k) {
          double dot = 0.0;
          for (std::size_t i = 0; i < d; ++i) dot += q(i, j) * q(i, k);
          for (std::size_t i = 0; i < d; ++i) q(i, j) -= dot * q(i, k);
        }
      }
      double norm = 0.0;
      for (std::size_t i = 0; i < d; ++i) norm += q(i, j) * q(i, j);
      norm = std::sqrt(norm);
      if (norm < 1e-8) {
        ok = false;
        break;
      }
      for (std::size_t i = 0; i < d; ++i) q(i, j) /= norm;
    }
    if (ok) break;
  }
  std::vector<double> ev(d);
  for (double& v : ev) v = u(rng);
  return linalg::symmetrize(q * Matrix::diagonal(ev) * q.transpose());
}

namespace {

std::string serialize(const std::vector<double>& mu, const Matrix& sigma, const std::vector<double>& mu_hat,
                      const Matrix& sigma_hat, const ConditionReport& r) {
  std::ostringstream os;
  os.precision(17);
  auto vec = [&](const char* name, std::span<const double> v) {
    os << name << " =";
    for (double x : v) os << ' ' << x;
    os << '\n';
  };
  vec("mu", mu);
  vec("sigma", sigma.data());
  vec("mu_hat", mu_hat);
  vec("sigma_hat", sigma_hat.data());
  os << "lhs = " << r.lhs << "\nrhs = " << r.rhs << "\nkld_hat = " << r.kld_hat << "\nkld_0 = " << r.kld_0 << '\n';
  return os.str();
}

}  // namespace

ValidationSummary validate_theorem1(std::size_t n, std::size_t d, std::mt19937_64& rng,
                                    const std::vector<double>& scales) {
  if (n < 1000) throw ContractViolation("validate_theorem1: need at least 1000 instances");
  if (d == 0 || scales.empty()) throw ContractViolation("validate_theorem1: invalid dimension or scale list");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  ValidationSummary s;
  s.instances = n;
  s.dim = d;
  for (double sc : scales) s.scales.push_back({sc, 0, 0});
  s.min_margin = std::numeric_limits<double>::infinity();
  s.min_slack = std::numeric_limits<double>::infinity();
  double margin_sum = 0.0;

  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t si = k % scales.size();
    const double scale = scales[si];

    std::vector<double> mu(d);
    for (double& v : mu) v = normal(rng);
    const double norm = std::sqrt(sqnorm(mu));
    const double radius = 5.0 * (1.0 - unit(rng));  // (0, 5]
    for (double& v : mu) v *= radius / norm;
    const Matrix sigma = random_spd(d, rng);

    std::vector<double> mu_hat = mu;
    for (double& v : mu_hat) v += scale * normal(rng);
    Matrix sigma_hat = sigma;
    if (scale > 0.0) {
      for (;;) {
        Matrix g(d, d);
        for (double& v : g.data()) v = normal(rng);
        Matrix cand = sigma + scale * linalg::symmetrize(g);
        if (linalg::min_eigenvalue(cand) > 1e-3) {
          sigma_hat = std::move(cand);
          break;
        }
      }
    }

    const ConditionReport r = theorem1_check(mu, sigma, mu_hat, sigma_hat);
    ++s.scales[si].instances;
    if (!r.holds) continue;
    ++s.holds;
    ++s.scales[si].holds;
    if (!r.ordering_ok) {
      ++s.counterexamples;
      throw NumericError("KLD ordering violated at instance " + std::to_string(k) + ":\n" +
                         serialize(mu, sigma, mu_hat, sigma_hat, r));
    }
    const double margin = r.kld_0 - r.kld_hat;
    s.min_margin = std::min(s.min_margin, margin);
    s.min_slack = std::min(s.min_slack, r.rhs - r.lhs);
    margin_sum += margin;
  }
  if (s.holds == 0) {
    s.min_margin = 0.0;
    s.min_slack = 0.0;
  } else {
    s.mean_margin = margin_sum / static_cast<double>(s.holds);
  }
  return s;
}

std::string format_summary(const ValidationSummary& s, std::uint64_t seed) {
  std::ostringstream os;
  os << "theorem check: n=" << s.instances << " dim=" << s.dim << " seed=" << seed << '\n';
  os << "condition holds: " << s.holds << " (" << 100.0 * s.hold_rate() << "%)\n";
  os << "counterexamples: " << s.counterexamples << '\n';
  os << "min margin kld_0 - kld_hat: " << s.min_margin << '\n';
  os << "mean margin kld_0 - kld_hat: " << s.mean_margin << '\n';
  os << "min slack rhs - lhs: " << s.min_slack << '\n';
  for (const auto& sc : s.scales) {
    os << "scale " << sc.scale << ": " << sc.holds << "/" << sc.instances << " hold (" << 100.0 * sc.hold_rate()
       << "%)\n";
  }
  return os.str();
}

GaussianSpec Mixture::moments() const {
  if (components.empty() || components.size() != weights.size()) {
    throw ContractViolation("Mixture: components and weights differ in length");
  }
  const std::size_t d = components.front().mean.size();
  double wsum = 0.0;
  for (double w : weights) wsum += w;
  GaussianSpec m{std::vector<double>(d, 0.0), Matrix(d, d)};
  for (std::size_t k = 0; k < components.size(); ++k) {
    const double w = weights[k] / wsum;
    for (std::size_t i = 0; i < d; ++i) m.mean[i] += w * components[k].mean[i];
  }
  for (std::size_t k = 0; k < components.size(); ++k) {
    const double w = weights[k] / wsum;
    const auto& c = components[k];
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j)
        m.cov(i, j) += w * (c.cov(i, j) + (c.mean[i] - m.mean[i]) * (c.mean[j] - m.mean[j]));
  }
  m.cov = linalg::symmetrize(m.cov);
  return m;
}

std::vector<double> Mixture::draw(std::mt19937_64& rng) const {
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  const auto& c = components[pick(rng)];
  const Matrix l = linalg::cholesky(c.cov);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> z(c.mean.size());
  for (double& v : z) v = n(rng);
  std::vector<double> x = c.mean;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t k = 0; k <= i; ++k) x[i] += l(i, k) * z[k];
  return x;
}

MonteCarloEstimate kld_gap_monte_carlo(const Mixture& p, const GaussianSpec& q_hat, const GaussianSpec& q0,
                                       std::size_t draws, std::mt19937_64& rng) {
  if (draws < 2) throw ContractViolation("kld_gap_monte_carlo: need at least two draws");
  double sum = 0.0, sq = 0.0;
  for (std::size_t k = 0; k < draws; ++k) {
    const auto x = p.draw(rng);
    const double v = gaussian_log_density(q0, x) - gaussian_log_density(q_hat, x);
    sum += v;
    sq += v * v;
  }
  const double n = static_cast<double>(draws);
  const double mean = sum / n;
  const double var = std::max(0.0, (sq - n * mean * mean) / (n - 1.0));
  return {mean, std::sqrt(var / n)};
}

double kld_gap_from_moments(const GaussianSpec& p_moments, const GaussianSpec& q_hat, const GaussianSpec& q0) {
  return expected_log_density(p_moments, q0) - expected_log_density(p_moments, q_hat);
}

}  // namespace cwgen::theory
