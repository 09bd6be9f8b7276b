#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "cwgen/linalg.hpp"

namespace cwgen::theory {

using linalg::Matrix;

struct GaussianSpec {
  std::vector<double> mean;
  Matrix cov;  // symmetric positive definite
};

/// KL(p || q) in closed form. Throws SingularityError if a covariance is not
/// positive definite and ContractViolation on dimension mismatch.
double gaussian_kld(const GaussianSpec& p, const GaussianSpec& q);

/// Log-density of x under g.
double gaussian_log_density(const GaussianSpec& g, const std::vector<double>& x);

/// (min_i lambda_i(sigma_hat))^{-1} (||mu - mu_hat||^2 + ||sigma - sigma_hat||_N)
///   + sqrt(d) ||sigma - sigma_hat||_F.
/// Throws ContractViolation when sigma_hat has a nonpositive eigenvalue.
double theorem1_lhs(const std::vector<double>& mu, const Matrix& sigma, const std::vector<double>& mu_hat,
                    const Matrix& sigma_hat);

struct ConditionReport {
  double lhs = 0.0;
  double rhs = 0.0;  // ||mu||^2
  bool holds = false;
  double kld_hat = 0.0;  // KL(P || N(mu_hat, sigma_hat))
  double kld_0 = 0.0;    // KL(P || N(0, I))
  bool ordering_ok = false;
};

inline constexpr double kOrderingSlack = 1e-9;

/// P = N(mu, sigma). ordering_ok is kld_hat <= kld_0 + kOrderingSlack.
ConditionReport theorem1_check(const std::vector<double>& mu, const Matrix& sigma, const std::vector<double>& mu_hat,
                               const Matrix& sigma_hat);

/// Q diag(u) Q^T with Q orthogonal (Gram-Schmidt on a Gaussian matrix) and u ~ U[lo, hi].
Matrix random_spd(std::size_t d, std::mt19937_64& rng, double lo = 0.2, double hi = 3.0);

struct ScaleSummary {
  double scale = 0.0;
  std::size_t instances = 0;
  std::size_t holds = 0;
  double hold_rate() const { return instances ? static_cast<double>(holds) / static_cast<double>(instances) : 0.0; }
};

struct ValidationSummary {
  std::size_t instances = 0;
  std::size_t dim = 0;
  std::size_t holds = 0;
  std::size_t counterexamples = 0;
  double min_margin = 0.0;   // min of kld_0 - kld_hat over holding instances
  double mean_margin = 0.0;
  double min_slack = 0.0;    // min of rhs - lhs over holding instances
  std::vector<ScaleSummary> scales;

  double hold_rate() const { return instances ? static_cast<double>(holds) / static_cast<double>(instances) : 0.0; }
};

inline const std::vector<double> kDefaultErrorScales = {0.01, 0.1, 0.5};

/// Random instances cycling through `scales`: mu uniform in direction with norm
/// U(0, 5], sigma = random_spd, mu_hat = mu + s z, sigma_hat = sigma + s sym(G)
/// redrawn until its min eigenvalue exceeds 1e-3. With scale 0 the estimators are
/// exact. Throws ContractViolation for n < 1000 and NumericError carrying the
/// serialized instance if a holding instance violates the ordering.
ValidationSummary validate_theorem1(std::size_t n, std::size_t d, std::mt19937_64& rng,
                                    const std::vector<double>& scales = kDefaultErrorScales);

std::string format_summary(const ValidationSummary& s, std::uint64_t seed);

/// Equal-weight Gaussian mixture.
struct Mixture {
  std::vector<GaussianSpec> components;
  std::vector<double> weights;

  GaussianSpec moments() const;
  std::vector<double> draw(std::mt19937_64& rng) const;
};

struct MonteCarloEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

/// Monte Carlo estimate of KL(P || q_hat) - KL(P || q0) = E_P[log q0 - log q_hat].
MonteCarloEstimate kld_gap_monte_carlo(const Mixture& p, const GaussianSpec& q_hat, const GaussianSpec& q0,
                                       std::size_t draws, std::mt19937_64& rng);

/// The same gap from the first two moments of P alone (exact for any P).
double kld_gap_from_moments(const GaussianSpec& p_moments, const GaussianSpec& q_hat, const GaussianSpec& q0);

}  // namespace cwgen::theory
