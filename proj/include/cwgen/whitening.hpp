#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "cwgen/jmce.hpp"
#include "cwgen/linalg.hpp"

namespace cwgen::whitening {

using linalg::Matrix;

inline constexpr double kDefaultJitter = 1e-6;

/// Per-step conditional covariances with cached eigen-decompositions and both
/// square-root powers. Immutable once built.
class CovStack {
 public:
  /// Takes ownership of T_f symmetric positive-definite d x d matrices.
  /// Throws SingularityError if any entry has min eigenvalue <= 1e-12.
  explicit CovStack(std::vector<Matrix> cov);

  std::size_t size() const { return cov_.size(); }
  std::size_t dim() const { return cov_.empty() ? 0 : cov_.front().rows(); }

  const Matrix& cov(std::size_t t) const { return cov_.at(t); }
  const linalg::EigenPair& eigen(std::size_t t) const { return eig_.at(t); }
  const std::vector<Matrix>& sqrt() const { return sqrt_; }
  const std::vector<Matrix>& inv_sqrt() const { return inv_sqrt_; }

 private:
  std::vector<Matrix> cov_;
  std::vector<linalg::EigenPair> eig_;
  std::vector<Matrix> sqrt_;
  std::vector<Matrix> inv_sqrt_;
};

/// Sigma_t = L_t L_t^T + jitter I for every step of a JMCE output.
CovStack build_cov_stack(const jmce::JmceOutput& output, double jitter = kDefaultJitter);

/// Column t of the result is m[t] * e(:, t).
Matrix apply_stack(std::span<const Matrix> m, const Matrix& e);

/// Sigma^{-1/2} o (x0 - mu_hat).
Matrix whiten(const Matrix& x0, const Matrix& mu_hat, const CovStack& stack);
/// Sigma^{1/2} o x_cw + mu_hat.
Matrix unwhiten(const Matrix& x_cw, const Matrix& mu_hat, const CovStack& stack);

/// d x T standard normal block. Draw order is column by column (time-major),
/// shared by every sampler so that Raw and CW paths consume identical streams.
Matrix standard_normal(std::size_t d, std::size_t t, std::mt19937_64& rng);

/// L_t xi_t + mu_t with xi drawn by standard_normal().
Matrix sample_cw_noise(const Matrix& mu_hat, const jmce::JmceOutput& output, std::mt19937_64& rng);

}  // namespace cwgen::whitening
