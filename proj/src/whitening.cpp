#include "cwgen/whitening.hpp"

#include "cwgen/errors.hpp"

namespace cwgen::whitening {

CovStack::CovStack(std::vector<Matrix> cov) : cov_(std::move(cov)) {
  if (cov_.empty()) throw ContractViolation("CovStack: empty stack");
  const std::size_t d = cov_.front().rows();
  eig_.reserve(cov_.size());
  sqrt_.reserve(cov_.size());
  inv_sqrt_.reserve(cov_.size());
  for (const Matrix& c : cov_) {
    if (c.rows() != d || c.cols() != d) throw ContractViolation("CovStack: entries must share one square shape");
    eig_.push_back(linalg::sym_eigen(c));
    sqrt_.push_back(linalg::sym_power(eig_.back(), linalg::RootPower::kSqrt));
    inv_sqrt_.push_back(linalg::sym_power(eig_.back(), linalg::RootPower::kInverseSqrt));
  }
}

CovStack build_cov_stack(const jmce::JmceOutput& output, double jitter) {
  if (!(jitter >= 0.0)) throw ContractViolation("build_cov_stack: jitter must be nonnegative");
  std::vector<Matrix> cov;
  cov.reserve(output.factors.size());
  for (std::size_t t = 0; t < output.factors.size(); ++t) {
    if (!linalg::all_finite(output.factors[t])) throw NumericError("build_cov_stack: non-finite factor");
    Matrix s = output.covariance(t);
    if (jitter > 0.0)
      for (std::size_t i = 0; i < s.rows(); ++i) s(i, i) += jitter;
    cov.push_back(std::move(s));
  }
  return CovStack(std::move(cov));
}

Matrix apply_stack(std::span<const Matrix> m, const Matrix& e) {
  const std::size_t d = e.rows(), tf = e.cols();
  if (m.size() != tf) throw ContractViolation("apply_stack: stack length differs from column count");
  Matrix out(d, tf);
  for (std::size_t t = 0; t < tf; ++t) {
    const Matrix& a = m[t];
    if (a.rows() != d || a.cols() != d) throw ContractViolation("apply_stack: stack entry has the wrong size");
    for (std::size_t i = 0; i < d; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += a(i, j) * e(j, t);
      out(i, t) = s;
    }
  }
  return out;
}

namespace {

void check_shapes(const Matrix& x, const Matrix& mu, const CovStack& stack, const char* op) {
  if (x.rows() != mu.rows() || x.cols() != mu.cols() || x.cols() != stack.size() || x.rows() != stack.dim()) {
    throw ContractViolation(std::string(op) + ": shape mismatch");
  }
}

}  // namespace

Matrix whiten(const Matrix& x0, const Matrix& mu_hat, const CovStack& stack) {
  check_shapes(x0, mu_hat, stack, "whiten");
  return apply_stack(stack.inv_sqrt(), x0 - mu_hat);
}

Matrix unwhiten(const Matrix& x_cw, const Matrix& mu_hat, const CovStack& stack) {
  check_shapes(x_cw, mu_hat, stack, "unwhiten");
  return apply_stack(stack.sqrt(), x_cw) + mu_hat;
}

Matrix standard_normal(std::size_t d, std::size_t t, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix out(d, t);
  for (std::size_t c = 0; c < t; ++c)
    for (std::size_t i = 0; i < d; ++i) out(i, c) = n(rng);
  return out;
}

Matrix sample_cw_noise(const Matrix& mu_hat, const jmce::JmceOutput& output, std::mt19937_64& rng) {
  if (mu_hat.cols() != output.factors.size()) throw ContractViolation("sample_cw_noise: shape mismatch");
  const Matrix xi = standard_normal(mu_hat.rows(), mu_hat.cols(), rng);
  return apply_stack(output.factors, xi) + mu_hat;
}

}  // namespace cwgen::whitening
