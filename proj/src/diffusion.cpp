#include "cwgen/diffusion.hpp"

#include <cmath>
#include <string>

#include "cwgen/errors.hpp"

namespace cwgen::diffusion {

void Schedule::validate() const {
  if (!(beta0 > 0.0) || !(beta1 >= beta0)) throw ContractViolation("Schedule: need 0 < beta0 <= beta1");
  if (n_steps < 2) throw ContractViolation("Schedule: n_steps must be at least 2");
  if (!(tau_min > 0.0 && tau_min <= 0.1)) throw ContractViolation("Schedule: tau_min must lie in (0, 0.1]");
}

std::pair<double, double> alpha_sigma(const Schedule& s, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw ContractViolation("alpha_sigma: tau outside [0, 1]");
  const double alpha = std::exp(-0.5 * (s.beta0 * tau + 0.5 * (s.beta1 - s.beta0) * tau * tau));
  // 1 - alpha^2 = -expm1(-2 log alpha) keeps precision near tau = 0.
  const double sigma = std::sqrt(-std::expm1(2.0 * std::log(alpha)));
  return {alpha, sigma};
}

Matrix forward_sample(const Matrix& x0, const Schedule& s, double tau, const Matrix& eps) {
  if (x0.rows() != eps.rows() || x0.cols() != eps.cols()) throw ContractViolation("forward_sample: shape mismatch");
  const auto [a, sg] = alpha_sigma(s, tau);
  Matrix out(x0.rows(), x0.cols());
  for (std::size_t i = 0; i < out.data().size(); ++i) out.data()[i] = a * x0.data()[i] + sg * eps.data()[i];
  return out;
}

double draw_training_tau(const Schedule& s, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (;;) {
    // u in [0, 1) maps to (floor, 1].
    const double tau = 1.0 - (1.0 - kTauFloor) * u(rng);
    if (alpha_sigma(s, tau).second >= kMinSigma) return tau;
  }
}

double score_objective(const Matrix& score, const Matrix& eps, double sigma) {
  if (score.rows() != eps.rows() || score.cols() != eps.cols()) {
    throw ContractViolation("score_objective: shape mismatch");
  }
  if (!(sigma > 0.0)) throw ContractViolation("score_objective: sigma must be positive");
  double acc = 0.0;
  for (std::size_t i = 0; i < eps.data().size(); ++i) {
    const double r = score.data()[i] + eps.data()[i] / sigma;
    acc += r * r;
  }
  return acc;
}

nn::Var score_loss(nn::Graph& g, nn::Var eps_hat, const nn::Tensor& eps, std::span<const double> sigma,
                   Weighting weighting) {
  const nn::Tensor& pred = eps_hat.value();
  if (!pred.same_shape(eps) || pred.rank() != 2 || sigma.size() != pred.rows()) {
    throw ContractViolation("score_loss: shape mismatch");
  }
  const std::size_t rows = pred.rows(), cols = pred.cols();
  nn::Tensor w = nn::Tensor::matrix(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!(sigma[r] >= kMinSigma)) throw ContractViolation("score_loss: sigma below the guard");
    const double wr = weighting == Weighting::kUnweighted ? 1.0 / sigma[r] : 1.0;
    for (std::size_t c = 0; c < cols; ++c) w.at(r, c) = wr;
  }
  nn::Var resid = nn::mul(nn::sub(g.constant(eps), eps_hat), g.constant(std::move(w)));
  return nn::scale(nn::sqnorm(resid), 1.0 / static_cast<double>(rows));
}

void fill_standard_normal(std::span<double> row, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (double& v : row) v = n(rng);
}

nn::Tensor reverse_sample(const ScoreField& score, std::size_t rows, std::size_t cols, const Schedule& s,
                          std::span<std::mt19937_64> rngs) {
  s.validate();
  if (rows == 0 || cols == 0 || rngs.size() != rows) throw ContractViolation("reverse_sample: need one rng per row");
  nn::Tensor x = nn::Tensor::matrix(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) fill_standard_normal(x.data().subspan(r * cols, cols), rngs[r]);
  const double h = (1.0 - s.tau_min) / static_cast<double>(s.n_steps);
  std::vector<double> z(cols);
  for (std::size_t k = 0; k < s.n_steps; ++k) {
    const double tau = 1.0 - static_cast<double>(k) * h;
    const double beta = s.beta(tau);
    const nn::Tensor sc = score(x, tau);
    if (!sc.same_shape(x)) throw ContractViolation("reverse_sample: score field returned the wrong shape");
    const double noise = std::sqrt(beta * h);
    for (std::size_t r = 0; r < rows; ++r) {
      fill_standard_normal(z, rngs[r]);
      for (std::size_t c = 0; c < cols; ++c) {
        double& v = x.at(r, c);
        v += (0.5 * beta * v + beta * sc.at(r, c)) * h + noise * z[c];
      }
    }
    if (!x.all_finite()) throw NumericError("reverse_sample: non-finite state at step " + std::to_string(k + 1));
  }
  return x;
}

}  // namespace cwgen::diffusion
