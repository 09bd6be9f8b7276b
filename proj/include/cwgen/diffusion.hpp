#pragma once

#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <utility>

#include "cwgen/linalg.hpp"
#include "cwgen/nn/graph.hpp"
#include "cwgen/nn/tensor.hpp"

namespace cwgen::diffusion {

using linalg::Matrix;

inline constexpr double kTauFloor = 1e-3;
inline constexpr double kMinSigma = 1e-6;

/// Variance-preserving schedule with linear beta(tau) = beta0 + tau (beta1 - beta0).
struct Schedule {
  double beta0 = 0.1;
  double beta1 = 20.0;
  std::size_t n_steps = 50;
  double tau_min = 1e-3;

  /// Throws ContractViolation unless 0 < beta0 <= beta1, n_steps >= 2, tau_min in (0, 0.1].
  void validate() const;
  double beta(double tau) const { return beta0 + tau * (beta1 - beta0); }
};

/// alpha = exp(-(beta0 tau + (beta1 - beta0) tau^2 / 2) / 2), sigma = sqrt(1 - alpha^2).
std::pair<double, double> alpha_sigma(const Schedule& s, double tau);

/// alpha x0 + sigma eps.
Matrix forward_sample(const Matrix& x0, const Schedule& s, double tau, const Matrix& eps);

/// Uniform on (kTauFloor, 1], redrawn while sigma < kMinSigma.
double draw_training_tau(const Schedule& s, std::mt19937_64& rng);

/// ||score + eps / sigma||^2 for one example.
double score_objective(const Matrix& score, const Matrix& eps, double sigma);

enum class Weighting {
  kUnweighted,    // ||s + eps/sigma||^2 = ||eps - eps_hat||^2 / sigma^2
  kSigmaSquared,  // sigma^2 ||s + eps/sigma||^2 = ||eps - eps_hat||^2
};

/// Batch-mean score loss for a network that predicts the noise (s = -eps_hat / sigma).
/// eps_hat and eps are [B, n]; sigma has B entries.
nn::Var score_loss(nn::Graph& g, nn::Var eps_hat, const nn::Tensor& eps, std::span<const double> sigma,
                   Weighting weighting);

/// Score of the noised state at diffusion time tau for every row of x.
using ScoreField = std::function<nn::Tensor(const nn::Tensor& x, double tau)>;

/// Euler-Maruyama integration of dX = [-beta X / 2 - beta s] dtau + sqrt(beta) dW from
/// tau = 1 down to tau_min on a uniform grid of n_steps intervals:
///   x <- x + (beta x / 2 + beta s) h + sqrt(beta h) z.
/// Row r starts from N(0, I) and draws all of its noise from rngs[r], so rows are
/// reproducible regardless of how they are batched. Throws NumericError naming the
/// step if the state stops being finite.
nn::Tensor reverse_sample(const ScoreField& score, std::size_t rows, std::size_t cols, const Schedule& s,
                          std::span<std::mt19937_64> rngs);

/// Row r: n iid standard normals drawn from rng, in storage order.
void fill_standard_normal(std::span<double> row, std::mt19937_64& rng);

}  // namespace cwgen::diffusion
