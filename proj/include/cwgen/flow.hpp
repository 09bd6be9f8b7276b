#pragma once

#include <cstddef>
#include <functional>

#include "cwgen/linalg.hpp"
#include "cwgen/nn/graph.hpp"
#include "cwgen/nn/tensor.hpp"

namespace cwgen::flow {

using linalg::Matrix;

struct FlowConfig {
  std::size_t n_steps = 50;
  double tau_min = 1e-3;

  void validate() const;
};

/// x0 + tau (eps - x0).
Matrix interpolant(const Matrix& x0, const Matrix& eps, double tau);

/// ||eps - x0 - v||^2 for one example.
double fm_objective(const Matrix& v, const Matrix& x0, const Matrix& eps);

/// Batch mean of ||eps - x0 - v||^2 over rows of [B, n] tensors.
nn::Var fm_loss(nn::Graph& g, nn::Var v_hat, const nn::Tensor& x0, const nn::Tensor& eps);

/// Vector field evaluated for every row of x at time tau.
using VectorField = std::function<nn::Tensor(const nn::Tensor& x, double tau)>;

/// Explicit Euler for dX = -v dtau from tau = 1 (state = terminal) down to tau_min
/// in n_steps uniform steps: x <- x - h v(x, tau).
nn::Tensor fm_sample(const VectorField& field, nn::Tensor terminal, const FlowConfig& config);

}  // namespace cwgen::flow
