#include "cwgen/flow.hpp"

#include <string>

#include "cwgen/errors.hpp"

namespace cwgen::flow {

void FlowConfig::validate() const {
  if (n_steps < 2) throw ContractViolation("FlowConfig: n_steps must be at least 2");
  if (!(tau_min >= 0.0 && tau_min < 1.0)) throw ContractViolation("FlowConfig: tau_min must lie in [0, 1)");
}

Matrix interpolant(const Matrix& x0, const Matrix& eps, double tau) {
  if (x0.rows() != eps.rows() || x0.cols() != eps.cols()) throw ContractViolation("interpolant: shape mismatch");
  if (tau == 0.0) return x0;
  if (tau == 1.0) return eps;
  Matrix out(x0.rows(), x0.cols());
  for (std::size_t i = 0; i < out.data().size(); ++i) {
    out.data()[i] = x0.data()[i] + tau * (eps.data()[i] - x0.data()[i]);
  }
  return out;
}

double fm_objective(const Matrix& v, const Matrix& x0, const Matrix& eps) {
  if (v.rows() != x0.rows() || v.cols() != x0.cols() || eps.rows() != x0.rows() || eps.cols() != x0.cols()) {
    throw ContractViolation("fm_objective: shape mismatch");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < v.data().size(); ++i) {
    const double r = eps.data()[i] - x0.data()[i] - v.data()[i];
    acc += r * r;
  }
  return acc;
}

nn::Var fm_loss(nn::Graph& g, nn::Var v_hat, const nn::Tensor& x0, const nn::Tensor& eps) {
  const nn::Tensor& v = v_hat.value();
  if (!v.same_shape(x0) || !v.same_shape(eps) || v.rank() != 2) throw ContractViolation("fm_loss: shape mismatch");
  nn::Tensor target = eps;
  for (std::size_t i = 0; i < target.size(); ++i) target[i] -= x0[i];
  return nn::scale(nn::sqnorm(nn::sub(g.constant(std::move(target)), v_hat)), 1.0 / static_cast<double>(v.rows()));
}

nn::Tensor fm_sample(const VectorField& field, nn::Tensor terminal, const FlowConfig& config) {
  config.validate();
  nn::Tensor x = std::move(terminal);
  const double h = (1.0 - config.tau_min) / static_cast<double>(config.n_steps);
  for (std::size_t k = 0; k < config.n_steps; ++k) {
    const double tau = 1.0 - static_cast<double>(k) * h;
    const nn::Tensor v = field(x, tau);
    if (!v.same_shape(x)) throw ContractViolation("fm_sample: vector field returned the wrong shape");
    for (std::size_t i = 0; i < x.size(); ++i) x[i] -= h * v[i];
    if (!x.all_finite()) throw NumericError("fm_sample: non-finite state at step " + std::to_string(k + 1));
  }
  return x;
}

}  // namespace cwgen::flow
