#include "cwgen/nn/params.hpp"

#include <cmath>

#include "cwgen/errors.hpp"

namespace cwgen::nn {

Parameter& NetParams::add(std::string name, Tensor init) {
  if (find(name) != nullptr) throw ContractViolation("NetParams: duplicate parameter '" + name + "'");
  Parameter p;
  p.name = std::move(name);
  p.grad = Tensor(init.shape(), 0.0);
  p.first_moment = Tensor(init.shape(), 0.0);
  p.second_moment = Tensor(init.shape(), 0.0);
  p.value = std::move(init);
  params_.push_back(std::move(p));
  return params_.back();
}

const Parameter* NetParams::find(std::string_view name) const {
  for (const auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

Parameter& NetParams::get(std::string_view name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  throw ContractViolation("NetParams: no parameter named '" + std::string(name) + "'");
}

const Parameter& NetParams::get(std::string_view name) const {
  const Parameter* p = find(name);
  if (p == nullptr) throw ContractViolation("NetParams: no parameter named '" + std::string(name) + "'");
  return *p;
}

std::size_t NetParams::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].name == name) return i;
  throw ContractViolation("NetParams: no parameter named '" + std::string(name) + "'");
}

std::size_t NetParams::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void NetParams::zero_grad() {
  for (auto& p : params_) p.grad.fill(0.0);
}

void NetParams::copy_values_from(const NetParams& other) {
  if (other.size() != size()) throw ContractViolation("NetParams::copy_values_from: parameter count differs");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name != other.params_[i].name || !params_[i].value.same_shape(other.params_[i].value)) {
      throw ContractViolation("NetParams::copy_values_from: layout differs at '" + params_[i].name + "'");
    }
    params_[i].value = other.params_[i].value;
  }
}

void NetParams::fill_values(double v) {
  for (auto& p : params_) p.value.fill(v);
}

Tensor uniform_init(std::vector<std::size_t> shape, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = dist(rng);
  return t;
}

void adam_step(NetParams& params, const AdamConfig& config) {
  for (const auto& p : params) {
    if (!p.grad.all_finite()) {
      throw NumericError("adam_step: non-finite gradient for parameter '" + p.name + "' at step " +
                         std::to_string(params.step + 1) + "; training aborted");
    }
  }
  ++params.step;
  const double t = static_cast<double>(params.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (auto& p : params) {
    auto w = p.value.data();
    auto g = p.grad.data();
    auto m = p.first_moment.data();
    auto v = p.second_moment.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      w[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
    }
  }
}

}  // namespace cwgen::nn
