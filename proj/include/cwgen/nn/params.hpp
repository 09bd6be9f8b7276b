#pragma once

#include <cstdint>
#include <deque>
#include <random>
#include <string>
#include <string_view>

#include "cwgen/nn/tensor.hpp"

namespace cwgen::nn {

/// A trainable tensor with its gradient accumulator and Adam moments.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor first_moment;
  Tensor second_moment;
};

/// Named parameters plus optimizer state. Insertion order is preserved and is
/// the order used for checkpoints and reductions.
class NetParams {
 public:
  Parameter& add(std::string name, Tensor init);

  Parameter& at(std::size_t index) { return params_.at(index); }
  const Parameter& at(std::size_t index) const { return params_.at(index); }
  Parameter& get(std::string_view name);
  const Parameter& get(std::string_view name) const;
  const Parameter* find(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;

  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();
  /// Copies values (not optimizer state) from another set with identical names and shapes.
  void copy_values_from(const NetParams& other);
  void fill_values(double v);

  std::int64_t step = 0;

 private:
  std::deque<Parameter> params_;
};

/// uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)).
Tensor uniform_init(std::vector<std::size_t> shape, std::size_t fan_in, std::mt19937_64& rng);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update using the accumulated gradients.
/// Throws NumericError naming the offending parameter if a gradient is not finite.
void adam_step(NetParams& params, const AdamConfig& config);

}  // namespace cwgen::nn
