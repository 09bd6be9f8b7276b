#include "cwgen/nn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>

#include "cwgen/errors.hpp"

namespace cwgen::nn {

std::size_t element_count(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill) : shape_(std::move(shape)) {
  if (std::find(shape_.begin(), shape_.end(), std::size_t{0}) != shape_.end() || shape_.empty()) {
    throw ContractViolation("Tensor: shape must be a non-empty list of positive extents");
  }
  data_.assign(element_count(shape_), fill);
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.empty() || std::find(shape_.begin(), shape_.end(), std::size_t{0}) != shape_.end()) {
    throw ContractViolation("Tensor: shape must be a non-empty list of positive extents");
  }
  if (data_.size() != element_count(shape_)) {
    throw ContractViolation("Tensor: data length " + std::to_string(data_.size()) +
                            " does not match shape volume " + std::to_string(element_count(shape_)));
  }
}

std::size_t Tensor::rows() const {
  if (shape_.size() < 2) return 1;
  return element_count(shape_) / shape_.back();
}

std::size_t Tensor::cols() const { return shape_.empty() ? 0 : shape_.back(); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
  if (element_count(shape) != data_.size()) throw ContractViolation("Tensor::reshaped: volume mismatch");
  return Tensor(std::move(shape), data_);
}

}  // namespace cwgen::nn
