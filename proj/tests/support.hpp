#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "cwgen/data.hpp"
#include "cwgen/linalg.hpp"
#include "cwgen/nn/graph.hpp"
#include "cwgen/nn/params.hpp"

namespace cwgen::test {

using linalg::Matrix;

inline Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(r, c);
  for (double& v : m.data()) v = n(rng);
  return m;
}

inline Matrix random_symmetric(std::size_t d, std::mt19937_64& rng) {
  const Matrix a = random_matrix(d, d, rng);
  return linalg::symmetrize(a + a.transpose());
}

/// B B^T / d + floor I.
inline Matrix random_spd(std::size_t d, std::mt19937_64& rng, double floor = 0.1) {
  const Matrix b = random_matrix(d, d, rng);
  Matrix s = (1.0 / static_cast<double>(d)) * (b * b.transpose());
  for (std::size_t i = 0; i < d; ++i) s(i, i) += floor;
  return linalg::symmetrize(s);
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

inline double rel_err(double a, double b, double floor = 1e-3) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Largest relative error between backprop gradients and central differences
/// over every scalar parameter. `loss` builds the scalar loss on a fresh graph.
inline double gradient_check(nn::NetParams& params, const std::function<nn::Var(nn::Graph&, nn::NetParams&)>& loss,
                             double h = 1e-5, double floor = 1e-3) {
  params.zero_grad();
  {
    nn::Graph g;
    g.backward(loss(g, params));
  }
  auto eval = [&]() {
    nn::Graph g;
    return loss(g, params).value()[0];
  };
  double worst = 0.0;
  for (auto& p : params) {
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double x = p.value[i];
      p.value[i] = x + h;
      const double up = eval();
      p.value[i] = x - h;
      const double down = eval();
      p.value[i] = x;
      worst = std::max(worst, rel_err(p.grad[i], (up - down) / (2.0 * h), floor));
    }
  }
  return worst;
}

/// Normalized train windows of a short synthetic series.
inline std::vector<data::TimeSeriesWindow> toy_windows(std::size_t dim, std::size_t history, std::size_t horizon,
                                                       std::size_t length, std::uint64_t seed,
                                                       data::WindowMode mode = data::WindowMode::kTraining) {
  data::SyntheticConfig c;
  c.dim = dim;
  c.length = length;
  data::SplitSpec spec;
  spec.history = history;
  spec.horizon = horizon;
  const auto splits = data::split_and_normalize(data::generate_synthetic(c, seed).series, spec);
  return data::make_windows(splits.train, history, horizon, mode);
}

}  // namespace cwgen::test
