#include "cwgen/nn/backbone.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "cwgen/errors.hpp"

namespace cwgen::nn {

std::size_t BackboneSpec::head_input_width() const {
  std::size_t w = summary_width() + kPositionFeatures;
  if (state_input) w += kTauFeatures + 3 * dim;
  return w;
}

std::vector<double> sinusoidal_features(double x, std::size_t n, double max_freq) {
  std::vector<double> out(n);
  const std::size_t pairs = n / 2;
  for (std::size_t k = 0; k < pairs; ++k) {
    const double frac = pairs > 1 ? static_cast<double>(k) / static_cast<double>(pairs - 1) : 0.0;
    const double w = std::exp(frac * std::log(max_freq));
    out[2 * k] = std::sin(w * x);
    out[2 * k + 1] = std::cos(w * x);
  }
  return out;
}

Backbone::Backbone(const BackboneSpec& spec, NetParams& params, std::uint64_t seed) : spec_(spec) {
  if (spec.dim == 0 || spec.history == 0 || spec.horizon == 0 || spec.out_per_step == 0 || spec.hidden == 0 ||
      spec.projection == 0 || spec.width == 0) {
    throw ContractViolation("Backbone: all extents must be positive");
  }
  std::mt19937_64 rng(seed);
  const std::size_t d = spec.dim, h = spec.hidden, flat = spec.history * spec.dim;
  if (spec.skip_width > spec.out_per_step) throw ContractViolation("Backbone: skip_width exceeds out_per_step");
  const std::size_t out = spec.horizon * spec.skipped_outputs();
  auto dense = [&](const std::string& name, std::size_t in, std::size_t o) {
    params.add(name + ".w", uniform_init({in, o}, in, rng));
    params.add(name + ".b", uniform_init({1, o}, in, rng));
  };
  params.add("rnn.wx", uniform_init({d, h}, d + h, rng));
  params.add("rnn.wh", uniform_init({h, h}, d + h, rng));
  params.add("rnn.b", uniform_init({1, h}, d + h, rng));
  dense("proj", flat, spec.projection);
  dense("head1", spec.head_input_width(), spec.width);
  dense("head2", spec.width, spec.width);
  dense("head3", spec.width, spec.out_per_step);
  dense("skip", flat, out);
  bind(params);
}

Backbone::Backbone(const BackboneSpec& spec, const NetParams& params) : spec_(spec) { bind(params); }

void Backbone::bind(const NetParams& params) {
  rnn_wx_ = params.index_of("rnn.wx");
  rnn_wh_ = params.index_of("rnn.wh");
  rnn_b_ = params.index_of("rnn.b");
  auto layer = [&](const std::string& name) { return Layer{params.index_of(name + ".w"), params.index_of(name + ".b")}; };
  proj_ = layer("proj");
  head1_ = layer("head1");
  head2_ = layer("head2");
  head3_ = layer("head3");
  skip_ = layer("skip");
  const auto& w1 = params.at(head1_.w).value;
  if (w1.rows() != spec_.head_input_width() || w1.cols() != spec_.width ||
      params.at(skip_.w).value.cols() != spec_.horizon * spec_.skipped_outputs()) {
    throw ContractViolation("Backbone: parameter shapes do not match the BackboneSpec");
  }
}

template <class Params>
Var Backbone::linear(Graph& g, Params& params, const Layer& layer, Var x) const {
  return add(matmul(x, g.parameter(params.at(layer.w))), g.parameter(params.at(layer.b)));
}

template <class Params>
Backbone::Encoded Backbone::encode_impl(Graph& g, Params& params, const Tensor& history) const {
  const std::size_t d = spec_.dim, flat = spec_.history * d;
  if (history.rank() != 2 || history.cols() != flat) {
    throw ContractViolation("Backbone::encode: history must be [B, " + std::to_string(flat) + "]");
  }
  Var c = g.constant(history);
  Var wx = g.parameter(params.at(rnn_wx_));
  Var wh = g.parameter(params.at(rnn_wh_));
  Var b = g.parameter(params.at(rnn_b_));
  Var h = tanh(add(matmul(slice(c, 0, d), wx), b));
  for (std::size_t t = 1; t < spec_.history; ++t) {
    h = tanh(add(add(matmul(slice(c, t * d, (t + 1) * d), wx), matmul(h, wh)), b));
  }
  Var p = linear(g, params, proj_, c);
  return Encoded{concat({h, p}), linear(g, params, skip_, c)};
}

template <class Params>
Var Backbone::head_impl(Graph& g, Params& params, const Encoded& enc, std::size_t members, const Tensor* state,
                        std::span<const double> tau) const {
  const std::size_t d = spec_.dim, tf = spec_.horizon;
  const std::size_t batch = enc.summary.value().rows();
  const std::size_t rows = batch * members;

  std::vector<Var> parts;
  parts.push_back(repeat_rows(enc.summary, members * tf));

  Tensor pos = Tensor::matrix(rows * tf, kPositionFeatures);
  for (std::size_t t = 0; t < tf; ++t) {
    const auto f = sinusoidal_features(static_cast<double>(t) / static_cast<double>(tf), kPositionFeatures, 8.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t k = 0; k < kPositionFeatures; ++k) pos.at(r * tf + t, k) = f[k];
  }
  parts.push_back(g.constant(std::move(pos)));

  if (spec_.state_input) {
    if (state == nullptr || state->rows() != rows || state->cols() != tf * d || tau.size() != rows) {
      throw ContractViolation("Backbone::head: state must be [B*members, horizon*dim] with one tau per row");
    }
    Tensor feats = Tensor::matrix(rows * tf, kTauFeatures + 3 * d);
    for (std::size_t r = 0; r < rows; ++r) {
      const auto te = sinusoidal_features(tau[r], kTauFeatures, 200.0);
      for (std::size_t t = 0; t < tf; ++t) {
        const std::size_t row = r * tf + t;
        for (std::size_t k = 0; k < kTauFeatures; ++k) feats.at(row, k) = te[k];
        for (int off = -1; off <= 1; ++off) {
          const long s = static_cast<long>(t) + off;
          if (s < 0 || s >= static_cast<long>(tf)) continue;
          for (std::size_t i = 0; i < d; ++i) {
            feats.at(row, kTauFeatures + static_cast<std::size_t>(off + 1) * d + i) =
                state->at(r, static_cast<std::size_t>(s) * d + i);
          }
        }
      }
    }
    parts.push_back(g.constant(std::move(feats)));
  }

  Var z = concat(parts);
  Var h1 = tanh(linear(g, params, head1_, z));
  Var h2 = tanh(linear(g, params, head2_, h1));
  Var y = linear(g, params, head3_, h2);
  const std::size_t sw = spec_.skipped_outputs(), out = spec_.out_per_step;
  Var skip = reshape(repeat_rows(enc.skip, members), rows * tf, sw);
  Var sum = sw == out ? add(y, skip) : concat({add(slice(y, 0, sw), skip), slice(y, sw, out)});
  return reshape(sum, rows, tf * out);
}

Backbone::Encoded Backbone::encode(Graph& g, NetParams& params, const Tensor& history) const {
  return encode_impl(g, params, history);
}

Backbone::Encoded Backbone::encode(Graph& g, const NetParams& params, const Tensor& history) const {
  return encode_impl(g, params, history);
}

Var Backbone::head(Graph& g, NetParams& params, const Encoded& enc, std::size_t members, const Tensor* state,
                   std::span<const double> tau) const {
  return head_impl(g, params, enc, members, state, tau);
}

Var Backbone::head(Graph& g, const NetParams& params, const Encoded& enc, std::size_t members, const Tensor* state,
                   std::span<const double> tau) const {
  return head_impl(g, params, enc, members, state, tau);
}

}  // namespace cwgen::nn
