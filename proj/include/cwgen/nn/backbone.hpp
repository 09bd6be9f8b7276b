#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cwgen/nn/graph.hpp"
#include "cwgen/nn/params.hpp"

namespace cwgen::nn {

inline constexpr std::size_t kPositionFeatures = 8;
inline constexpr std::size_t kTauFeatures = 16;

/// Shape of the conditional network shared by JMCE, score and vector-field
/// models. Histories and states are passed time-major: element (t, i) of a
/// d x T block lives at t * d + i.
struct BackboneSpec {
  std::size_t dim = 3;
  std::size_t history = 24;
  std::size_t horizon = 12;
  std::size_t out_per_step = 3;
  std::size_t hidden = 24;      // recurrent encoder state
  std::size_t projection = 16;  // linear summary of the flattened history
  std::size_t width = 32;       // time-distributed block width
  bool state_input = false;     // takes a noised state x_tau and diffusion time tau
  std::size_t skip_width = 0;   // leading per-step outputs fed by the linear skip; 0 = all

  std::size_t skipped_outputs() const { return skip_width == 0 ? out_per_step : skip_width; }

  std::size_t summary_width() const { return hidden + projection; }
  std::size_t head_input_width() const;
};

/// [sin(w_k x), cos(w_k x)] for n/2 log-spaced frequencies between 1 and max_freq.
std::vector<double> sinusoidal_features(double x, std::size_t n, double max_freq);

/// Recurrent + linear summary of the history C, followed by a feedforward block
/// applied independently at every forecast step, plus a linear skip from C to
/// every output. The block at step t sees the summary, a position embedding of
/// t and, for state models, x_tau at steps t-1, t, t+1 and an embedding of tau.
class Backbone {
 public:
  /// Registers freshly initialised parameters in `params` (uniform(+-1/sqrt(fan_in))).
  Backbone(const BackboneSpec& spec, NetParams& params, std::uint64_t seed);
  /// Binds to parameters that already exist in `params` (e.g. after loading).
  Backbone(const BackboneSpec& spec, const NetParams& params);

  struct Encoded {
    Var summary;  // [B, summary_width]
    Var skip;     // [B, horizon * skipped_outputs()]
  };

  const BackboneSpec& spec() const { return spec_; }

  /// history: [B, history * dim]. The const-params overloads record no
  /// parameter gradients and are used for inference.
  Encoded encode(Graph& g, NetParams& params, const Tensor& history) const;
  Encoded encode(Graph& g, const NetParams& params, const Tensor& history) const;

  /// Evaluates `members` rows per encoded window. state is
  /// [B * members, horizon * dim] and tau has B * members entries; both are
  /// ignored unless spec.state_input. Result: [B * members, horizon * out_per_step].
  Var head(Graph& g, NetParams& params, const Encoded& enc, std::size_t members, const Tensor* state,
           std::span<const double> tau) const;
  Var head(Graph& g, const NetParams& params, const Encoded& enc, std::size_t members, const Tensor* state,
           std::span<const double> tau) const;

  template <class Params>
  Var forward(Graph& g, Params& params, const Tensor& history, const Tensor* state,
              std::span<const double> tau) const {
    return head(g, params, encode(g, params, history), 1, state, tau);
  }

 private:
  struct Layer {
    std::size_t w = 0;
    std::size_t b = 0;
  };
  void bind(const NetParams& params);
  template <class Params>
  Var linear(Graph& g, Params& params, const Layer& layer, Var x) const;
  template <class Params>
  Encoded encode_impl(Graph& g, Params& params, const Tensor& history) const;
  template <class Params>
  Var head_impl(Graph& g, Params& params, const Encoded& enc, std::size_t members, const Tensor* state,
                std::span<const double> tau) const;

  BackboneSpec spec_;
  std::size_t rnn_wx_ = 0, rnn_wh_ = 0, rnn_b_ = 0;
  Layer proj_, head1_, head2_, head3_, skip_;
};

}  // namespace cwgen::nn
