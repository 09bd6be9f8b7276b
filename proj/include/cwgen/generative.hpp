#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cwgen/data.hpp"
#include "cwgen/diffusion.hpp"
#include "cwgen/flow.hpp"
#include "cwgen/jmce.hpp"
#include "cwgen/nn/backbone.hpp"
#include "cwgen/nn/params.hpp"
#include "cwgen/whitening.hpp"

namespace cwgen::generative {

using linalg::Matrix;

enum class Kind { kDiffusion, kFlow };
enum class Variant { kRaw, kCw };

std::string to_string(Kind k);
std::string to_string(Variant v);
/// "diff" | "flow"; throws ContractViolation otherwise.
Kind parse_kind(std::string_view s);
/// "raw" | "cw"; throws ContractViolation otherwise.
Variant parse_variant(std::string_view s);

/// Source of (mu_hat, L_hat) for conditional whitening.
class Prior {
 public:
  virtual ~Prior() = default;
  virtual std::vector<jmce::JmceOutput> predict(std::span<const data::TimeSeriesWindow> windows) const = 0;
  /// Added to L L^T before inversion.
  virtual double jitter() const = 0;
};

/// Frozen JMCE network.
class JmcePrior final : public Prior {
 public:
  explicit JmcePrior(const jmce::JmceModel& model, double jitter = whitening::kDefaultJitter)
      : model_(model), jitter_(jitter) {}
  std::vector<jmce::JmceOutput> predict(std::span<const data::TimeSeriesWindow> windows) const override {
    return model_.predict(windows);
  }
  double jitter() const override { return jitter_; }

 private:
  const jmce::JmceModel& model_;
  double jitter_;
};

/// mu_hat = 0, L_hat = I, no jitter: whitening becomes the identity map.
class IdentityPrior final : public Prior {
 public:
  IdentityPrior(std::size_t dim, std::size_t horizon) : dim_(dim), horizon_(horizon) {}
  std::vector<jmce::JmceOutput> predict(std::span<const data::TimeSeriesWindow> windows) const override;
  double jitter() const override { return 0.0; }

 private:
  std::size_t dim_;
  std::size_t horizon_;
};

struct GenConfig {
  Kind kind = Kind::kDiffusion;
  Variant variant = Variant::kRaw;
  std::size_t dim = 3;
  std::size_t history = 24;
  std::size_t horizon = 12;
  std::size_t hidden = 24;
  std::size_t projection = 16;
  std::size_t width = 32;
  std::size_t epochs = 40;
  std::size_t batch = 32;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  diffusion::Schedule schedule;
  flow::FlowConfig flow;
  diffusion::Weighting weighting = diffusion::Weighting::kSigmaSquared;
  /// Adds state_gain(tau) * (x_tau - center) to the network output: sigma_tau for
  /// noise prediction, (2 tau - 1) / ((1 - tau)^2 + tau^2) for the vector field.
  /// Both are the optimal linear predictors when the data follows the terminal
  /// distribution.
  bool state_skip = true;

  double state_gain(double tau) const;
  nn::BackboneSpec backbone() const;
  std::string id() const { return to_string(kind) + "_" + to_string(variant); }
};

/// Noise-prediction (diffusion) or vector-field (flow) network over the shared backbone.
class GenModel {
 public:
  explicit GenModel(const GenConfig& config);

  /// history [B, T_h d]; state [B * members, T_f d]; tau one entry per state row.
  /// `center`, shaped like state, is subtracted from the state inside the linear
  /// skip (the prior mean for CW flow; null means zero).
  nn::Var forward(nn::Graph& g, const nn::Tensor& history, std::size_t members, const nn::Tensor& state,
                  std::span<const double> tau, const nn::Tensor* center = nullptr);
  nn::Var forward(nn::Graph& g, const nn::Tensor& history, std::size_t members, const nn::Tensor& state,
                  std::span<const double> tau, const nn::Tensor* center = nullptr) const;

  const GenConfig& config() const { return config_; }
  nn::NetParams& params() { return params_; }
  const nn::NetParams& params() const { return params_; }

  void save(const std::filesystem::path& path) const;
  static GenModel load(const std::filesystem::path& path);

 private:
  GenConfig config_;
  nn::NetParams params_;
  nn::Backbone backbone_;
};

struct GenTrainResult {
  GenModel model;
  std::vector<double> step_losses;  // one entry per optimizer step
  std::vector<double> val_losses;   // entry 0 is the untrained model
  std::size_t best_epoch = 0;
  bool aborted = false;
  std::string abort_reason;
};

/// Trains on stride-1 windows. The CW variant needs a prior (frozen while training):
/// diffusion fits the whitened future, flow fits the raw future against the terminal
/// L_hat xi + mu_hat. Per example the rng draws tau first and then xi, identically for
/// both variants. Returns the epoch with the lowest validation loss.
/// Throws PrerequisiteError for the CW variant without a prior.
GenTrainResult train_generative(std::span<const data::TimeSeriesWindow> train,
                                std::span<const data::TimeSeriesWindow> val, const GenConfig& config,
                                const Prior* prior);

/// m generated futures tied to one conditioning window.
struct SampleEnsemble {
  std::vector<Matrix> members;  // each d x T_f
  std::size_t window = 0;
  std::string model_id;
  std::uint64_t base_seed = 0;
  std::size_t sampler_steps = 0;

  std::size_t size() const { return members.size(); }
};

/// Seed of member j of window w: window_seed(base, w) + j.
std::uint64_t window_seed(std::uint64_t base_seed, std::size_t window);

/// One ensemble of `members` samples per window.
std::vector<SampleEnsemble> sample(const GenModel& model, std::span<const data::TimeSeriesWindow> windows,
                                   const Prior* prior, std::size_t members, std::uint64_t base_seed);

}  // namespace cwgen::generative
