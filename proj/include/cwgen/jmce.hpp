#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cwgen/data.hpp"
#include "cwgen/linalg.hpp"
#include "cwgen/nn/backbone.hpp"
#include "cwgen/nn/graph.hpp"
#include "cwgen/nn/params.hpp"

namespace cwgen::jmce {

using linalg::Matrix;

/// Conditional mean (d x T_f) and per-step lower-triangular factors L_t with
/// Sigma_t = L_t L_t^T.
struct JmceOutput {
  Matrix mean;
  std::vector<Matrix> factors;

  std::size_t dim() const { return mean.rows(); }
  std::size_t horizon() const { return mean.cols(); }
  Matrix covariance(std::size_t t) const;
};

struct CovTargets {
  std::vector<Matrix> cov;
  std::size_t window = 0;
};

struct LossBreakdown {
  double l2 = 0.0;
  double l_f = 0.0;
  double l_svd = 0.0;
  double eigen_penalty = 0.0;
  double total = 0.0;
};

struct LossWeights {
  double lambda_min = 0.1;
  double w_eigen = 50.0;
};

/// Covariance over the centered window [t - (w-1)/2, t + (w-1)/2] clipped to the
/// horizon, using the window's own mean and divisor n (population form).
/// Throws ContractViolation for even w or w < 3.
CovTargets sliding_window_cov(const Matrix& x0, std::size_t w);

/// sum_i ReLU(lambda_min - lambda_i(sigma_hat)).
double eigen_penalty(const Matrix& sigma_hat, double lambda_min);

/// Loss of one window:
///   total = l2 + l_svd + lambda_min sqrt(d T_f) l_f + w_eigen penalty
/// with l2 = ||X0 - mu||^2, l_f = sum_t ||S~_t - S^_t||_F, l_svd = sum_t ||S~_t - S^_t||_N
/// and penalty = sum_t R(S^_t).
LossBreakdown jmce_loss(const JmceOutput& output, const Matrix& x0, const CovTargets& targets,
                        const LossWeights& weights);

/// Batch mean of the per-window losses.
LossBreakdown jmce_loss(std::span<const JmceOutput> outputs, std::span<const Matrix> x0,
                        std::span<const CovTargets> targets, const LossWeights& weights);

// Graph ops over batches of small matrices stored one per row.

/// [N, d(d+1)/2] packed lower-triangular rows -> [N, d*d] rows of L L^T.
nn::Var lower_tri_gram(nn::Var packed, std::size_t d);
/// Row-wise Frobenius norm, [N, k] -> [N, 1]. The subgradient at 0 is 0.
nn::Var row_frobenius(nn::Var rows);
/// Row-wise nuclear norm of symmetric d x d rows; gradient V sign(Lambda) V^T.
nn::Var row_sym_nuclear(nn::Var rows, std::size_t d);
/// Row-wise eigen penalty of symmetric d x d rows; gradient -sum_{lambda_i < lambda_min} v_i v_i^T.
nn::Var row_eigen_penalty(nn::Var rows, std::size_t d, double lambda_min);

std::size_t packed_size(std::size_t d);

struct JmceConfig {
  std::size_t dim = 3;
  std::size_t history = 24;
  std::size_t horizon = 12;
  std::size_t window = 15;
  double lambda_min = 0.1;
  double w_eigen = 50.0;
  std::size_t hidden = 24;
  std::size_t projection = 16;
  std::size_t width = 32;
  double diag_init = 1.0;     // initial bias of the diagonal entries of L
  bool skip_factors = false;  // linear skip from the history into the factor outputs
  std::size_t epochs = 40;
  std::size_t batch = 32;
  double lr = 1e-3;
  double final_lr_ratio = 0.05;  // cosine decay of the learning rate to lr * final_lr_ratio
  std::uint64_t seed = 0;

  LossWeights weights() const { return {lambda_min, w_eigen}; }
  nn::BackboneSpec backbone() const;
};

class JmceModel {
 public:
  explicit JmceModel(const JmceConfig& config);

  struct Forward {
    nn::Var mean;     // [B * T_f, d], rows ordered window-major then step
    nn::Var factors;  // [B * T_f, d(d+1)/2]
  };

  /// history: [B, T_h * d] time-major.
  Forward forward(nn::Graph& g, const nn::Tensor& history);
  Forward forward(nn::Graph& g, const nn::Tensor& history) const;

  JmceOutput predict(const Matrix& history) const;
  std::vector<JmceOutput> predict(std::span<const data::TimeSeriesWindow> windows) const;

  const JmceConfig& config() const { return config_; }
  nn::NetParams& params() { return params_; }
  const nn::NetParams& params() const { return params_; }

  /// Parameters plus a "meta.jmce" tensor carrying (d, T_h, T_f, w, lambda_min, w_eigen, hidden, projection,
  /// width, diag_init, skip_factors).
  void save(const std::filesystem::path& path) const;
  static JmceModel load(const std::filesystem::path& path);

 private:
  JmceConfig config_;
  nn::NetParams params_;
  nn::Backbone backbone_;
};

/// Rows of a forward pass to per-window outputs.
std::vector<JmceOutput> unpack(const nn::Tensor& mean, const nn::Tensor& factors, std::size_t dim,
                               std::size_t horizon);

struct TrainBatch {
  nn::Tensor history;  // [B, T_h d]
  nn::Tensor future;   // [B T_f, d]
  nn::Tensor targets;  // [B T_f, d d]
  std::size_t size = 0;
};

TrainBatch make_batch(std::span<const data::TimeSeriesWindow* const> windows, std::span<const CovTargets* const> targets);

struct GraphLoss {
  nn::Var total;
  LossBreakdown parts;
};

/// Graph version of the batch-mean loss; parts must match jmce_loss().
GraphLoss graph_loss(nn::Graph& g, const JmceModel::Forward& fwd, const TrainBatch& batch, std::size_t dim,
                     std::size_t horizon, const LossWeights& weights);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_total = 0.0;
  LossBreakdown val;
};

struct TrainResult {
  JmceModel model;
  std::vector<EpochRecord> epochs;  // entry 0 is the untrained model
  std::size_t best_epoch = 0;
  bool aborted = false;
  std::string abort_reason;
};

/// Adam training with per-epoch validation; returns the parameters of the epoch
/// with the lowest validation total. A non-finite loss stops training and
/// returns the best checkpoint seen so far with `aborted` set.
TrainResult train_jmce(std::span<const data::TimeSeriesWindow> train, std::span<const data::TimeSeriesWindow> val,
                       const JmceConfig& config);

/// Validation loss of a model over windows (batch mean).
LossBreakdown evaluate(const JmceModel& model, std::span<const data::TimeSeriesWindow> windows);

}  // namespace cwgen::jmce
