#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cwgen/linalg.hpp"

namespace cwgen::metrics {

using linalg::Matrix;

/// Ensemble members are d x T_f matrices; the truth has the same shape.

/// Per scalar (1/m) sum_i |x_i - y| - (1/(2 m^2)) sum_ij |x_i - x_j|, averaged over d x T_f.
/// Throws ContractViolation for m < 2.
double crps(std::span<const Matrix> members, const Matrix& truth);

/// Quantile interval coverage error with `bins` equal-probability intervals per scalar.
/// Interval edges are the ensemble percentiles at 0, 1/bins, ..., 1 (linear interpolation);
/// truths outside the ensemble range count toward the first or last interval.
/// Throws ContractViolation unless m is divisible by bins.
double qice(std::span<const Matrix> members, const Matrix& truth, std::size_t bins = 10);

struct ProbCorr {
  double value = 0.0;     // mean over used steps of ||Corr_gen - Corr_true||_F / d
  std::size_t used = 0;
  std::size_t skipped = 0;  // steps with a zero-variance dimension on either side
};

/// Correlation of the ensemble across dimensions at each step against the
/// correlation implied by the sliding-window covariance (window w) of the truth.
/// Throws ContractViolation for d < 2.
ProbCorr prob_corr(std::span<const Matrix> members, const Matrix& truth, std::size_t w);

Matrix ensemble_mean(std::span<const Matrix> members);
Matrix ensemble_std(std::span<const Matrix> members);

/// Squared / absolute error of the ensemble mean, averaged over d x T_f.
double prob_mse(std::span<const Matrix> members, const Matrix& truth);
double prob_mae(std::span<const Matrix> members, const Matrix& truth);

/// Per-dimension (mean, std, lag-1 autocorrelation, min, max) followed by the
/// upper-triangular cross-correlations (i < j). Zero-variance cases contribute 0.
std::vector<double> window_features(const Matrix& x);

struct Frechet {
  double value = 0.0;
  bool jittered = false;
};

inline constexpr double kFeatureJitter = 1e-6;

/// ||mu1 - mu2||^2 + tr(S1 + S2 - 2 (S1^{1/2} S2 S1^{1/2})^{1/2}). When either
/// covariance is singular, kFeatureJitter I is added to both and the result is flagged.
Frechet frechet_distance(const std::vector<double>& mu1, const Matrix& s1, const std::vector<double>& mu2,
                         const Matrix& s2);

/// Mean and (population) covariance of feature rows.
void feature_moments(const std::vector<std::vector<double>>& rows, std::vector<double>& mean, Matrix& cov);

/// Frechet distance between the features of every generated member of every
/// window and the features of the true windows. Needs at least two windows.
Frechet cond_fid(std::span<const std::vector<Matrix>> ensembles, std::span<const Matrix> truths);

struct WindowScores {
  double crps = 0.0;
  double qice = 0.0;
  ProbCorr prob_corr;
  double prob_mse = 0.0;
  double prob_mae = 0.0;
};

WindowScores score_window(std::span<const Matrix> members, const Matrix& truth, std::size_t w, std::size_t bins);

/// Mean and sample standard deviation (n - 1 divisor; 0 for n = 1).
struct Summary {
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
};
Summary summarize(std::span<const double> values);

struct MetricRow {
  std::string metric;
  std::string model;
  std::string variant;  // "raw" or "cw"
  Summary summary;
};

struct Comparison {
  std::string model;
  std::string metric;
  double raw = 0.0;
  double cw = 0.0;
};

/// Pairs raw and cw rows sharing (model, metric). Throws ContractViolation for a
/// row without a partner or for duplicates.
std::vector<Comparison> pair_rows(std::span<const MetricRow> rows);

struct WinRate {
  std::size_t wins = 0;
  std::size_t total = 0;
  double rate() const { return total ? static_cast<double>(wins) / static_cast<double>(total) : 0.0; }
};

/// Fraction of comparisons where cw is strictly lower than raw.
WinRate win_rate(std::span<const Comparison> comparisons);

}  // namespace cwgen::metrics
