#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cwgen/linalg.hpp"

namespace cwgen::data {

using linalg::Matrix;

/// A multivariate series stored d x T. After split_and_normalize, `mean` and
/// `std` hold the train-split statistics used for the z-score.
struct Series {
  Matrix values;
  std::vector<double> mean;
  std::vector<double> std;
  std::vector<std::string> names;
  std::size_t offset = 0;  // index of column 0 within the source series

  std::size_t dim() const { return values.rows(); }
  std::size_t length() const { return values.cols(); }
};

/// Generator settings for the heteroscedastic test series
///   X_t = trend_t + season_t + n_t,   n_t = Phi n_{t-1} + s_t K xi_t
/// with Phi = diag(var_coeff), K K^T the equicorrelation matrix with
/// off-diagonal `correlation`, and s_t = noise_scale (1 + vol_amplitude sin(2 pi t / vol_period)).
struct SyntheticConfig {
  std::size_t dim = 3;
  std::size_t length = 3000;
  double trend_slope = 2e-4;
  double season_amplitude = 1.0;
  std::size_t season_period = 24;
  std::vector<double> var_coeff = {0.5};  // one entry per dimension, or one broadcast entry
  double noise_scale = 0.6;
  double vol_amplitude = 0.7;
  std::size_t vol_period = 24;
  double correlation = 0.7;
  /// Additive level shift applied to the normalized test split (see pipeline::prepare_dataset).
  double level_shift = 0.0;
};

/// Generated series plus the ground truth the generator knows.
struct SyntheticSeries {
  Series series;
  Matrix deterministic;              // trend + season, d x T
  Matrix noise;                      // n_t, d x T
  std::vector<double> scale;         // s_t
  std::vector<double> var_coeff;     // diagonal of Phi
  Matrix innovation_corr;            // K K^T
  std::vector<Matrix> noise_cov;     // exact Cov(n_t) for every t
};

/// Throws ContractViolation for |var_coeff| >= 1, vol_amplitude outside [0, 1),
/// invalid correlation, or zero extents.
SyntheticSeries generate_synthetic(const SyntheticConfig& config, std::uint64_t seed);

/// E[X_{o+k} | X_{..o}] for k = 1..horizon, where `last` is the index o of the
/// final history column. Returned d x horizon, raw units.
Matrix true_conditional_mean(const SyntheticSeries& s, std::size_t last, std::size_t horizon);

/// Cov(X_{o+k} | X_{..o}) for k = 1..horizon, raw units.
std::vector<Matrix> true_conditional_cov(const SyntheticSeries& s, std::size_t last, std::size_t horizon);

/// Expected sliding-window covariance (centered window of odd width w, clipped,
/// population divisor) of the noise component over columns [first, first + horizon).
std::vector<Matrix> expected_sliding_window_cov(const SyntheticSeries& s, std::size_t first, std::size_t horizon,
                                                std::size_t w);

struct CsvSchema {
  bool timestamp_column = false;  // first column is ignored when set
};

/// Rows are time steps, columns variables, first row a header.
/// Throws DataError with a line number for ragged rows or unparseable cells,
/// and for files without data rows.
Series load_csv(const std::filesystem::path& path, const CsvSchema& schema = {});
void write_csv(const std::filesystem::path& path, const Series& series);

struct SplitSpec {
  std::array<double, 3> ratios = {7.0, 1.0, 2.0};
  std::size_t history = 24;
  std::size_t horizon = 12;

  std::size_t eval_stride() const { return history + horizon; }
};

struct Splits {
  Series train;
  Series val;
  Series test;
};

/// Chronological split with lengths floor(T r_i / sum r) for train and val and
/// the remainder for test, then z-scoring of all three with train statistics.
/// Throws DataError for a zero-variance train channel or a split shorter than
/// history + horizon.
Splits split_and_normalize(const Series& series, const SplitSpec& spec);

void apply_level_shift(Series& series, double delta);

struct TimeSeriesWindow {
  Matrix history;  // d x T_h
  Matrix future;   // d x T_f
  std::size_t start = 0;  // absolute index of the first history column
};

enum class WindowMode { kTraining, kEvaluation };

/// Training mode uses stride 1, evaluation mode stride T_h + T_f (non-overlapping).
/// Window count is floor((T - T_h - T_f) / stride) + 1.
std::vector<TimeSeriesWindow> make_windows(const Series& series, std::size_t history, std::size_t horizon,
                                           WindowMode mode);

/// d x T block to time-major flat storage (element (i, t) at t * d + i).
std::vector<double> to_time_major(const Matrix& block);
Matrix from_time_major(std::span<const double> flat, std::size_t dim, std::size_t length);

}  // namespace cwgen::data
