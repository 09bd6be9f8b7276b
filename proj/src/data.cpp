#include "cwgen/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

#include "cwgen/errors.hpp"

namespace cwgen::data {

namespace {

constexpr std::size_t kBurnIn = 200;

std::vector<double> expand_coeffs(const SyntheticConfig& c) {
  if (c.var_coeff.size() == 1) return std::vector<double>(c.dim, c.var_coeff.front());
  if (c.var_coeff.size() != c.dim) {
    throw ContractViolation("generate_synthetic: var_coeff needs 1 or " + std::to_string(c.dim) + " entries");
  }
  return c.var_coeff;
}

double scale_at(const SyntheticConfig& c, long t) {
  const double phase = 2.0 * std::numbers::pi * static_cast<double>(t) / static_cast<double>(c.vol_period);
  return c.noise_scale * (1.0 + c.vol_amplitude * std::sin(phase));
}

}  // namespace

SyntheticSeries generate_synthetic(const SyntheticConfig& c, std::uint64_t seed) {
  if (c.dim == 0 || c.length == 0 || c.season_period == 0 || c.vol_period == 0) {
    throw ContractViolation("generate_synthetic: dim, length and periods must be positive");
  }
  const std::vector<double> phi = expand_coeffs(c);
  for (double p : phi) {
    if (!(std::abs(p) < 1.0)) {
      throw ContractViolation("generate_synthetic: VAR coefficients must have spectral radius < 1");
    }
  }
  if (c.vol_amplitude < 0.0 || c.vol_amplitude >= 1.0) {
    throw ContractViolation("generate_synthetic: vol_amplitude must lie in [0, 1)");
  }
  if (c.noise_scale < 0.0) throw ContractViolation("generate_synthetic: noise_scale must be non-negative");
  const double rho_lo = c.dim > 1 ? -1.0 / static_cast<double>(c.dim - 1) : -1.0;
  if (!(c.correlation > rho_lo && c.correlation < 1.0)) {
    throw ContractViolation("generate_synthetic: correlation outside the positive-definite range");
  }

  const std::size_t d = c.dim, n = c.length;
  SyntheticSeries out;
  out.var_coeff = phi;
  out.innovation_corr = Matrix(d, d, c.correlation);
  for (std::size_t i = 0; i < d; ++i) out.innovation_corr(i, i) = 1.0;
  const Matrix k = linalg::cholesky(out.innovation_corr);

  out.deterministic = Matrix(d, n);
  for (std::size_t i = 0; i < d; ++i) {
    const double phase = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(d);
    for (std::size_t t = 0; t < n; ++t) {
      const double arg = 2.0 * std::numbers::pi * static_cast<double>(t) / static_cast<double>(c.season_period);
      out.deterministic(i, t) = c.trend_slope * static_cast<double>(t) + c.season_amplitude * std::sin(arg + phase);
    }
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<double> state(d, 0.0), xi(d);
  Matrix cov(d, d);
  out.noise = Matrix(d, n);
  out.scale.resize(n);
  out.noise_cov.reserve(n);
  for (long t = -static_cast<long>(kBurnIn); t < static_cast<long>(n); ++t) {
    const double s = scale_at(c, t);
    for (double& x : xi) x = normal(rng);
    const std::vector<double> eta = k * std::span<const double>(xi);
    for (std::size_t i = 0; i < d; ++i) state[i] = phi[i] * state[i] + s * eta[i];
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j)
        cov(i, j) = phi[i] * phi[j] * cov(i, j) + s * s * out.innovation_corr(i, j);
    if (t >= 0) {
      const auto tt = static_cast<std::size_t>(t);
      out.scale[tt] = s;
      out.noise.set_column(tt, state);
      out.noise_cov.push_back(cov);
    }
  }

  out.series.values = out.deterministic + out.noise;
  for (std::size_t i = 0; i < d; ++i) out.series.names.push_back("x" + std::to_string(i));
  return out;
}

Matrix true_conditional_mean(const SyntheticSeries& s, std::size_t last, std::size_t horizon) {
  const std::size_t d = s.series.dim();
  if (last + horizon >= s.series.length()) throw ContractViolation("true_conditional_mean: horizon past series end");
  Matrix out(d, horizon);
  for (std::size_t k = 1; k <= horizon; ++k)
    for (std::size_t i = 0; i < d; ++i)
      out(i, k - 1) = s.deterministic(i, last + k) + std::pow(s.var_coeff[i], static_cast<double>(k)) * s.noise(i, last);
  return out;
}

std::vector<Matrix> true_conditional_cov(const SyntheticSeries& s, std::size_t last, std::size_t horizon) {
  const std::size_t d = s.series.dim();
  if (last + horizon >= s.series.length()) throw ContractViolation("true_conditional_cov: horizon past series end");
  std::vector<Matrix> out;
  for (std::size_t k = 1; k <= horizon; ++k) {
    Matrix m(d, d);
    for (std::size_t j = 1; j <= k; ++j) {
      const double sj = s.scale[last + j];
      const double lag = static_cast<double>(k - j);
      for (std::size_t p = 0; p < d; ++p)
        for (std::size_t q = 0; q < d; ++q)
          m(p, q) += std::pow(s.var_coeff[p], lag) * std::pow(s.var_coeff[q], lag) * sj * sj * s.innovation_corr(p, q);
    }
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<Matrix> expected_sliding_window_cov(const SyntheticSeries& s, std::size_t first, std::size_t horizon,
                                                std::size_t w) {
  if (w < 3 || w % 2 == 0) throw ContractViolation("expected_sliding_window_cov: window must be odd and >= 3");
  if (first + horizon > s.series.length()) throw ContractViolation("expected_sliding_window_cov: range past end");
  const std::size_t d = s.series.dim(), half = (w - 1) / 2;
  // Cov(n_a, n_b) for a >= b is Phi^(a-b) Cov(n_b).
  auto cross = [&](std::size_t a, std::size_t b, std::size_t p, std::size_t q) {
    if (a >= b) return std::pow(s.var_coeff[p], static_cast<double>(a - b)) * s.noise_cov[b](p, q);
    return std::pow(s.var_coeff[q], static_cast<double>(b - a)) * s.noise_cov[a](p, q);
  };
  std::vector<Matrix> out;
  for (std::size_t t = 0; t < horizon; ++t) {
    const std::size_t lo = t >= half ? t - half : 0;
    const std::size_t hi = std::min(horizon - 1, t + half);
    const double n = static_cast<double>(hi - lo + 1);
    Matrix m(d, d);
    for (std::size_t p = 0; p < d; ++p) {
      for (std::size_t q = 0; q < d; ++q) {
        double diag = 0.0, all = 0.0;
        for (std::size_t a = lo; a <= hi; ++a) {
          diag += s.noise_cov[first + a](p, q);
          for (std::size_t b = lo; b <= hi; ++b) all += cross(first + a, first + b, p, q);
        }
        m(p, q) = diag / n - all / (n * n);
      }
    }
    out.push_back(std::move(m));
  }
  return out;
}

namespace {

std::string trim(std::string s) {
  const auto notspace = [](unsigned char ch) { return !std::isspace(ch); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), notspace));
  s.erase(std::find_if(s.rbegin(), s.rend(), notspace).base(), s.end());
  return s;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

Series load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("load_csv: cannot open '" + path.string() + "'");
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header = split_fields(trim(line));
      break;
    }
  }
  if (header.empty()) throw DataError("load_csv: '" + path.string() + "' is empty");
  const std::size_t skip = schema.timestamp_column ? 1 : 0;
  if (header.size() <= skip) throw DataError("load_csv: header has no variable columns");

  Series out;
  out.names.assign(header.begin() + static_cast<long>(skip), header.end());
  const std::size_t d = out.names.size();
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto fields = split_fields(t);
    if (fields.size() != header.size()) {
      throw DataError("load_csv: line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                      " fields, found " + std::to_string(fields.size()));
    }
    std::vector<double> row(d);
    for (std::size_t j = 0; j < d; ++j) {
      const std::string& cell = fields[j + skip];
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (cell.empty() || end != cell.c_str() + cell.size() || !std::isfinite(v)) {
        throw DataError("load_csv: line " + std::to_string(line_no) + ", column '" + out.names[j] +
                        "': cannot parse '" + cell + "' as a number");
      }
      row[j] = v;
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError("load_csv: '" + path.string() + "' has a header but no data rows");
  out.values = Matrix(d, rows.size());
  for (std::size_t t = 0; t < rows.size(); ++t)
    for (std::size_t i = 0; i < d; ++i) out.values(i, t) = rows[t][i];
  return out;
}

void write_csv(const std::filesystem::path& path, const Series& series) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("write_csv: cannot open '" + path.string() + "'");
  for (std::size_t i = 0; i < series.dim(); ++i) {
    if (i) out << ',';
    out << (i < series.names.size() ? series.names[i] : "x" + std::to_string(i));
  }
  out << '\n' << std::setprecision(17);
  for (std::size_t t = 0; t < series.length(); ++t) {
    for (std::size_t i = 0; i < series.dim(); ++i) {
      if (i) out << ',';
      out << series.values(i, t);
    }
    out << '\n';
  }
}

namespace {

Series columns(const Series& s, std::size_t begin, std::size_t len) {
  Series out;
  out.values = Matrix(s.dim(), len);
  for (std::size_t i = 0; i < s.dim(); ++i)
    for (std::size_t t = 0; t < len; ++t) out.values(i, t) = s.values(i, begin + t);
  out.names = s.names;
  out.offset = s.offset + begin;
  return out;
}

}  // namespace

Splits split_and_normalize(const Series& series, const SplitSpec& spec) {
  const double total = spec.ratios[0] + spec.ratios[1] + spec.ratios[2];
  if (!(spec.ratios[0] > 0.0 && spec.ratios[1] > 0.0 && spec.ratios[2] > 0.0)) {
    throw ContractViolation("split_and_normalize: ratios must be positive");
  }
  const std::size_t n = series.length();
  const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(n) * spec.ratios[0] / total));
  const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(n) * spec.ratios[1] / total));
  const std::size_t n_test = n - n_train - n_val;
  const std::size_t need = spec.history + spec.horizon;
  const char* names[] = {"train", "val", "test"};
  const std::size_t lens[] = {n_train, n_val, n_test};
  for (int k = 0; k < 3; ++k) {
    if (lens[k] < need) {
      throw DataError(std::string("split_and_normalize: ") + names[k] + " split has " + std::to_string(lens[k]) +
                      " steps, fewer than history + horizon = " + std::to_string(need));
    }
  }

  Splits out{columns(series, 0, n_train), columns(series, n_train, n_val), columns(series, n_train + n_val, n_test)};

  const std::size_t d = series.dim();
  std::vector<double> mean(d), sd(d);
  for (std::size_t i = 0; i < d; ++i) {
    double m = 0.0;
    for (std::size_t t = 0; t < n_train; ++t) m += out.train.values(i, t);
    m /= static_cast<double>(n_train);
    double v = 0.0;
    for (std::size_t t = 0; t < n_train; ++t) v += (out.train.values(i, t) - m) * (out.train.values(i, t) - m);
    v /= static_cast<double>(n_train);
    if (!(std::sqrt(v) > 1e-12 * std::max(1.0, std::abs(m)))) {
      const std::string name = i < series.names.size() ? series.names[i] : "x" + std::to_string(i);
      throw DataError("split_and_normalize: channel '" + name + "' is degenerate (zero variance on the train split)");
    }
    mean[i] = m;
    sd[i] = std::sqrt(v);
  }
  for (Series* s : {&out.train, &out.val, &out.test}) {
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t t = 0; t < s->length(); ++t) s->values(i, t) = (s->values(i, t) - mean[i]) / sd[i];
    s->mean = mean;
    s->std = sd;
  }
  return out;
}

void apply_level_shift(Series& series, double delta) {
  for (double& v : series.values.data()) v += delta;
}

std::vector<TimeSeriesWindow> make_windows(const Series& series, std::size_t history, std::size_t horizon,
                                           WindowMode mode) {
  if (history == 0 || horizon == 0) throw ContractViolation("make_windows: lengths must be positive");
  const std::size_t n = series.length(), span = history + horizon;
  if (n < span) {
    throw DataError("make_windows: series of length " + std::to_string(n) + " is shorter than history + horizon = " +
                    std::to_string(span));
  }
  const std::size_t stride = mode == WindowMode::kTraining ? 1 : span;
  const std::size_t count = (n - span) / stride + 1;
  std::vector<TimeSeriesWindow> out;
  out.reserve(count);
  for (std::size_t w = 0; w < count; ++w) {
    const std::size_t s = w * stride;
    TimeSeriesWindow win{Matrix(series.dim(), history), Matrix(series.dim(), horizon), series.offset + s};
    for (std::size_t i = 0; i < series.dim(); ++i) {
      for (std::size_t t = 0; t < history; ++t) win.history(i, t) = series.values(i, s + t);
      for (std::size_t t = 0; t < horizon; ++t) win.future(i, t) = series.values(i, s + history + t);
    }
    out.push_back(std::move(win));
  }
  return out;
}

std::vector<double> to_time_major(const Matrix& block) {
  std::vector<double> out(block.rows() * block.cols());
  for (std::size_t t = 0; t < block.cols(); ++t)
    for (std::size_t i = 0; i < block.rows(); ++i) out[t * block.rows() + i] = block(i, t);
  return out;
}

Matrix from_time_major(std::span<const double> flat, std::size_t dim, std::size_t length) {
  if (flat.size() != dim * length) throw ContractViolation("from_time_major: length mismatch");
  Matrix out(dim, length);
  for (std::size_t t = 0; t < length; ++t)
    for (std::size_t i = 0; i < dim; ++i) out(i, t) = flat[t * dim + i];
  return out;
}

}  // namespace cwgen::data
