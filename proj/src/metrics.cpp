#include "cwgen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <utility>

#include "cwgen/errors.hpp"
#include "cwgen/jmce.hpp"

namespace cwgen::metrics {

namespace {

void check_ensemble(std::span<const Matrix> members, const Matrix& truth, std::size_t min_members, const char* op) {
  if (members.size() < min_members) {
    throw ContractViolation(std::string(op) + ": need at least " + std::to_string(min_members) + " members");
  }
  for (const Matrix& m : members) {
    if (m.rows() != truth.rows() || m.cols() != truth.cols()) {
      throw ContractViolation(std::string(op) + ": member shape differs from the truth");
    }
  }
}

std::vector<double> scalar_samples(std::span<const Matrix> members, std::size_t k) {
  std::vector<double> v(members.size());
  for (std::size_t i = 0; i < members.size(); ++i) v[i] = members[i].data()[k];
  return v;
}

}  // namespace

double crps(std::span<const Matrix> members, const Matrix& truth) {
  check_ensemble(members, truth, 2, "crps");
  const double m = static_cast<double>(members.size());
  const std::size_t n = truth.data().size();
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    auto x = scalar_samples(members, k);
    const double y = truth.data()[k];
    double abs_err = 0.0;
    for (double v : x) abs_err += std::abs(v - y);
    std::sort(x.begin(), x.end());
    // sum_ij |x_i - x_j| = 2 sum_k (2k - m + 1) x_(k)
    double pair = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) pair += (2.0 * static_cast<double>(i) - m + 1.0) * x[i];
    pair *= 2.0;
    acc += abs_err / m - pair / (2.0 * m * m);
  }
  return acc / static_cast<double>(n);
}

double qice(std::span<const Matrix> members, const Matrix& truth, std::size_t bins) {
  check_ensemble(members, truth, 2, "qice");
  if (bins == 0 || members.size() % bins != 0) {
    throw ContractViolation("qice: member count must be divisible by the bin count");
  }
  const std::size_t n = truth.data().size();
  const double m1 = static_cast<double>(members.size() - 1);
  std::vector<std::size_t> counts(bins, 0);
  std::vector<double> edges(bins + 1);
  for (std::size_t k = 0; k < n; ++k) {
    auto x = scalar_samples(members, k);
    std::sort(x.begin(), x.end());
    for (std::size_t b = 0; b <= bins; ++b) {
      const double pos = m1 * static_cast<double>(b) / static_cast<double>(bins);
      const auto lo = static_cast<std::size_t>(std::floor(pos));
      const std::size_t hi = std::min(lo + 1, x.size() - 1);
      edges[b] = x[lo] + (pos - static_cast<double>(lo)) * (x[hi] - x[lo]);
    }
    const double y = truth.data()[k];
    std::size_t membership = 0;
    for (double e : edges) membership += y >= e ? 1 : 0;
    membership = std::clamp<std::size_t>(membership, 1, bins);
    ++counts[membership - 1];
  }
  // sum_b |r_b - 1/M| / M with r_b = c_b / N, kept in integers until the end.
  const auto big_m = static_cast<long long>(bins), big_n = static_cast<long long>(n);
  long long num = 0;
  for (std::size_t c : counts) num += std::llabs(big_m * static_cast<long long>(c) - big_n);
  return static_cast<double>(num) / static_cast<double>(big_m * big_m * big_n);
}

namespace {

// Correlation from a covariance; false if any variance is zero.
bool correlation(const Matrix& cov, Matrix& corr) {
  const std::size_t d = cov.rows();
  corr = Matrix(d, d);
  for (std::size_t i = 0; i < d; ++i)
    if (!(cov(i, i) > 0.0)) return false;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) corr(i, j) = cov(i, j) / std::sqrt(cov(i, i) * cov(j, j));
  return true;
}

}  // namespace

ProbCorr prob_corr(std::span<const Matrix> members, const Matrix& truth, std::size_t w) {
  check_ensemble(members, truth, 2, "prob_corr");
  const std::size_t d = truth.rows(), tf = truth.cols();
  if (d < 2) throw ContractViolation("prob_corr: needs at least two dimensions");
  const auto target = jmce::sliding_window_cov(truth, w);
  const double m = static_cast<double>(members.size());
  ProbCorr out;
  double acc = 0.0;
  for (std::size_t t = 0; t < tf; ++t) {
    std::vector<double> mu(d, 0.0);
    for (const Matrix& x : members)
      for (std::size_t i = 0; i < d; ++i) mu[i] += x(i, t);
    for (double& v : mu) v /= m;
    Matrix cov(d, d);
    for (const Matrix& x : members)
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) cov(i, j) += (x(i, t) - mu[i]) * (x(j, t) - mu[j]);
    Matrix cg, ct;
    if (!correlation(cov, cg) || !correlation(target.cov[t], ct)) {
      ++out.skipped;
      continue;
    }
    acc += linalg::frobenius_norm(cg - ct) / static_cast<double>(d);
    ++out.used;
  }
  out.value = out.used ? acc / static_cast<double>(out.used) : 0.0;
  return out;
}

Matrix ensemble_mean(std::span<const Matrix> members) {
  if (members.empty()) throw ContractViolation("ensemble_mean: empty ensemble");
  Matrix mean(members[0].rows(), members[0].cols());
  for (const Matrix& x : members) {
    if (x.rows() != mean.rows() || x.cols() != mean.cols()) throw ContractViolation("ensemble_mean: ragged ensemble");
    for (std::size_t k = 0; k < x.data().size(); ++k) mean.data()[k] += x.data()[k];
  }
  for (double& v : mean.data()) v /= static_cast<double>(members.size());
  return mean;
}

Matrix ensemble_std(std::span<const Matrix> members) {
  const Matrix mean = ensemble_mean(members);
  Matrix sd(mean.rows(), mean.cols());
  for (const Matrix& x : members)
    for (std::size_t k = 0; k < x.data().size(); ++k) {
      const double e = x.data()[k] - mean.data()[k];
      sd.data()[k] += e * e;
    }
  for (double& v : sd.data()) v = std::sqrt(v / static_cast<double>(members.size()));
  return sd;
}

double prob_mse(std::span<const Matrix> members, const Matrix& truth) {
  check_ensemble(members, truth, 1, "prob_mse");
  const Matrix mean = ensemble_mean(members);
  double acc = 0.0;
  for (std::size_t k = 0; k < truth.data().size(); ++k) {
    const double e = mean.data()[k] - truth.data()[k];
    acc += e * e;
  }
  return acc / static_cast<double>(truth.data().size());
}

double prob_mae(std::span<const Matrix> members, const Matrix& truth) {
  check_ensemble(members, truth, 1, "prob_mae");
  const Matrix mean = ensemble_mean(members);
  double acc = 0.0;
  for (std::size_t k = 0; k < truth.data().size(); ++k) acc += std::abs(mean.data()[k] - truth.data()[k]);
  return acc / static_cast<double>(truth.data().size());
}

std::vector<double> window_features(const Matrix& x) {
  const std::size_t d = x.rows(), t = x.cols();
  if (d == 0 || t < 2) throw ContractViolation("window_features: need at least two time steps");
  std::vector<double> f;
  std::vector<double> mean(d), sd(d);
  for (std::size_t i = 0; i < d; ++i) {
    double s = 0.0, lo = x(i, 0), hi = x(i, 0);
    for (std::size_t k = 0; k < t; ++k) {
      s += x(i, k);
      lo = std::min(lo, x(i, k));
      hi = std::max(hi, x(i, k));
    }
    mean[i] = s / static_cast<double>(t);
    double v = 0.0, lag = 0.0;
    for (std::size_t k = 0; k < t; ++k) v += (x(i, k) - mean[i]) * (x(i, k) - mean[i]);
    for (std::size_t k = 1; k < t; ++k) lag += (x(i, k) - mean[i]) * (x(i, k - 1) - mean[i]);
    sd[i] = std::sqrt(v / static_cast<double>(t));
    f.insert(f.end(), {mean[i], sd[i], v > 0.0 ? lag / v : 0.0, lo, hi});
  }
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i + 1; j < d; ++j) {
      double c = 0.0;
      for (std::size_t k = 0; k < t; ++k) c += (x(i, k) - mean[i]) * (x(j, k) - mean[j]);
      const double denom = sd[i] * sd[j] * static_cast<double>(t);
      f.push_back(denom > 0.0 ? c / denom : 0.0);
    }
  }
  return f;
}

Frechet frechet_distance(const std::vector<double>& mu1, const Matrix& s1, const std::vector<double>& mu2,
                         const Matrix& s2) {
  const std::size_t k = mu1.size();
  if (mu2.size() != k || s1.rows() != k || s2.rows() != k) throw ContractViolation("frechet_distance: size mismatch");
  Frechet out;
  Matrix a = linalg::symmetrize(s1), b = linalg::symmetrize(s2);
  if (linalg::min_eigenvalue(a) <= 1e-12 || linalg::min_eigenvalue(b) <= 1e-12) {
    for (std::size_t i = 0; i < k; ++i) {
      a(i, i) += kFeatureJitter;
      b(i, i) += kFeatureJitter;
    }
    out.jittered = true;
  }
  const Matrix ra = linalg::sym_power(a, linalg::RootPower::kSqrt);
  const Matrix inner = linalg::symmetrize(ra * b * ra);
  const Matrix root = linalg::sym_power(inner, linalg::RootPower::kSqrt);
  double mean_term = 0.0;
  for (std::size_t i = 0; i < k; ++i) mean_term += (mu1[i] - mu2[i]) * (mu1[i] - mu2[i]);
  out.value = std::max(0.0, mean_term + linalg::trace(a) + linalg::trace(b) - 2.0 * linalg::trace(root));
  return out;
}

void feature_moments(const std::vector<std::vector<double>>& rows, std::vector<double>& mean, Matrix& cov) {
  if (rows.empty()) throw ContractViolation("feature_moments: no rows");
  const std::size_t k = rows[0].size();
  mean.assign(k, 0.0);
  for (const auto& r : rows) {
    if (r.size() != k) throw ContractViolation("feature_moments: ragged rows");
    for (std::size_t i = 0; i < k; ++i) mean[i] += r[i];
  }
  for (double& v : mean) v /= static_cast<double>(rows.size());
  cov = Matrix(k, k);
  for (const auto& r : rows)
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = i; j < k; ++j) cov(i, j) += (r[i] - mean[i]) * (r[j] - mean[j]);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i; j < k; ++j) {
      cov(i, j) /= static_cast<double>(rows.size());
      cov(j, i) = cov(i, j);
    }
}

Frechet cond_fid(std::span<const std::vector<Matrix>> ensembles, std::span<const Matrix> truths) {
  if (truths.size() < 2 || ensembles.size() != truths.size()) {
    throw ContractViolation("cond_fid: need at least two windows with one ensemble each");
  }
  std::vector<std::vector<double>> gen, real;
  for (std::size_t w = 0; w < truths.size(); ++w) {
    real.push_back(window_features(truths[w]));
    for (const Matrix& m : ensembles[w]) gen.push_back(window_features(m));
  }
  std::vector<double> mg, mr;
  Matrix sg, sr;
  feature_moments(gen, mg, sg);
  feature_moments(real, mr, sr);
  return frechet_distance(mg, sg, mr, sr);
}

WindowScores score_window(std::span<const Matrix> members, const Matrix& truth, std::size_t w, std::size_t bins) {
  WindowScores s;
  s.crps = crps(members, truth);
  s.qice = qice(members, truth, bins);
  if (truth.rows() >= 2) s.prob_corr = prob_corr(members, truth, w);
  s.prob_mse = prob_mse(members, truth);
  s.prob_mae = prob_mae(members, truth);
  return s;
}

Summary summarize(std::span<const double> values) {
  Summary s;
  s.n = values.size();
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(s.n);
  if (s.n > 1) {
    double acc = 0.0;
    for (double v : values) acc += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(acc / static_cast<double>(s.n - 1));
  }
  return s;
}

std::vector<Comparison> pair_rows(std::span<const MetricRow> rows) {
  std::map<std::pair<std::string, std::string>, std::pair<const MetricRow*, const MetricRow*>> slots;
  std::vector<std::pair<std::string, std::string>> order;
  for (const MetricRow& r : rows) {
    auto key = std::make_pair(r.model, r.metric);
    auto [it, fresh] = slots.try_emplace(key, nullptr, nullptr);
    if (fresh) order.push_back(key);
    const MetricRow*& slot = r.variant == "raw" ? it->second.first : it->second.second;
    if (r.variant != "raw" && r.variant != "cw") throw ContractViolation("pair_rows: unknown variant " + r.variant);
    if (slot != nullptr) throw ContractViolation("pair_rows: duplicate row for " + r.model + "/" + r.metric);
    slot = &r;
  }
  std::vector<Comparison> out;
  for (const auto& key : order) {
    const auto& [raw, cw] = slots[key];
    if (raw == nullptr || cw == nullptr) {
      throw ContractViolation("pair_rows: unpaired entry for " + key.first + "/" + key.second);
    }
    out.push_back({key.first, key.second, raw->summary.mean, cw->summary.mean});
  }
  return out;
}

WinRate win_rate(std::span<const Comparison> comparisons) {
  WinRate w;
  for (const auto& c : comparisons) {
    ++w.total;
    if (c.cw < c.raw) ++w.wins;
  }
  return w;
}

}  // namespace cwgen::metrics
