#include "cwgen/jmce.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

#include "cwgen/errors.hpp"
#include "cwgen/nn/checkpoint.hpp"

namespace cwgen::jmce {

using nn::Graph;
using nn::Tensor;
using nn::Var;

Matrix JmceOutput::covariance(std::size_t t) const {
  const Matrix& l = factors.at(t);
  return l * l.transpose();
}

std::size_t packed_size(std::size_t d) { return d * (d + 1) / 2; }

CovTargets sliding_window_cov(const Matrix& x0, std::size_t w) {
  if (w < 3 || w % 2 == 0) throw ContractViolation("sliding_window_cov: window must be odd and >= 3");
  const std::size_t d = x0.rows(), tf = x0.cols();
  if (d == 0 || tf == 0) throw ContractViolation("sliding_window_cov: empty input");
  const std::size_t half = (w - 1) / 2;
  CovTargets out;
  out.window = w;
  out.cov.reserve(tf);
  std::vector<double> mu(d);
  for (std::size_t t = 0; t < tf; ++t) {
    const std::size_t lo = t >= half ? t - half : 0;
    const std::size_t hi = std::min(tf - 1, t + half);
    const double n = static_cast<double>(hi - lo + 1);
    for (std::size_t i = 0; i < d; ++i) {
      double s = 0.0;
      for (std::size_t k = lo; k <= hi; ++k) s += x0(i, k);
      mu[i] = s / n;
    }
    Matrix c(d, d);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = i; j < d; ++j) {
        double s = 0.0;
        for (std::size_t k = lo; k <= hi; ++k) s += (x0(i, k) - mu[i]) * (x0(j, k) - mu[j]);
        c(i, j) = s / n;
        c(j, i) = c(i, j);
      }
    }
    out.cov.push_back(std::move(c));
  }
  return out;
}

double eigen_penalty(const Matrix& sigma_hat, double lambda_min) {
  const auto eig = linalg::sym_eigen(sigma_hat);
  double r = 0.0;
  for (double l : eig.values) r += std::max(0.0, lambda_min - l);
  return r;
}

namespace {

void finish(LossBreakdown& b, std::size_t d, std::size_t tf, const LossWeights& w) {
  b.total = b.l2 + b.l_svd + w.lambda_min * std::sqrt(static_cast<double>(d * tf)) * b.l_f +
            w.w_eigen * b.eigen_penalty;
}

void check_weights(const LossWeights& w) {
  if (!(w.lambda_min > 0.0)) throw ContractViolation("jmce loss: lambda_min must be positive");
  if (!(w.w_eigen >= 0.0)) throw ContractViolation("jmce loss: w_eigen must be nonnegative");
}

}  // namespace

LossBreakdown jmce_loss(const JmceOutput& output, const Matrix& x0, const CovTargets& targets,
                        const LossWeights& weights) {
  check_weights(weights);
  const std::size_t d = x0.rows(), tf = x0.cols();
  if (output.mean.rows() != d || output.mean.cols() != tf || output.factors.size() != tf ||
      targets.cov.size() != tf) {
    throw ContractViolation("jmce_loss: shape mismatch");
  }
  LossBreakdown b;
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t t = 0; t < tf; ++t) {
      const double e = x0(i, t) - output.mean(i, t);
      b.l2 += e * e;
    }
  }
  for (std::size_t t = 0; t < tf; ++t) {
    if (output.factors[t].rows() != d || targets.cov[t].rows() != d) {
      throw ContractViolation("jmce_loss: factor or target has the wrong size");
    }
    const Matrix s = output.covariance(t);
    const Matrix diff = targets.cov[t] - s;
    b.l_f += linalg::frobenius_norm(diff);
    b.l_svd += linalg::nuclear_norm(diff);
    b.eigen_penalty += eigen_penalty(s, weights.lambda_min);
  }
  finish(b, d, tf, weights);
  return b;
}

LossBreakdown jmce_loss(std::span<const JmceOutput> outputs, std::span<const Matrix> x0,
                        std::span<const CovTargets> targets, const LossWeights& weights) {
  if (outputs.empty() || outputs.size() != x0.size() || outputs.size() != targets.size()) {
    throw ContractViolation("jmce_loss: batch sizes differ or are empty");
  }
  LossBreakdown acc;
  for (std::size_t k = 0; k < outputs.size(); ++k) {
    const LossBreakdown b = jmce_loss(outputs[k], x0[k], targets[k], weights);
    acc.l2 += b.l2;
    acc.l_f += b.l_f;
    acc.l_svd += b.l_svd;
    acc.eigen_penalty += b.eigen_penalty;
  }
  const double n = static_cast<double>(outputs.size());
  acc.l2 /= n;
  acc.l_f /= n;
  acc.l_svd /= n;
  acc.eigen_penalty /= n;
  finish(acc, x0[0].rows(), x0[0].cols(), weights);
  return acc;
}

namespace {

Matrix row_matrix(const Tensor& t, std::size_t r, std::size_t d) {
  Matrix m(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) m(i, j) = t.at(r, i * d + j);
  return m;
}

void require_square_rows(const Tensor& t, std::size_t d, const char* op) {
  if (t.rank() != 2 || t.cols() != d * d) {
    throw ContractViolation(std::string(op) + ": rows must hold d*d entries");
  }
}

// Spectral row op: value f(eig) per row, gradient G(eig) (a d x d matrix) per row.
template <class Value, class Grad>
Var spectral_rows(Var rows, std::size_t d, const char* op, Value value, Grad grad) {
  Graph& g = *rows.graph;
  const Tensor& x = g.value(rows);
  require_square_rows(x, d, op);
  const std::size_t n = x.rows();
  Tensor y = Tensor::matrix(n, 1);
  auto grads = std::make_shared<std::vector<double>>(n * d * d);
  for (std::size_t r = 0; r < n; ++r) {
    const auto eig = linalg::sym_eigen(linalg::symmetrize(row_matrix(x, r, d)));
    y[r] = value(eig);
    const Matrix gm = grad(eig);
    std::copy(gm.data().begin(), gm.data().end(), grads->begin() + static_cast<long>(r * d * d));
  }
  const std::size_t xi = rows.index;
  return g.record(op, std::move(y), {xi}, [xi, n, d, grads](Graph& gr, std::size_t self) {
    const Tensor& gy = gr.grad(self);
    Tensor& gx = gr.grad(xi);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t k = 0; k < d * d; ++k) gx[r * d * d + k] += gy[r] * (*grads)[r * d * d + k];
  });
}

Matrix outer_sum(const linalg::EigenPair& eig, auto weight) {
  const std::size_t d = eig.values.size();
  Matrix m(d, d);
  for (std::size_t k = 0; k < d; ++k) {
    const double w = weight(eig.values[k]);
    if (w == 0.0) continue;
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) m(i, j) += w * eig.vectors(i, k) * eig.vectors(j, k);
  }
  return m;
}

}  // namespace

Var lower_tri_gram(Var packed, std::size_t d) {
  Graph& g = *packed.graph;
  const Tensor& p = g.value(packed);
  const std::size_t q = packed_size(d);
  if (p.rank() != 2 || p.cols() != q) throw ContractViolation("lower_tri_gram: rows must hold d(d+1)/2 entries");
  const std::size_t n = p.rows();
  auto idx = [](std::size_t i, std::size_t j) { return i * (i + 1) / 2 + j; };
  Tensor y = Tensor::matrix(n, d * d);
  for (std::size_t r = 0; r < n; ++r) {
    const double* l = &p[r * q];
    double* s = &y[r * d * d];
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j <= i; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k <= j; ++k) acc += l[idx(i, k)] * l[idx(j, k)];
        s[i * d + j] = acc;
        s[j * d + i] = acc;
      }
    }
  }
  const std::size_t pi = packed.index;
  return g.record("lower_tri_gram", std::move(y), {pi}, [pi, n, d, q, idx](Graph& gr, std::size_t self) {
    const Tensor& gy = gr.grad(self);
    const Tensor& p = gr.value(pi);
    Tensor& gp = gr.grad(pi);
    // dL = (G + G^T) L restricted to the lower triangle.
    for (std::size_t r = 0; r < n; ++r) {
      const double* l = &p[r * q];
      const double* gs = &gy[r * d * d];
      for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t k = 0; k <= i; ++k) {
          double acc = 0.0;
          for (std::size_t j = k; j < d; ++j) acc += (gs[i * d + j] + gs[j * d + i]) * l[idx(j, k)];
          gp[r * q + idx(i, k)] += acc;
        }
      }
    }
  });
}

Var row_frobenius(Var rows) {
  Graph& g = *rows.graph;
  const Tensor& x = g.value(rows);
  if (x.rank() != 2) throw ContractViolation("row_frobenius: expected a rank-2 tensor");
  const std::size_t n = x.rows(), k = x.cols();
  Tensor y = Tensor::matrix(n, 1);
  for (std::size_t r = 0; r < n; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < k; ++c) s += x[r * k + c] * x[r * k + c];
    y[r] = std::sqrt(s);
  }
  const std::size_t xi = rows.index;
  return g.record("row_frobenius", std::move(y), {xi}, [xi, n, k](Graph& gr, std::size_t self) {
    const Tensor& x = gr.value(xi);
    const Tensor& y = gr.value(self);
    const Tensor& gy = gr.grad(self);
    Tensor& gx = gr.grad(xi);
    for (std::size_t r = 0; r < n; ++r) {
      if (y[r] == 0.0) continue;
      for (std::size_t c = 0; c < k; ++c) gx[r * k + c] += gy[r] * x[r * k + c] / y[r];
    }
  });
}

Var row_sym_nuclear(Var rows, std::size_t d) {
  return spectral_rows(
      rows, d, "row_sym_nuclear",
      [](const linalg::EigenPair& e) {
        double s = 0.0;
        for (double l : e.values) s += std::abs(l);
        return s;
      },
      [](const linalg::EigenPair& e) {
        return outer_sum(e, [](double l) { return l > 0.0 ? 1.0 : (l < 0.0 ? -1.0 : 0.0); });
      });
}

Var row_eigen_penalty(Var rows, std::size_t d, double lambda_min) {
  return spectral_rows(
      rows, d, "row_eigen_penalty",
      [lambda_min](const linalg::EigenPair& e) {
        double s = 0.0;
        for (double l : e.values) s += std::max(0.0, lambda_min - l);
        return s;
      },
      [lambda_min](const linalg::EigenPair& e) {
        return outer_sum(e, [lambda_min](double l) { return l < lambda_min ? -1.0 : 0.0; });
      });
}

nn::BackboneSpec JmceConfig::backbone() const {
  nn::BackboneSpec s;
  s.dim = dim;
  s.history = history;
  s.horizon = horizon;
  s.out_per_step = dim + packed_size(dim);
  s.hidden = hidden;
  s.projection = projection;
  s.width = width;
  s.state_input = false;
  s.skip_width = skip_factors ? 0 : dim;
  return s;
}

namespace {

JmceConfig validated(const JmceConfig& c) {
  if (c.dim == 0 || c.history == 0 || c.horizon == 0) throw ContractViolation("JmceConfig: zero extent");
  if (c.window < 3 || c.window % 2 == 0) throw ContractViolation("JmceConfig: window must be odd and >= 3");
  check_weights(c.weights());
  if (c.batch == 0) throw ContractViolation("JmceConfig: batch must be positive");
  return c;
}

JmceModel::Forward split_output(Var y, const JmceConfig& c) {
  const std::size_t rows = y.value().rows() * c.horizon;
  const std::size_t out = c.dim + packed_size(c.dim);
  Var per_step = nn::reshape(y, rows, out);
  return {nn::slice(per_step, 0, c.dim), nn::slice(per_step, c.dim, out)};
}

Tensor history_tensor(std::span<const data::TimeSeriesWindow> windows, std::size_t begin, std::size_t end,
                      std::size_t d, std::size_t th) {
  Tensor h = Tensor::matrix(end - begin, th * d);
  for (std::size_t k = begin; k < end; ++k) {
    const auto& w = windows[k].history;
    if (w.rows() != d || w.cols() != th) throw ContractViolation("jmce: window history has the wrong shape");
    for (std::size_t t = 0; t < th; ++t)
      for (std::size_t i = 0; i < d; ++i) h.at(k - begin, t * d + i) = w(i, t);
  }
  return h;
}

}  // namespace

JmceModel::JmceModel(const JmceConfig& config)
    : config_(validated(config)), params_(), backbone_(config_.backbone(), params_, config_.seed) {
  // Start every diagonal of L on the same side of zero. LL^T does not see the
  // sign, so a network whose diagonal changes sign across inputs must pass
  // through singular factors, where the gradient of every loss term vanishes.
  auto& b = params_.get("head3.b").value;
  for (std::size_t i = 0; i < config_.dim; ++i) b[config_.dim + i * (i + 1) / 2 + i] = config_.diag_init;
}

JmceModel::Forward JmceModel::forward(Graph& g, const Tensor& history) {
  return split_output(backbone_.forward(g, params_, history, nullptr, {}), config_);
}

JmceModel::Forward JmceModel::forward(Graph& g, const Tensor& history) const {
  return split_output(backbone_.forward(g, params_, history, nullptr, {}), config_);
}

std::vector<JmceOutput> unpack(const Tensor& mean, const Tensor& factors, std::size_t dim, std::size_t horizon) {
  const std::size_t q = packed_size(dim);
  if (mean.cols() != dim || factors.cols() != q || mean.rows() != factors.rows() || mean.rows() % horizon != 0) {
    throw ContractViolation("jmce::unpack: shape mismatch");
  }
  const std::size_t b = mean.rows() / horizon;
  std::vector<JmceOutput> out(b);
  for (std::size_t w = 0; w < b; ++w) {
    JmceOutput& o = out[w];
    o.mean = Matrix(dim, horizon);
    o.factors.assign(horizon, Matrix(dim, dim));
    for (std::size_t t = 0; t < horizon; ++t) {
      const std::size_t row = w * horizon + t;
      for (std::size_t i = 0; i < dim; ++i) o.mean(i, t) = mean.at(row, i);
      std::size_t k = 0;
      for (std::size_t i = 0; i < dim; ++i)
        for (std::size_t j = 0; j <= i; ++j) o.factors[t](i, j) = factors.at(row, k++);
    }
  }
  return out;
}

JmceOutput JmceModel::predict(const Matrix& history) const {
  data::TimeSeriesWindow w{history, Matrix(config_.dim, config_.horizon), 0};
  return predict(std::span<const data::TimeSeriesWindow>(&w, 1)).front();
}

std::vector<JmceOutput> JmceModel::predict(std::span<const data::TimeSeriesWindow> windows) const {
  constexpr std::size_t kChunk = 256;
  std::vector<JmceOutput> out;
  out.reserve(windows.size());
  for (std::size_t b = 0; b < windows.size(); b += kChunk) {
    const std::size_t e = std::min(windows.size(), b + kChunk);
    Graph g;
    const auto f = forward(g, history_tensor(windows, b, e, config_.dim, config_.history));
    auto part = unpack(f.mean.value(), f.factors.value(), config_.dim, config_.horizon);
    for (auto& o : part) out.push_back(std::move(o));
  }
  return out;
}

void JmceModel::save(const std::filesystem::path& path) const {
  auto tensors = nn::export_values(params_);
  const JmceConfig& c = config_;
  tensors.push_back({"meta.jmce", Tensor({11}, std::vector<double>{
                                                  static_cast<double>(c.dim), static_cast<double>(c.history),
                                                  static_cast<double>(c.horizon), static_cast<double>(c.window),
                                                  c.lambda_min, c.w_eigen, static_cast<double>(c.hidden),
                                                  static_cast<double>(c.projection), static_cast<double>(c.width),
                                                  c.diag_init, c.skip_factors ? 1.0 : 0.0})});
  nn::write_checkpoint(path, tensors);
}

JmceModel JmceModel::load(const std::filesystem::path& path) {
  const auto tensors = nn::read_checkpoint(path);
  const nn::NamedTensor* meta = nn::find_tensor(tensors, "meta.jmce");
  if (meta == nullptr || meta->tensor.size() != 11) {
    throw DataError("JMCE checkpoint " + path.string() + " has no meta.jmce record");
  }
  const auto m = meta->tensor.data();
  auto count = [&](std::size_t i) { return static_cast<std::size_t>(m[i]); };
  JmceConfig c;
  c.dim = count(0);
  c.history = count(1);
  c.horizon = count(2);
  c.window = count(3);
  c.lambda_min = m[4];
  c.w_eigen = m[5];
  c.hidden = count(6);
  c.projection = count(7);
  c.width = count(8);
  c.diag_init = m[9];
  c.skip_factors = m[10] != 0.0;
  JmceModel model(c);
  nn::import_values(model.params_, tensors);
  return model;
}

TrainBatch make_batch(std::span<const data::TimeSeriesWindow* const> windows,
                      std::span<const CovTargets* const> targets) {
  if (windows.empty() || windows.size() != targets.size()) throw ContractViolation("make_batch: size mismatch");
  const std::size_t b = windows.size();
  const std::size_t d = windows[0]->history.rows(), th = windows[0]->history.cols(), tf = windows[0]->future.cols();
  TrainBatch out;
  out.size = b;
  out.history = Tensor::matrix(b, th * d);
  out.future = Tensor::matrix(b * tf, d);
  out.targets = Tensor::matrix(b * tf, d * d);
  for (std::size_t k = 0; k < b; ++k) {
    const auto& w = *windows[k];
    if (w.history.rows() != d || w.history.cols() != th || w.future.rows() != d || w.future.cols() != tf ||
        targets[k]->cov.size() != tf) {
      throw ContractViolation("make_batch: inconsistent window shapes");
    }
    for (std::size_t t = 0; t < th; ++t)
      for (std::size_t i = 0; i < d; ++i) out.history.at(k, t * d + i) = w.history(i, t);
    for (std::size_t t = 0; t < tf; ++t) {
      for (std::size_t i = 0; i < d; ++i) out.future.at(k * tf + t, i) = w.future(i, t);
      const Matrix& s = targets[k]->cov[t];
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) out.targets.at(k * tf + t, i * d + j) = s(i, j);
    }
  }
  return out;
}

GraphLoss graph_loss(Graph& g, const JmceModel::Forward& fwd, const TrainBatch& batch, std::size_t dim,
                     std::size_t horizon, const LossWeights& weights) {
  check_weights(weights);
  const double inv_b = 1.0 / static_cast<double>(batch.size);
  Var l2 = nn::scale(nn::sqnorm(nn::sub(fwd.mean, g.constant(batch.future))), inv_b);
  Var gram = lower_tri_gram(fwd.factors, dim);
  Var diff = nn::sub(g.constant(batch.targets), gram);
  Var lf = nn::scale(nn::sum(row_frobenius(diff)), inv_b);
  Var lsvd = nn::scale(nn::sum(row_sym_nuclear(diff, dim)), inv_b);
  Var pen = nn::scale(nn::sum(row_eigen_penalty(gram, dim, weights.lambda_min)), inv_b);
  const double cf = weights.lambda_min * std::sqrt(static_cast<double>(dim * horizon));
  Var total = nn::add(nn::add(l2, lsvd), nn::add(nn::scale(lf, cf), nn::scale(pen, weights.w_eigen)));
  GraphLoss out{total, {}};
  out.parts.l2 = l2.value()[0];
  out.parts.l_f = lf.value()[0];
  out.parts.l_svd = lsvd.value()[0];
  out.parts.eigen_penalty = pen.value()[0];
  out.parts.total = total.value()[0];
  return out;
}

LossBreakdown evaluate(const JmceModel& model, std::span<const data::TimeSeriesWindow> windows) {
  if (windows.empty()) throw ContractViolation("jmce::evaluate: no windows");
  const auto outputs = model.predict(windows);
  std::vector<Matrix> x0;
  std::vector<CovTargets> targets;
  x0.reserve(windows.size());
  targets.reserve(windows.size());
  for (const auto& w : windows) {
    x0.push_back(w.future);
    targets.push_back(sliding_window_cov(w.future, model.config().window));
  }
  return jmce_loss(outputs, x0, targets, model.config().weights());
}

TrainResult train_jmce(std::span<const data::TimeSeriesWindow> train, std::span<const data::TimeSeriesWindow> val,
                       const JmceConfig& config) {
  if (train.empty() || val.empty()) throw ContractViolation("train_jmce: empty training or validation set");
  TrainResult result{JmceModel(config), {}, 0, false, {}};
  JmceModel& model = result.model;
  const JmceConfig& c = model.config();

  std::vector<CovTargets> targets;
  targets.reserve(train.size());
  for (const auto& w : train) targets.push_back(sliding_window_cov(w.future, c.window));

  nn::NetParams best = model.params();
  result.epochs.push_back({0, 0.0, evaluate(model, val)});
  double best_val = result.epochs.back().val.total;

  std::mt19937_64 rng(c.seed ^ 0x6a6d6365ULL);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  nn::AdamConfig adam;
  adam.lr = c.lr;

  for (std::size_t epoch = 1; epoch <= c.epochs; ++epoch) {
    // Cosine decay from lr to final_lr_ratio * lr over the run.
    const double progress = c.epochs > 1 ? static_cast<double>(epoch - 1) / static_cast<double>(c.epochs - 1) : 0.0;
    adam.lr = c.lr * (c.final_lr_ratio + (1.0 - c.final_lr_ratio) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
    std::shuffle(order.begin(), order.end(), rng);
    double train_sum = 0.0;
    std::size_t batches = 0;
    try {
      for (std::size_t b = 0; b < order.size(); b += c.batch) {
        const std::size_t e = std::min(order.size(), b + c.batch);
        std::vector<const data::TimeSeriesWindow*> ws;
        std::vector<const CovTargets*> ts;
        for (std::size_t k = b; k < e; ++k) {
          ws.push_back(&train[order[k]]);
          ts.push_back(&targets[order[k]]);
        }
        const TrainBatch batch = make_batch(ws, ts);
        model.params().zero_grad();
        Graph g;
        const auto fwd = model.forward(g, batch.history);
        const auto loss = graph_loss(g, fwd, batch, c.dim, c.horizon, c.weights());
        g.backward(loss.total);
        nn::adam_step(model.params(), adam);
        train_sum += loss.parts.total;
        ++batches;
      }
      const LossBreakdown v = evaluate(model, val);
      if (!std::isfinite(v.total)) throw NumericError("validation loss is not finite");
      result.epochs.push_back({epoch, train_sum / static_cast<double>(batches), v});
      if (v.total < best_val) {
        best_val = v.total;
        best = model.params();
        result.best_epoch = epoch;
      }
    } catch (const NumericError& err) {
      result.aborted = true;
      result.abort_reason = "epoch " + std::to_string(epoch) + ": " + err.what();
      break;
    }
  }
  model.params().copy_values_from(best);
  return result;
}

}  // namespace cwgen::jmce
