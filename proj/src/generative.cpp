#include "cwgen/generative.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>

#include "cwgen/errors.hpp"
#include "cwgen/nn/checkpoint.hpp"

namespace cwgen::generative {

using nn::Graph;
using nn::Tensor;
using nn::Var;

std::string to_string(Kind k) { return k == Kind::kDiffusion ? "diff" : "flow"; }
std::string to_string(Variant v) { return v == Variant::kRaw ? "raw" : "cw"; }

Kind parse_kind(std::string_view s) {
  if (s == "diff") return Kind::kDiffusion;
  if (s == "flow") return Kind::kFlow;
  throw ContractViolation("unknown model kind '" + std::string(s) + "' (expected diff or flow)");
}

Variant parse_variant(std::string_view s) {
  if (s == "raw") return Variant::kRaw;
  if (s == "cw") return Variant::kCw;
  throw ContractViolation("unknown variant '" + std::string(s) + "' (expected raw or cw)");
}

std::vector<jmce::JmceOutput> IdentityPrior::predict(std::span<const data::TimeSeriesWindow> windows) const {
  jmce::JmceOutput unit{Matrix(dim_, horizon_), std::vector<Matrix>(horizon_, Matrix::identity(dim_))};
  return std::vector<jmce::JmceOutput>(windows.size(), unit);
}

nn::BackboneSpec GenConfig::backbone() const {
  nn::BackboneSpec s;
  s.dim = dim;
  s.history = history;
  s.horizon = horizon;
  s.out_per_step = dim;
  s.hidden = hidden;
  s.projection = projection;
  s.width = width;
  s.state_input = true;
  return s;
}

namespace {

GenConfig validated(const GenConfig& c) {
  if (c.dim == 0 || c.history == 0 || c.horizon == 0) throw ContractViolation("GenConfig: zero extent");
  if (c.batch == 0) throw ContractViolation("GenConfig: batch must be positive");
  c.schedule.validate();
  c.flow.validate();
  return c;
}

}  // namespace

GenModel::GenModel(const GenConfig& config)
    : config_(validated(config)), params_(), backbone_(config_.backbone(), params_, config_.seed ^ 0x67656eULL) {}

double GenConfig::state_gain(double tau) const {
  if (!state_skip) return 0.0;
  if (kind == Kind::kDiffusion) return diffusion::alpha_sigma(schedule, tau).second;
  return (2.0 * tau - 1.0) / ((1.0 - tau) * (1.0 - tau) + tau * tau);
}

namespace {

Var add_state_skip(Graph& g, Var net, const GenConfig& c, const Tensor& state, std::span<const double> tau,
                   const Tensor* center) {
  if (!c.state_skip) return net;
  if (center != nullptr && (center->rows() != state.rows() || center->cols() != state.cols())) {
    throw ContractViolation("GenModel::forward: center must match the state shape");
  }
  Tensor lin = state;
  const std::size_t cols = lin.cols();
  for (std::size_t r = 0; r < lin.rows(); ++r) {
    const double k = c.state_gain(tau[r]);
    for (std::size_t j = 0; j < cols; ++j) {
      if (center != nullptr) lin.at(r, j) -= center->at(r, j);
      lin.at(r, j) *= k;
    }
  }
  return add(net, g.constant(std::move(lin)));
}

}  // namespace

Var GenModel::forward(Graph& g, const Tensor& history, std::size_t members, const Tensor& state,
                      std::span<const double> tau, const Tensor* center) {
  Var net = backbone_.head(g, params_, backbone_.encode(g, params_, history), members, &state, tau);
  return add_state_skip(g, net, config_, state, tau, center);
}

Var GenModel::forward(Graph& g, const Tensor& history, std::size_t members, const Tensor& state,
                      std::span<const double> tau, const Tensor* center) const {
  Var net = backbone_.head(g, params_, backbone_.encode(g, params_, history), members, &state, tau);
  return add_state_skip(g, net, config_, state, tau, center);
}

void GenModel::save(const std::filesystem::path& path) const {
  auto tensors = nn::export_values(params_);
  const GenConfig& c = config_;
  auto f = [](auto v) { return static_cast<double>(v); };
  tensors.push_back({"meta.gen", Tensor({16}, std::vector<double>{
                                                 f(c.kind == Kind::kFlow), f(c.variant == Variant::kCw), f(c.dim),
                                                 f(c.history), f(c.horizon), f(c.hidden), f(c.projection),
                                                 f(c.width), c.schedule.beta0, c.schedule.beta1,
                                                 f(c.schedule.n_steps), c.schedule.tau_min, f(c.flow.n_steps),
                                                 c.flow.tau_min,
                                                 f(c.weighting == diffusion::Weighting::kSigmaSquared),
                                                 f(c.state_skip)})});
  nn::write_checkpoint(path, tensors);
}

GenModel GenModel::load(const std::filesystem::path& path) {
  const auto tensors = nn::read_checkpoint(path);
  const nn::NamedTensor* meta = nn::find_tensor(tensors, "meta.gen");
  if (meta == nullptr || meta->tensor.size() != 16) {
    throw DataError("generative checkpoint " + path.string() + " has no meta.gen record");
  }
  const auto m = meta->tensor.data();
  auto count = [&](std::size_t i) { return static_cast<std::size_t>(m[i]); };
  GenConfig c;
  c.kind = m[0] != 0.0 ? Kind::kFlow : Kind::kDiffusion;
  c.variant = m[1] != 0.0 ? Variant::kCw : Variant::kRaw;
  c.dim = count(2);
  c.history = count(3);
  c.horizon = count(4);
  c.hidden = count(5);
  c.projection = count(6);
  c.width = count(7);
  c.schedule.beta0 = m[8];
  c.schedule.beta1 = m[9];
  c.schedule.n_steps = count(10);
  c.schedule.tau_min = m[11];
  c.flow.n_steps = count(12);
  c.flow.tau_min = m[13];
  c.weighting = m[14] != 0.0 ? diffusion::Weighting::kSigmaSquared : diffusion::Weighting::kUnweighted;
  c.state_skip = m[15] != 0.0;
  GenModel model(c);
  nn::import_values(model.params_, tensors);
  return model;
}

namespace {

// Per-window quantities that stay fixed while training.
struct Example {
  std::vector<double> history;  // time-major
  std::vector<double> x0;       // raw future, time-major
  std::vector<double> target;   // whitened future for CW diffusion, raw otherwise
  std::vector<double> center;   // prior mean for CW flow, time-major
  jmce::JmceOutput prior;       // only for CW
};

std::vector<Example> prepare(std::span<const data::TimeSeriesWindow> windows, const GenConfig& c,
                             const Prior* prior) {
  std::vector<jmce::JmceOutput> outs;
  if (c.variant == Variant::kCw) outs = prior->predict(windows);
  std::vector<Example> ex(windows.size());
  for (std::size_t k = 0; k < windows.size(); ++k) {
    const auto& w = windows[k];
    if (w.history.rows() != c.dim || w.history.cols() != c.history || w.future.rows() != c.dim ||
        w.future.cols() != c.horizon) {
      throw ContractViolation("train_generative: window shape does not match the config");
    }
    ex[k].history = data::to_time_major(w.history);
    ex[k].x0 = data::to_time_major(w.future);
    if (c.variant == Variant::kCw) {
      ex[k].prior = std::move(outs[k]);
      if (c.kind == Kind::kDiffusion) {
        const auto stack = whitening::build_cov_stack(ex[k].prior, prior->jitter());
        ex[k].target = data::to_time_major(whitening::whiten(w.future, ex[k].prior.mean, stack));
      } else {
        ex[k].center = data::to_time_major(ex[k].prior.mean);
      }
    }
    if (ex[k].target.empty()) ex[k].target = ex[k].x0;
  }
  return ex;
}

// Draws tau and the terminal noise for one example, in that order.
void draw(const Example& e, const GenConfig& c, std::mt19937_64& rng, double& tau, std::vector<double>& eps) {
  if (c.kind == Kind::kDiffusion) {
    tau = diffusion::draw_training_tau(c.schedule, rng);
    eps = data::to_time_major(whitening::standard_normal(c.dim, c.horizon, rng));
  } else {
    tau = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const Matrix term = c.variant == Variant::kCw ? whitening::sample_cw_noise(e.prior.mean, e.prior, rng)
                                                  : whitening::standard_normal(c.dim, c.horizon, rng);
    eps = data::to_time_major(term);
  }
}

struct Batch {
  Tensor history, state, target;
  std::vector<double> tau, sigma;
  std::optional<Tensor> center;
};

Batch assemble(const std::vector<const Example*>& ex, const std::vector<double>& taus,
               const std::vector<std::vector<double>>& eps, const GenConfig& c) {
  const std::size_t b = ex.size(), n = c.horizon * c.dim, h = c.history * c.dim;
  Batch out{Tensor::matrix(b, h), Tensor::matrix(b, n), Tensor::matrix(b, n), taus, std::vector<double>(b), {}};
  if (c.kind == Kind::kFlow && c.variant == Variant::kCw) out.center = Tensor::matrix(b, n);
  for (std::size_t r = 0; r < b; ++r) {
    const Example& e = *ex[r];
    std::copy(e.history.begin(), e.history.end(), out.history.data().begin() + static_cast<long>(r * h));
    if (out.center) std::copy(e.center.begin(), e.center.end(), out.center->data().begin() + static_cast<long>(r * n));
    const double tau = taus[r];
    if (c.kind == Kind::kDiffusion) {
      const auto [a, s] = diffusion::alpha_sigma(c.schedule, tau);
      out.sigma[r] = s;
      for (std::size_t i = 0; i < n; ++i) {
        out.state.at(r, i) = a * e.target[i] + s * eps[r][i];
        out.target.at(r, i) = eps[r][i];
      }
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        out.state.at(r, i) = tau == 1.0 ? eps[r][i] : e.x0[i] + tau * (eps[r][i] - e.x0[i]);
        out.target.at(r, i) = eps[r][i];
      }
    }
  }
  return out;
}

// Flow targets are eps - x0; fm_loss takes x0 and eps separately.
Tensor x0_tensor(const std::vector<const Example*>& ex, const GenConfig& c) {
  const std::size_t n = c.horizon * c.dim;
  Tensor t = Tensor::matrix(ex.size(), n);
  for (std::size_t r = 0; r < ex.size(); ++r)
    std::copy(ex[r]->x0.begin(), ex[r]->x0.end(), t.data().begin() + static_cast<long>(r * n));
  return t;
}

template <class Model>
Var batch_loss(Graph& g, Model& model, const std::vector<const Example*>& ex, const std::vector<double>& taus,
               const std::vector<std::vector<double>>& eps) {
  const GenConfig& c = model.config();
  const Batch b = assemble(ex, taus, eps, c);
  Var out = model.forward(g, b.history, 1, b.state, b.tau, b.center ? &*b.center : nullptr);
  if (c.kind == Kind::kDiffusion) return diffusion::score_loss(g, out, b.target, b.sigma, c.weighting);
  return flow::fm_loss(g, out, x0_tensor(ex, c), b.target);
}

double validation_loss(const GenModel& model, const std::vector<Example>& val, const std::vector<double>& taus,
                       const std::vector<std::vector<double>>& eps) {
  constexpr std::size_t kChunk = 128;
  double acc = 0.0;
  for (std::size_t b = 0; b < val.size(); b += kChunk) {
    const std::size_t e = std::min(val.size(), b + kChunk);
    std::vector<const Example*> ex;
    for (std::size_t k = b; k < e; ++k) ex.push_back(&val[k]);
    Graph g;
    const Var l = batch_loss(g, model, ex, std::vector<double>(taus.begin() + static_cast<long>(b), taus.begin() + static_cast<long>(e)),
                             std::vector<std::vector<double>>(eps.begin() + static_cast<long>(b), eps.begin() + static_cast<long>(e)));
    acc += l.value()[0] * static_cast<double>(e - b);
  }
  return acc / static_cast<double>(val.size());
}

}  // namespace

GenTrainResult train_generative(std::span<const data::TimeSeriesWindow> train,
                                std::span<const data::TimeSeriesWindow> val, const GenConfig& config,
                                const Prior* prior) {
  if (train.empty() || val.empty()) throw ContractViolation("train_generative: empty training or validation set");
  if (config.variant == Variant::kCw && prior == nullptr) {
    throw PrerequisiteError("the cw variant needs a trained JMCE checkpoint; run train-jmce first");
  }
  GenTrainResult result{GenModel(config), {}, {}, 0, false, {}};
  GenModel& model = result.model;
  const GenConfig& c = model.config();

  const auto train_ex = prepare(train, c, prior);
  const auto val_ex = prepare(val, c, prior);

  std::mt19937_64 val_rng(c.seed ^ 0x76616c6964ULL);
  std::vector<double> val_tau(val_ex.size());
  std::vector<std::vector<double>> val_eps(val_ex.size());
  for (std::size_t k = 0; k < val_ex.size(); ++k) draw(val_ex[k], c, val_rng, val_tau[k], val_eps[k]);

  result.val_losses.push_back(validation_loss(model, val_ex, val_tau, val_eps));
  double best_val = result.val_losses.back();
  nn::NetParams best = model.params();

  std::mt19937_64 rng(c.seed ^ 0x747261696eULL);
  std::vector<std::size_t> order(train_ex.size());
  std::iota(order.begin(), order.end(), 0);
  nn::AdamConfig adam;
  adam.lr = c.lr;

  for (std::size_t epoch = 1; epoch <= c.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    try {
      for (std::size_t b = 0; b < order.size(); b += c.batch) {
        const std::size_t e = std::min(order.size(), b + c.batch);
        std::vector<const Example*> ex;
        std::vector<double> taus(e - b);
        std::vector<std::vector<double>> eps(e - b);
        for (std::size_t k = b; k < e; ++k) {
          ex.push_back(&train_ex[order[k]]);
          draw(*ex.back(), c, rng, taus[k - b], eps[k - b]);
        }
        model.params().zero_grad();
        Graph g;
        const Var loss = batch_loss(g, model, ex, taus, eps);
        g.backward(loss);
        nn::adam_step(model.params(), adam);
        result.step_losses.push_back(loss.value()[0]);
      }
      const double v = validation_loss(model, val_ex, val_tau, val_eps);
      result.val_losses.push_back(v);
      if (v < best_val) {
        best_val = v;
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

std::uint64_t window_seed(std::uint64_t base_seed, std::size_t window) {
  // splitmix64 finalizer over (base, window); member j then uses the result + j.
  std::uint64_t z = base_seed + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(window) + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::vector<SampleEnsemble> sample(const GenModel& model, std::span<const data::TimeSeriesWindow> windows,
                                   const Prior* prior, std::size_t members, std::uint64_t base_seed) {
  const GenConfig& c = model.config();
  if (members == 0) throw ContractViolation("sample: need at least one member");
  if (c.variant == Variant::kCw && prior == nullptr) {
    throw PrerequisiteError("the cw variant needs a trained JMCE checkpoint; run train-jmce first");
  }
  std::vector<jmce::JmceOutput> outs;
  if (c.variant == Variant::kCw) outs = prior->predict(windows);
  const std::size_t n = c.horizon * c.dim;

  std::vector<SampleEnsemble> result;
  result.reserve(windows.size());
  for (std::size_t w = 0; w < windows.size(); ++w) {
    const auto& win = windows[w];
    if (win.history.rows() != c.dim || win.history.cols() != c.history) {
      throw ContractViolation("sample: window shape does not match the model");
    }
    const Tensor history({1, c.history * c.dim}, data::to_time_major(win.history));
    const std::uint64_t seed = window_seed(base_seed, w);
    std::vector<std::mt19937_64> rngs;
    rngs.reserve(members);
    for (std::size_t j = 0; j < members; ++j) rngs.emplace_back(seed + j);

    std::optional<Tensor> center;
    if (c.kind == Kind::kFlow && c.variant == Variant::kCw) {
      center = Tensor::matrix(members, n);
      const auto mu = data::to_time_major(outs[w].mean);
      for (std::size_t j = 0; j < members; ++j)
        std::copy(mu.begin(), mu.end(), center->data().begin() + static_cast<long>(j * n));
    }
    auto net = [&](const Tensor& x, double tau) {
      Graph g;
      const std::vector<double> taus(members, tau);
      return model.forward(g, history, members, x, taus, center ? &*center : nullptr).value();
    };

    Tensor out;
    std::size_t steps = 0;
    if (c.kind == Kind::kDiffusion) {
      steps = c.schedule.n_steps;
      auto score = [&](const Tensor& x, double tau) {
        Tensor s = net(x, tau);
        const double sigma = diffusion::alpha_sigma(c.schedule, tau).second;
        for (double& v : s.data()) v = -v / sigma;
        return s;
      };
      out = diffusion::reverse_sample(score, members, n, c.schedule, rngs);
    } else {
      steps = c.flow.n_steps;
      Tensor terminal = Tensor::matrix(members, n);
      for (std::size_t j = 0; j < members; ++j) {
        const Matrix term = c.variant == Variant::kCw ? whitening::sample_cw_noise(outs[w].mean, outs[w], rngs[j])
                                                      : whitening::standard_normal(c.dim, c.horizon, rngs[j]);
        const auto flat = data::to_time_major(term);
        std::copy(flat.begin(), flat.end(), terminal.data().begin() + static_cast<long>(j * n));
      }
      out = flow::fm_sample(net, std::move(terminal), c.flow);
    }

    SampleEnsemble ens;
    ens.window = w;
    ens.model_id = c.id();
    ens.base_seed = seed;
    ens.sampler_steps = steps;
    std::optional<whitening::CovStack> stack;
    if (c.kind == Kind::kDiffusion && c.variant == Variant::kCw) {
      stack.emplace(whitening::build_cov_stack(outs[w], prior->jitter()));
    }
    for (std::size_t j = 0; j < members; ++j) {
      Matrix m = data::from_time_major(out.data().subspan(j * n, n), c.dim, c.horizon);
      if (stack) m = whitening::unwhiten(m, outs[w].mean, *stack);
      ens.members.push_back(std::move(m));
    }
    result.push_back(std::move(ens));
  }
  return result;
}

}  // namespace cwgen::generative
