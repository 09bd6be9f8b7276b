#include "cwgen/nn/graph.hpp"

#include <cmath>
#include <string>

#include "cwgen/errors.hpp"

namespace cwgen::nn {

const Tensor& Var::value() const { return graph->value(*this); }

Var Graph::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Graph::parameter(Parameter& param) {
  Node n;
  n.value = param.value;
  n.param = &param;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Graph::record(const char* op, Tensor value, std::vector<std::size_t> parents, BackwardFn backward) {
  if (!value.all_finite()) throw NumericError(std::string("non-finite value produced by ") + op);
  Node n;
  n.value = std::move(value);
  for (std::size_t p : parents) n.requires_grad = n.requires_grad || nodes_[p].requires_grad;
  n.parents = std::move(parents);
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Tensor& Graph::grad(std::size_t i) {
  Node& n = nodes_[i];
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape(), 0.0);
    n.has_grad = true;
  }
  return n.grad;
}

void Graph::backward(Var loss) {
  if (loss.graph != this) throw ContractViolation("backward: loss belongs to another graph");
  if (nodes_[loss.index].value.size() != 1) throw ContractViolation("backward: loss node is not scalar");
  if (consumed_) throw ContractViolation("backward: graph already consumed");
  consumed_ = true;
  grad(loss.index)[0] = 1.0;
  for (std::size_t i = loss.index + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.has_grad) continue;
    if (n.param != nullptr) {
      auto dst = n.param->grad.data();
      auto src = n.grad.data();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    } else if (n.backward) {
      n.backward(*this, i);
    }
  }
}

namespace {

Graph& same_graph(Var a, Var b, const char* op) {
  if (a.graph == nullptr || a.graph != b.graph) {
    throw ContractViolation(std::string(op) + ": operands belong to different graphs");
  }
  return *a.graph;
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw ContractViolation(std::string(op) + ": expected a rank-2 tensor");
}

std::string shape_str(const Tensor& t) {
  std::string s = "[";
  for (std::size_t i = 0; i < t.rank(); ++i) s += (i ? "," : "") + std::to_string(t.shape()[i]);
  return s + "]";
}

template <class F, class DF>
Var unary(Var a, const char* op, F f, DF df) {
  Graph& g = *a.graph;
  const Tensor& x = g.value(a);
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const std::size_t ai = a.index;
  return g.record(op, std::move(y), {ai}, [ai, df](Graph& gr, std::size_t self) {
    if (!gr.requires_grad(ai)) return;
    const Tensor& x = gr.value(ai);
    const Tensor& y = gr.value(self);
    const Tensor& gy = gr.grad(self);
    Tensor& gx = gr.grad(ai);
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] += gy[i] * df(x[i], y[i]);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  Graph& g = same_graph(a, b, "matmul");
  const Tensor& x = g.value(a);
  const Tensor& w = g.value(b);
  require_rank2(x, "matmul");
  require_rank2(w, "matmul");
  const std::size_t n = x.rows(), k = x.cols(), m = w.cols();
  if (w.rows() != k) throw ContractViolation("matmul: " + shape_str(x) + " x " + shape_str(w));
  Tensor y = Tensor::matrix(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    double* yr = &y[i * m];
    for (std::size_t p = 0; p < k; ++p) {
      const double xv = x[i * k + p];
      if (xv == 0.0) continue;
      const double* wr = &w[p * m];
      for (std::size_t j = 0; j < m; ++j) yr[j] += xv * wr[j];
    }
  }
  const std::size_t ai = a.index, bi = b.index;
  return g.record("matmul", std::move(y), {ai, bi}, [ai, bi, n, k, m](Graph& gr, std::size_t self) {
    const Tensor& gy = gr.grad(self);
    if (gr.requires_grad(ai)) {
      const Tensor& w = gr.value(bi);
      Tensor& gx = gr.grad(ai);
      for (std::size_t i = 0; i < n; ++i) {
        const double* gyr = &gy[i * m];
        for (std::size_t p = 0; p < k; ++p) {
          const double* wr = &w[p * m];
          double s = 0.0;
          for (std::size_t j = 0; j < m; ++j) s += gyr[j] * wr[j];
          gx[i * k + p] += s;
        }
      }
    }
    if (gr.requires_grad(bi)) {
      const Tensor& x = gr.value(ai);
      Tensor& gw = gr.grad(bi);
      for (std::size_t i = 0; i < n; ++i) {
        const double* gyr = &gy[i * m];
        for (std::size_t p = 0; p < k; ++p) {
          const double xv = x[i * k + p];
          if (xv == 0.0) continue;
          double* gwr = &gw[p * m];
          for (std::size_t j = 0; j < m; ++j) gwr[j] += xv * gyr[j];
        }
      }
    }
  });
}

namespace {

Var add_scaled(Var a, Var b, double sign, const char* op) {
  Graph& g = same_graph(a, b, op);
  const Tensor& x = g.value(a);
  const Tensor& z = g.value(b);
  const bool broadcast = !x.same_shape(z);
  if (broadcast && !(z.rank() == 2 && z.rows() == 1 && z.cols() == x.cols() && x.rank() == 2)) {
    throw ContractViolation(std::string(op) + ": " + shape_str(x) + " vs " + shape_str(z));
  }
  Tensor y = x;
  const std::size_t cols = x.cols();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += sign * z[broadcast ? i % cols : i];
  const std::size_t ai = a.index, bi = b.index;
  return g.record(op, std::move(y), {ai, bi}, [ai, bi, sign, broadcast, cols](Graph& gr, std::size_t self) {
    const Tensor& gy = gr.grad(self);
    if (gr.requires_grad(ai)) {
      Tensor& ga = gr.grad(ai);
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
    }
    if (gr.requires_grad(bi)) {
      Tensor& gb = gr.grad(bi);
      for (std::size_t i = 0; i < gy.size(); ++i) gb[broadcast ? i % cols : i] += sign * gy[i];
    }
  });
}

}  // namespace

Var add(Var a, Var b) { return add_scaled(a, b, 1.0, "add"); }
Var sub(Var a, Var b) { return add_scaled(a, b, -1.0, "sub"); }

Var mul(Var a, Var b) {
  Graph& g = same_graph(a, b, "mul");
  const Tensor& x = g.value(a);
  const Tensor& z = g.value(b);
  if (!x.same_shape(z)) throw ContractViolation("mul: " + shape_str(x) + " vs " + shape_str(z));
  Tensor y = x;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= z[i];
  const std::size_t ai = a.index, bi = b.index;
  return g.record("mul", std::move(y), {ai, bi}, [ai, bi](Graph& gr, std::size_t self) {
    const Tensor& gy = gr.grad(self);
    if (gr.requires_grad(ai)) {
      const Tensor& z = gr.value(bi);
      Tensor& ga = gr.grad(ai);
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * z[i];
    }
    if (gr.requires_grad(bi)) {
      const Tensor& x = gr.value(ai);
      Tensor& gb = gr.grad(bi);
      for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * x[i];
    }
  });
}

Var scale(Var a, double s) {
  return unary(a, "scale", [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var tanh(Var a) {
  return unary(a, "tanh", [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var softplus(Var a) {
  return unary(
      a, "softplus",
      [](double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); },
      [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

Var relu(Var a) {
  return unary(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractViolation("concat: no inputs");
  Graph& g = *parts.front().graph;
  const std::size_t rows = g.value(parts.front()).rows();
  std::vector<std::size_t> widths;
  std::vector<std::size_t> parents;
  std::size_t total = 0;
  for (Var p : parts) {
    same_graph(parts.front(), p, "concat");
    const Tensor& t = g.value(p);
    require_rank2(t, "concat");
    if (t.rows() != rows) throw ContractViolation("concat: row counts differ");
    widths.push_back(t.cols());
    parents.push_back(p.index);
    total += t.cols();
  }
  Tensor y = Tensor::matrix(rows, total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& t = g.value(parts[k]);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < widths[k]; ++c) y[r * total + offset + c] = t[r * widths[k] + c];
    offset += widths[k];
  }
  return g.record("concat", std::move(y), parents, [parents, widths, rows, total](Graph& gr, std::size_t self) {
    const Tensor& gy = gr.grad(self);
    std::size_t off = 0;
    for (std::size_t k = 0; k < parents.size(); ++k) {
      if (gr.requires_grad(parents[k])) {
        Tensor& gp = gr.grad(parents[k]);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < widths[k]; ++c) gp[r * widths[k] + c] += gy[r * total + off + c];
      }
      off += widths[k];
    }
  });
}

Var slice(Var a, std::size_t begin, std::size_t end) {
  Graph& g = *a.graph;
  const Tensor& x = g.value(a);
  require_rank2(x, "slice");
  if (begin >= end || end > x.cols()) throw ContractViolation("slice: invalid column range");
  const std::size_t rows = x.rows(), cols = x.cols(), w = end - begin;
  Tensor y = Tensor::matrix(rows, w);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < w; ++c) y[r * w + c] = x[r * cols + begin + c];
  const std::size_t ai = a.index;
  return g.record("slice", std::move(y), {ai}, [ai, rows, cols, begin, w](Graph& gr, std::size_t self) {
    const Tensor& gy = gr.grad(self);
    Tensor& gx = gr.grad(ai);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < w; ++c) gx[r * cols + begin + c] += gy[r * w + c];
  });
}

Var repeat_rows(Var a, std::size_t k) {
  Graph& g = *a.graph;
  const Tensor& x = g.value(a);
  require_rank2(x, "repeat_rows");
  if (k == 0) throw ContractViolation("repeat_rows: factor must be positive");
  const std::size_t rows = x.rows(), cols = x.cols();
  Tensor y = Tensor::matrix(rows * k, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t c = 0; c < cols; ++c) y[(r * k + j) * cols + c] = x[r * cols + c];
  const std::size_t ai = a.index;
  return g.record("repeat_rows", std::move(y), {ai}, [ai, rows, cols, k](Graph& gr, std::size_t self) {
    const Tensor& gy = gr.grad(self);
    Tensor& gx = gr.grad(ai);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < k; ++j)
        for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += gy[(r * k + j) * cols + c];
  });
}

Var reshape(Var a, std::size_t rows, std::size_t cols) {
  Graph& g = *a.graph;
  Tensor y = g.value(a).reshaped({rows, cols});
  const std::size_t ai = a.index;
  return g.record("reshape", std::move(y), {ai}, [ai](Graph& gr, std::size_t self) {
    const Tensor& gy = gr.grad(self);
    Tensor& gx = gr.grad(ai);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
  });
}

Var sum(Var a) {
  Graph& g = *a.graph;
  const Tensor& x = g.value(a);
  double s = 0.0;
  for (double v : x.data()) s += v;
  const std::size_t ai = a.index;
  return g.record("sum", Tensor::scalar(s), {ai}, [ai](Graph& gr, std::size_t self) {
    const double gy = gr.grad(self)[0];
    Tensor& gx = gr.grad(ai);
    for (double& v : gx.data()) v += gy;
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var sqnorm(Var a) {
  Graph& g = *a.graph;
  const Tensor& x = g.value(a);
  double s = 0.0;
  for (double v : x.data()) s += v * v;
  const std::size_t ai = a.index;
  return g.record("sqnorm", Tensor::scalar(s), {ai}, [ai](Graph& gr, std::size_t self) {
    const double gy = gr.grad(self)[0];
    const Tensor& x = gr.value(ai);
    Tensor& gx = gr.grad(ai);
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] += 2.0 * gy * x[i];
  });
}

}  // namespace cwgen::nn
