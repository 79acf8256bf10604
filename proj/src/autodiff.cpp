#include "autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace parenting::ad {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

double sigmoid_of(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tape::Tape(bool requires_grad) : requires_grad_(requires_grad) { nodes_.reserve(256); }

const Tape::Node& Tape::node(Var v) const {
  require(v.valid() && v.id < nodes_.size(), "invalid tape variable");
  return nodes_[v.id];
}

Var Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

std::span<const double> Tape::value(Var v) const {
  const auto& n = node(v);
  return {n.data(), n.rows * n.cols};
}

double Tape::item(Var v) const {
  const auto& n = node(v);
  require(n.rows * n.cols == 1, "item() needs a 1x1 variable");
  return n.data()[0];
}

std::span<const double> Tape::grad(Var v) const { return node(v).grad; }

Var Tape::constant(std::size_t rows, std::size_t cols, std::vector<double> values) {
  require(values.size() == rows * cols, "constant: size does not match shape");
  Node n;
  n.op = Op::Constant;
  n.rows = rows;
  n.cols = cols;
  n.value = std::move(values);
  return push(std::move(n));
}

Var Tape::param(const Tensor& tensor, std::size_t slot) {
  if (slot >= param_nodes_.size()) param_nodes_.resize(slot + 1, UINT32_MAX);
  if (param_nodes_[slot] != UINT32_MAX) return Var{param_nodes_[slot]};
  Node n;
  n.op = Op::Param;
  n.rows = tensor.rows;
  n.cols = tensor.cols;
  n.external = tensor.data.data();
  Var v = push(std::move(n));
  param_nodes_[slot] = v.id;
  return v;
}

Var Tape::matmul(Var a, Var b) {
  const auto& A = node(a);
  const auto& B = node(b);
  require(A.cols == B.rows, "matmul: inner dimensions differ");
  const std::size_t m = A.rows, k = A.cols, p = B.cols;
  Node n;
  n.op = Op::MatMul;
  n.rows = m;
  n.cols = p;
  n.value.assign(m * p, 0.0);
  const double* x = A.data();
  const double* y = B.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* xr = x + i * k;
    double* out = n.value.data() + i * p;
    if (p == 1) {
      double s = 0.0;
      for (std::size_t j = 0; j < k; ++j) s += xr[j] * y[j];
      out[0] = s;
    } else {
      for (std::size_t j = 0; j < k; ++j) {
        const double xv = xr[j];
        const double* yr = y + j * p;
        for (std::size_t c = 0; c < p; ++c) out[c] += xv * yr[c];
      }
    }
  }
  n.a = a.id;
  n.b = b.id;
  return push(std::move(n));
}

Var Tape::matvec_t(Var a, Var x) {
  const auto& A = node(a);
  const auto& X = node(x);
  require(X.cols == 1 && X.rows == A.rows, "matvec_t: shape mismatch");
  const std::size_t m = A.rows, k = A.cols;
  Node n;
  n.op = Op::MatTVec;
  n.rows = k;
  n.cols = 1;
  n.value.assign(k, 0.0);
  const double* av = A.data();
  const double* xv = X.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double s = xv[i];
    const double* ar = av + i * k;
    for (std::size_t j = 0; j < k; ++j) n.value[j] += ar[j] * s;
  }
  n.a = a.id;
  n.b = x.id;
  return push(std::move(n));
}

namespace {

template <class F>
std::vector<double> zip(const double* a, const double* b, std::size_t n, F f) {
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(a[i], b[i]);
  return out;
}

template <class F>
std::vector<double> map(const double* a, std::size_t n, F f) {
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(a[i]);
  return out;
}

}  // namespace

#define PARENTING_BINARY(NAME, OP, EXPR)                                        \
  Var Tape::NAME(Var a, Var b) {                                              \
    const auto& A = node(a);                                                  \
    const auto& B = node(b);                                                  \
    require(A.rows == B.rows && A.cols == B.cols, #NAME ": shape mismatch");  \
    Node n;                                                                   \
    n.op = Op::OP;                                                            \
    n.rows = A.rows;                                                          \
    n.cols = A.cols;                                                          \
    n.value = zip(A.data(), B.data(), A.rows * A.cols, [](double x, double y) { return EXPR; }); \
    n.a = a.id;                                                               \
    n.b = b.id;                                                               \
    return push(std::move(n));                                                \
  }

PARENTING_BINARY(add, Add, x + y)
PARENTING_BINARY(sub, Sub, x - y)
PARENTING_BINARY(mul, Mul, x * y)
#undef PARENTING_BINARY

#define PARENTING_UNARY(NAME, OP, EXPR)                                        \
  Var Tape::NAME(Var v) {                                                    \
    const auto& V = node(v);                                                 \
    Node n;                                                                  \
    n.op = Op::OP;                                                           \
    n.rows = V.rows;                                                         \
    n.cols = V.cols;                                                         \
    n.value = map(V.data(), V.rows * V.cols, [](double x) { return EXPR; }); \
    n.a = v.id;                                                              \
    return push(std::move(n));                                               \
  }

PARENTING_UNARY(one_minus, OneMinus, 1.0 - x)
PARENTING_UNARY(tanh, Tanh, std::tanh(x))
PARENTING_UNARY(sigmoid, Sigmoid, sigmoid_of(x))
PARENTING_UNARY(log, Log, std::log(std::max(x, kLogFloor)))
#undef PARENTING_UNARY

Var Tape::mul_scalar(Var v, Var s) {
  const auto& V = node(v);
  const auto& S = node(s);
  require(S.rows * S.cols == 1, "mul_scalar: second operand must be 1x1");
  const double k = S.data()[0];
  Node n;
  n.op = Op::MulScalar;
  n.rows = V.rows;
  n.cols = V.cols;
  n.value = map(V.data(), V.rows * V.cols, [k](double x) { return x * k; });
  n.a = v.id;
  n.b = s.id;
  return push(std::move(n));
}

Var Tape::scale(Var v, double c) {
  const auto& V = node(v);
  Node n;
  n.op = Op::Scale;
  n.rows = V.rows;
  n.cols = V.cols;
  n.value = map(V.data(), V.rows * V.cols, [c](double x) { return x * c; });
  n.a = v.id;
  n.c = c;
  return push(std::move(n));
}

Var Tape::softmax(Var v) {
  const auto& V = node(v);
  require(V.cols == 1 && V.rows > 0, "softmax expects a non-empty column vector");
  const double* x = V.data();
  const double mx = *std::max_element(x, x + V.rows);
  Node n;
  n.op = Op::Softmax;
  n.rows = V.rows;
  n.cols = 1;
  n.value.resize(V.rows);
  double total = 0.0;
  for (std::size_t i = 0; i < V.rows; ++i) total += (n.value[i] = std::exp(x[i] - mx));
  for (auto& y : n.value) y /= total;
  n.a = v.id;
  return push(std::move(n));
}

Var Tape::row(Var matrix, std::size_t index) {
  const auto& M = node(matrix);
  require(index < M.rows, "row: index out of range");
  Node n;
  n.op = Op::Row;
  n.rows = M.cols;
  n.cols = 1;
  n.value.assign(M.data() + index * M.cols, M.data() + (index + 1) * M.cols);
  n.a = matrix.id;
  n.index = {index};
  return push(std::move(n));
}

Var Tape::concat(std::span<const Var> parts) {
  require(!parts.empty(), "concat: no inputs");
  Node n;
  n.op = Op::Concat;
  n.cols = 1;
  for (Var p : parts) {
    const auto& P = node(p);
    require(P.cols == 1, "concat expects column vectors");
    n.value.insert(n.value.end(), P.data(), P.data() + P.rows);
    n.inputs.push_back(p.id);
  }
  n.rows = n.value.size();
  return push(std::move(n));
}

Var Tape::stack_rows(std::span<const Var> rows_in) {
  require(!rows_in.empty(), "stack_rows: no inputs");
  const std::size_t width = node(rows_in.front()).rows;
  Node n;
  n.op = Op::StackRows;
  n.rows = rows_in.size();
  n.cols = width;
  n.value.reserve(n.rows * width);
  for (Var r : rows_in) {
    const auto& R = node(r);
    require(R.cols == 1 && R.rows == width, "stack_rows expects equal-length column vectors");
    n.value.insert(n.value.end(), R.data(), R.data() + width);
    n.inputs.push_back(r.id);
  }
  return push(std::move(n));
}

Var Tape::slice(Var v, std::size_t offset, std::size_t length) {
  const auto& V = node(v);
  require(V.cols == 1 && offset + length <= V.rows, "slice out of range");
  Node n;
  n.op = Op::Slice;
  n.rows = length;
  n.cols = 1;
  n.value.assign(V.data() + offset, V.data() + offset + length);
  n.a = v.id;
  n.index = {offset};
  return push(std::move(n));
}

Var Tape::gather(Var v, std::size_t index) {
  const auto& V = node(v);
  require(index < V.rows * V.cols, "gather: index out of range");
  Node n;
  n.op = Op::Gather;
  n.rows = n.cols = 1;
  n.value = {V.data()[index]};
  n.a = v.id;
  n.index = {index};
  return push(std::move(n));
}

Var Tape::sum(Var v) {
  const auto& V = node(v);
  double s = 0.0;
  for (std::size_t i = 0; i < V.rows * V.cols; ++i) s += V.data()[i];
  Node n;
  n.op = Op::Sum;
  n.rows = n.cols = 1;
  n.value = {s};
  n.a = v.id;
  return push(std::move(n));
}

Var Tape::scatter_add(Var base, Var src, std::vector<std::size_t> index) {
  const auto& B = node(base);
  const auto& S = node(src);
  require(B.cols == 1 && S.cols == 1 && S.rows == index.size(), "scatter_add: shape mismatch");
  Node n;
  n.op = Op::ScatterAdd;
  n.rows = B.rows;
  n.cols = 1;
  n.value.assign(B.data(), B.data() + B.rows);
  for (std::size_t i = 0; i < index.size(); ++i) {
    require(index[i] < B.rows, "scatter_add: index out of range");
    n.value[index[i]] += S.data()[i];
  }
  n.a = base.id;
  n.b = src.id;
  n.index = std::move(index);
  return push(std::move(n));
}

std::vector<double>& Tape::grad_of(std::uint32_t id) {
  auto& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(n.rows * n.cols, 0.0);
  return n.grad;
}

void Tape::backward(Var loss, double seed) {
  if (!requires_grad_) throw std::logic_error("backward() on a tape created without gradients");
  const auto& L = node(loss);
  if (L.rows * L.cols != 1) throw std::invalid_argument("backward() needs a scalar loss");
  for (auto& n : nodes_) n.grad.clear();
  grad_of(loss.id)[0] = seed;
  for (std::uint32_t id = loss.id + 1; id-- > 0;) {
    if (!nodes_[id].grad.empty()) propagate(id);
  }
}

void Tape::propagate(std::uint32_t id) {
  // References into nodes_ stay valid: backward never appends nodes.
  const Node& n = nodes_[id];
  const double* g = n.grad.data();
  const std::size_t size = n.rows * n.cols;
  switch (n.op) {
    case Op::Constant:
    case Op::Param:
      break;
    case Op::MatMul: {
      const Node& A = nodes_[n.a];
      const Node& B = nodes_[n.b];
      const std::size_t m = A.rows, k = A.cols, p = B.cols;
      const double* av = A.data();
      const double* bv = B.data();
      if (A.op != Op::Constant) {
        auto& ga = grad_of(n.a);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < k; ++j) {
            double s = 0.0;
            for (std::size_t c = 0; c < p; ++c) s += g[i * p + c] * bv[j * p + c];
            ga[i * k + j] += s;
          }
      }
      if (B.op != Op::Constant) {
        auto& gb = grad_of(n.b);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < k; ++j) {
            const double a = av[i * k + j];
            for (std::size_t c = 0; c < p; ++c) gb[j * p + c] += a * g[i * p + c];
          }
      }
      break;
    }
    case Op::MatTVec: {
      const Node& A = nodes_[n.a];
      const Node& X = nodes_[n.b];
      const std::size_t m = A.rows, k = A.cols;
      const double* av = A.data();
      const double* xv = X.data();
      if (A.op != Op::Constant) {
        auto& ga = grad_of(n.a);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < k; ++j) ga[i * k + j] += xv[i] * g[j];
      }
      if (X.op != Op::Constant) {
        auto& gx = grad_of(n.b);
        for (std::size_t i = 0; i < m; ++i) {
          double s = 0.0;
          for (std::size_t j = 0; j < k; ++j) s += av[i * k + j] * g[j];
          gx[i] += s;
        }
      }
      break;
    }
    case Op::Add: {
      auto& ga = grad_of(n.a);
      for (std::size_t i = 0; i < size; ++i) ga[i] += g[i];
      auto& gb = grad_of(n.b);
      for (std::size_t i = 0; i < size; ++i) gb[i] += g[i];
      break;
    }
    case Op::Sub: {
      auto& ga = grad_of(n.a);
      for (std::size_t i = 0; i < size; ++i) ga[i] += g[i];
      auto& gb = grad_of(n.b);
      for (std::size_t i = 0; i < size; ++i) gb[i] -= g[i];
      break;
    }
    case Op::Mul: {
      const double* av = nodes_[n.a].data();
      const double* bv = nodes_[n.b].data();
      auto& ga = grad_of(n.a);
      for (std::size_t i = 0; i < size; ++i) ga[i] += g[i] * bv[i];
      auto& gb = grad_of(n.b);
      for (std::size_t i = 0; i < size; ++i) gb[i] += g[i] * av[i];
      break;
    }
    case Op::MulScalar: {
      const double* av = nodes_[n.a].data();
      const double k = nodes_[n.b].data()[0];
      auto& ga = grad_of(n.a);
      double s = 0.0;
      for (std::size_t i = 0; i < size; ++i) {
        ga[i] += g[i] * k;
        s += g[i] * av[i];
      }
      grad_of(n.b)[0] += s;
      break;
    }
    case Op::Scale: {
      auto& ga = grad_of(n.a);
      for (std::size_t i = 0; i < size; ++i) ga[i] += g[i] * n.c;
      break;
    }
    case Op::OneMinus: {
      auto& ga = grad_of(n.a);
      for (std::size_t i = 0; i < size; ++i) ga[i] -= g[i];
      break;
    }
    case Op::Tanh: {
      auto& ga = grad_of(n.a);
      for (std::size_t i = 0; i < size; ++i) ga[i] += g[i] * (1.0 - n.value[i] * n.value[i]);
      break;
    }
    case Op::Sigmoid: {
      auto& ga = grad_of(n.a);
      for (std::size_t i = 0; i < size; ++i) ga[i] += g[i] * n.value[i] * (1.0 - n.value[i]);
      break;
    }
    case Op::Softmax: {
      double dot = 0.0;
      for (std::size_t i = 0; i < size; ++i) dot += g[i] * n.value[i];
      auto& ga = grad_of(n.a);
      for (std::size_t i = 0; i < size; ++i) ga[i] += n.value[i] * (g[i] - dot);
      break;
    }
    case Op::Log: {
      const double* av = nodes_[n.a].data();
      auto& ga = grad_of(n.a);
      for (std::size_t i = 0; i < size; ++i)
        if (av[i] > kLogFloor) ga[i] += g[i] / av[i];
      break;
    }
    case Op::Row: {
      const std::size_t width = n.rows;
      auto& ga = grad_of(n.a);
      double* dst = ga.data() + n.index[0] * width;
      for (std::size_t i = 0; i < width; ++i) dst[i] += g[i];
      break;
    }
    case Op::Concat:
    case Op::StackRows: {
      std::size_t offset = 0;
      for (auto in : n.inputs) {
        const std::size_t len = nodes_[in].rows;
        auto& gi = grad_of(in);
        for (std::size_t i = 0; i < len; ++i) gi[i] += g[offset + i];
        offset += len;
      }
      break;
    }
    case Op::Slice: {
      auto& ga = grad_of(n.a);
      for (std::size_t i = 0; i < size; ++i) ga[n.index[0] + i] += g[i];
      break;
    }
    case Op::Gather:
      grad_of(n.a)[n.index[0]] += g[0];
      break;
    case Op::Sum: {
      auto& ga = grad_of(n.a);
      for (auto& x : ga) x += g[0];
      break;
    }
    case Op::ScatterAdd: {
      auto& ga = grad_of(n.a);
      for (std::size_t i = 0; i < size; ++i) ga[i] += g[i];
      auto& gb = grad_of(n.b);
      for (std::size_t i = 0; i < n.index.size(); ++i) gb[i] += g[n.index[i]];
      break;
    }
  }
}

}  // namespace parenting::ad
