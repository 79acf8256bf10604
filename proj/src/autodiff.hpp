#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace parenting {

/// Dense row-major matrix with a name; vectors are n x 1.
struct Tensor {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::string n, std::size_t r, std::size_t c) : name(std::move(n)), rows(r), cols(c), data(r * c, 0.0) {}

  std::size_t size() const { return data.size(); }
  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  bool operator==(const Tensor&) const = default;
};

namespace ad {

struct Var {
  std::uint32_t id = UINT32_MAX;
  bool valid() const { return id != UINT32_MAX; }
};

enum class Op : std::uint8_t {
  Constant,
  Param,
  MatMul,     // A(m x k) * B(k x n)
  MatTVec,    // A(m x k)^T * x(m)
  Add,
  Sub,
  Mul,        // elementwise
  MulScalar,  // vector * 1x1 node
  Scale,      // vector * constant
  OneMinus,
  Tanh,
  Sigmoid,
  Softmax,
  Log,        // clamped below at kLogFloor
  Row,        // embedding lookup: row of a matrix as a column vector
  Concat,
  StackRows,  // column vectors -> matrix, one row each
  Slice,
  Gather,
  Sum,
  ScatterAdd,
};

inline constexpr double kLogFloor = 1e-12;

/// Records a computation graph and runs reverse-mode differentiation over it.
/// Parameter leaves view the caller's tensors without copying; they must stay
/// alive and unchanged while the tape is in use.
class Tape {
 public:
  explicit Tape(bool requires_grad = true);

  bool requires_grad() const { return requires_grad_; }

  Var constant(std::size_t rows, std::size_t cols, std::vector<double> values);
  Var constant(std::vector<double> values) {
    const auto n = values.size();
    return constant(n, 1, std::move(values));
  }
  Var scalar(double v) { return constant(1, 1, {v}); }
  Var zeros(std::size_t n) { return constant(n, 1, std::vector<double>(n, 0.0)); }

  /// One leaf per slot; repeated calls with the same slot return the same node.
  Var param(const Tensor& tensor, std::size_t slot);

  Var matmul(Var a, Var b);
  Var matvec_t(Var a, Var x);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var mul_scalar(Var v, Var s);
  Var scale(Var v, double c);
  Var one_minus(Var v);
  Var tanh(Var v);
  Var sigmoid(Var v);
  Var softmax(Var v);
  Var log(Var v);
  Var row(Var matrix, std::size_t index);
  Var concat(std::span<const Var> parts);
  Var concat(std::initializer_list<Var> parts) { return concat(std::span<const Var>(parts.begin(), parts.size())); }
  Var stack_rows(std::span<const Var> rows);
  Var slice(Var v, std::size_t offset, std::size_t length);
  Var gather(Var v, std::size_t index);
  Var sum(Var v);
  /// base + scatter(src): out[index[i]] += src[i].
  Var scatter_add(Var base, Var src, std::vector<std::size_t> index);

  std::size_t rows(Var v) const { return node(v).rows; }
  std::size_t cols(Var v) const { return node(v).cols; }
  std::size_t size(Var v) const { return node(v).rows * node(v).cols; }
  std::span<const double> value(Var v) const;
  double item(Var v) const;

  /// Seeds d(loss)/d(loss) = seed and propagates; loss must be 1x1.
  void backward(Var loss, double seed = 1.0);

  /// Gradient of a node after backward(); empty span if the node was unreachable.
  std::span<const double> grad(Var v) const;

  /// Calls fn(slot, gradient) for every parameter leaf that received a gradient.
  template <class Fn>
  void for_each_param_grad(Fn&& fn) const {
    for (std::size_t slot = 0; slot < param_nodes_.size(); ++slot) {
      const auto id = param_nodes_[slot];
      if (id == UINT32_MAX) continue;
      const auto& n = nodes_[id];
      if (!n.grad.empty()) fn(slot, std::span<const double>(n.grad));
    }
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Op op = Op::Constant;
    std::size_t rows = 0, cols = 0;
    std::vector<double> value;
    const double* external = nullptr;
    std::vector<double> grad;
    std::uint32_t a = UINT32_MAX, b = UINT32_MAX;
    std::vector<std::uint32_t> inputs;
    std::vector<std::size_t> index;
    double c = 0.0;

    const double* data() const { return external ? external : value.data(); }
  };

  const Node& node(Var v) const;
  Var push(Node n);
  const double* val(std::uint32_t id) const { return nodes_[id].data(); }
  std::vector<double>& grad_of(std::uint32_t id);
  void propagate(std::uint32_t id);

  bool requires_grad_;
  std::vector<Node> nodes_;
  std::vector<std::uint32_t> param_nodes_;
};

}  // namespace ad
}  // namespace parenting
