#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "dcvq/errors.hpp"

namespace dcvq {

// Dense row-major tensor of 64-bit floats. A Tensor on its own is a plain
// value; differentiable computation happens on a Tape (below).
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;
  bool requires_grad = false;
  std::vector<double> grad;  // empty unless filled by a backward pass

  Tensor() = default;
  Tensor(std::vector<std::size_t> s, std::vector<double> v);

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor scalar(double x);
  static Tensor vector(std::vector<double> v);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v);

  std::size_t numel() const { return values.size(); }
  std::size_t rank() const { return shape.size(); }
  bool is_scalar() const { return values.size() == 1; }
  std::size_t rows() const { return shape.at(0); }
  std::size_t cols() const { return shape.at(1); }

  double& at(std::size_t i, std::size_t j) { return values[i * shape[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return values[i * shape[1] + j]; }

  bool all_finite() const;
  std::string shape_str() const;
};

// Handle to a node on a Tape.
struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

// Records a computation graph in execution order, which is a topological
// order by construction: an operation's inputs always precede it. backward()
// sweeps the record once in reverse, so every node is visited exactly once
// and gradients of shared nodes accumulate.
class Tape {
 public:
  // Leaf whose gradient will be tracked.
  Var leaf(Tensor t);
  // Leaf treated as a constant.
  Var constant(Tensor t);
  // Extension point used by the op library: appends a computed node.
  Var emplace(Tensor value, bool requires_grad, std::function<void(Tape&)> pull);

  const Tensor& val(Var v) const { return nodes_[check(v)].value; }
  bool requires_grad(Var v) const { return nodes_[check(v)].requires_grad; }

  // Gradient buffer of a node; valid after backward(). Throws if the node
  // does not track gradients.
  const std::vector<double>& grad(Var v) const;
  std::vector<double>& grad_mut(Var v);

  // Reverse accumulation from a scalar root. Gradients of all reachable
  // requires_grad nodes are (re)computed.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    bool requires_grad = false;
    std::function<void(Tape&)> pull;  // empty for leaves/constants
  };

  std::size_t check(Var v) const;
  std::vector<Node> nodes_;
};

// Sum accumulated in ascending value order. The result depends only on the
// multiset of addends, which makes reductions over the token axis exactly
// invariant under token permutations.
double stable_sum(std::vector<double> xs);

enum class SumOrder { fast, sorted };

// ---- Differentiable operations -------------------------------------------
// All ops validate shapes and record their gradient rule on the tape.

// (m x k) * (k x n) -> (m x n). SumOrder::sorted accumulates each inner
// product in value order (used where the contracted axis is the token axis).
Var matmul(Tape& t, Var a, Var b, SumOrder order = SumOrder::fast);

Var add(Tape& t, Var a, Var b);  // same shape, elementwise
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double alpha);

// Row-wise softmax with max-subtraction; denominators use stable_sum.
Var softmax_rows(Tape& t, Var m);

// Exact GELU: x * Phi(x) = 0.5 x (1 + erf(x / sqrt 2)), elementwise.
Var gelu(Tape& t, Var x);

// Per-row normalization of an n x c matrix, then affine with gain/bias
// (vectors of length c). eps is added inside the square root.
Var layer_norm(Tape& t, Var x, Var gain, Var bias, double eps = 1e-5);

Var transpose(Tape& t, Var m);

// Concatenate two matrices along the last axis: (n x a) ++ (n x b) -> n x (a+b).
Var concat_cols(Tape& t, Var a, Var b);

// Gather rows of a matrix by an index list; duplicate indices accumulate
// gradient into the same source row.
Var slice_rows(Tape& t, Var m, const std::vector<std::size_t>& idx);

// Contiguous column range [start, start+len) of a matrix.
Var slice_cols(Tape& t, Var m, std::size_t start, std::size_t len);

// Mean over one axis of an n-d tensor; the axis is removed from the shape.
// Accumulation uses stable_sum (order-invariant).
Var mean_axis(Tape& t, Var v, std::size_t axis);

// Broadcast-add a length-c row (shape {c} or {1,c}) to every row of n x c.
Var add_row(Tape& t, Var m, Var row);

// Same values, new shape (numel must match).
Var reshape(Tape& t, Var v, std::vector<std::size_t> shape);

// Pack scalar nodes into a vector of length n.
Var stack_scalars(Tape& t, const std::vector<Var>& xs);

// Order-invariant sum of all entries -> scalar.
Var sum_all(Tape& t, Var v);

// ---- Gradient checking ----------------------------------------------------

// Builds the graph via `build` (which receives leaves created from `inputs`,
// all marked requires_grad), runs backward from the returned scalar root, and
// compares every analytic leaf gradient entry against central finite
// differences with step h. Returns the worst relative error with denominator
// max(|analytic|, |numeric|, 1e-8).
using GraphBuilder = std::function<Var(Tape&, const std::vector<Var>&)>;

double grad_check(const GraphBuilder& build, const std::vector<Tensor>& inputs,
                  double h = 1e-5);

}  // namespace dcvq
