#include "dcvq/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <utility>

namespace dcvq {

namespace {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got shape " + t.shape_str());
  }
}

double gelu_value(double x) {
  return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2));
}

double gelu_derivative(double x) {
  const double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  const double Phi = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  return Phi + x * phi;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> v)
    : shape(std::move(s)), values(std::move(v)) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("tensor: " + std::to_string(values.size()) +
                     " values do not fill shape " + shape_str());
  }
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::scalar(double x) { return Tensor({}, {x}); }

Tensor Tensor::vector(std::vector<double> v) {
  std::size_t n = v.size();
  return Tensor({n}, std::move(v));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
  return Tensor({rows, cols}, std::move(v));
}

bool Tensor::all_finite() const {
  for (double x : values) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

// ---- Tape ------------------------------------------------------------------

std::size_t Tape::check(Var v) const {
  if (v.id >= nodes_.size()) throw ContractError("tape: dangling Var handle");
  return v.id;
}

Var Tape::leaf(Tensor t) {
  t.requires_grad = true;
  return emplace(std::move(t), true, nullptr);
}

Var Tape::constant(Tensor t) {
  t.requires_grad = false;
  return emplace(std::move(t), false, nullptr);
}

Var Tape::emplace(Tensor value, bool requires_grad, std::function<void(Tape&)> pull) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.grad.assign(n.value.numel(), 0.0);
  n.pull = std::move(pull);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

const std::vector<double>& Tape::grad(Var v) const {
  const Node& n = nodes_[check(v)];
  if (!n.requires_grad) throw ContractError("tape: node does not track gradients");
  return n.grad;
}

std::vector<double>& Tape::grad_mut(Var v) {
  Node& n = nodes_[check(v)];
  if (!n.requires_grad) throw ContractError("tape: node does not track gradients");
  return n.grad;
}

void Tape::backward(Var root) {
  std::size_t r = check(root);
  if (nodes_[r].value.numel() != 1) {
    throw ContractError("backward: root must be scalar, got shape " +
                        nodes_[r].value.shape_str());
  }
  if (!nodes_[r].requires_grad) return;  // constant graph, nothing to do
  for (std::size_t i = 0; i <= r; ++i) {
    if (nodes_[i].requires_grad) std::fill(nodes_[i].grad.begin(), nodes_[i].grad.end(), 0.0);
  }
  nodes_[r].grad[0] = 1.0;
  for (std::size_t i = r + 1; i-- > 0;) {
    if (nodes_[i].requires_grad && nodes_[i].pull) nodes_[i].pull(*this);
  }
}

double stable_sum(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  double s = 0.0;
  for (double x : xs) s += x;
  return s;
}

namespace {

bool wants_grad(const Tape& t, std::initializer_list<Var> inputs) {
  for (Var v : inputs) {
    if (t.requires_grad(v)) return true;
  }
  return false;
}

}  // namespace

// ---- matmul ----------------------------------------------------------------

Var matmul(Tape& t, Var a, Var b, SumOrder order) {
  const Tensor& A = t.val(a);
  const Tensor& B = t.val(b);
  require_matrix(A, "matmul");
  require_matrix(B, "matmul");
  if (A.cols() != B.rows()) {
    throw ShapeError("matmul: inner dimensions differ, " + A.shape_str() + " vs " +
                     B.shape_str());
  }
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  Tensor C = Tensor::zeros({m, n});
  if (order == SumOrder::fast) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = A.values[i * k + p];
        const double* brow = B.values.data() + p * n;
        double* crow = C.values.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
      }
    }
  } else {
    std::vector<double> terms(k);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t p = 0; p < k; ++p) {
          terms[p] = A.values[i * k + p] * B.values[p * n + j];
        }
        C.values[i * n + j] = stable_sum(terms);
      }
    }
  }

  bool rg = wants_grad(t, {a, b});
  std::function<void(Tape&)> pull;
  if (rg) {
    Var out{t.size()};
    pull = [a, b, out, m, k, n](Tape& tp) {
      const std::vector<double>& g = tp.grad(out);
      const Tensor& Av = tp.val(a);
      const Tensor& Bv = tp.val(b);
      if (tp.requires_grad(a)) {
        std::vector<double>& ga = tp.grad_mut(a);
        // dA = dC * B^T
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * Bv.values[p * n + j];
            ga[i * k + p] += s;
          }
        }
      }
      if (tp.requires_grad(b)) {
        std::vector<double>& gb = tp.grad_mut(b);
        // dB = A^T * dC
        for (std::size_t p = 0; p < k; ++p) {
          for (std::size_t i = 0; i < m; ++i) {
            const double aip = Av.values[i * k + p];
            for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
          }
        }
      }
    };
  }
  return t.emplace(std::move(C), rg, std::move(pull));
}

// ---- elementwise -----------------------------------------------------------

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape != b.shape) {
    throw ShapeError(std::string(op) + ": shape mismatch, " + a.shape_str() + " vs " +
                     b.shape_str());
  }
}

}  // namespace

Var add(Tape& t, Var a, Var b) {
  const Tensor& A = t.val(a);
  const Tensor& B = t.val(b);
  require_same_shape(A, B, "add");
  Tensor C = A;
  for (std::size_t i = 0; i < C.numel(); ++i) C.values[i] += B.values[i];
  bool rg = wants_grad(t, {a, b});
  std::function<void(Tape&)> pull;
  if (rg) {
    Var out{t.size()};
    pull = [a, b, out](Tape& tp) {
      const std::vector<double>& g = tp.grad(out);
      if (tp.requires_grad(a)) {
        std::vector<double>& ga = tp.grad_mut(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (tp.requires_grad(b)) {
        std::vector<double>& gb = tp.grad_mut(b);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    };
  }
  return t.emplace(std::move(C), rg, std::move(pull));
}

Var sub(Tape& t, Var a, Var b) {
  const Tensor& A = t.val(a);
  const Tensor& B = t.val(b);
  require_same_shape(A, B, "sub");
  Tensor C = A;
  for (std::size_t i = 0; i < C.numel(); ++i) C.values[i] -= B.values[i];
  bool rg = wants_grad(t, {a, b});
  std::function<void(Tape&)> pull;
  if (rg) {
    Var out{t.size()};
    pull = [a, b, out](Tape& tp) {
      const std::vector<double>& g = tp.grad(out);
      if (tp.requires_grad(a)) {
        std::vector<double>& ga = tp.grad_mut(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (tp.requires_grad(b)) {
        std::vector<double>& gb = tp.grad_mut(b);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    };
  }
  return t.emplace(std::move(C), rg, std::move(pull));
}

Var mul(Tape& t, Var a, Var b) {
  const Tensor& A = t.val(a);
  const Tensor& B = t.val(b);
  require_same_shape(A, B, "mul");
  Tensor C = A;
  for (std::size_t i = 0; i < C.numel(); ++i) C.values[i] *= B.values[i];
  bool rg = wants_grad(t, {a, b});
  std::function<void(Tape&)> pull;
  if (rg) {
    Var out{t.size()};
    pull = [a, b, out](Tape& tp) {
      const std::vector<double>& g = tp.grad(out);
      const Tensor& Av = tp.val(a);
      const Tensor& Bv = tp.val(b);
      if (tp.requires_grad(a)) {
        std::vector<double>& ga = tp.grad_mut(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * Bv.values[i];
      }
      if (tp.requires_grad(b)) {
        std::vector<double>& gb = tp.grad_mut(b);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * Av.values[i];
      }
    };
  }
  return t.emplace(std::move(C), rg, std::move(pull));
}

Var scale(Tape& t, Var a, double alpha) {
  Tensor C = t.val(a);
  for (double& x : C.values) x *= alpha;
  bool rg = t.requires_grad(a);
  std::function<void(Tape&)> pull;
  if (rg) {
    Var out{t.size()};
    pull = [a, out, alpha](Tape& tp) {
      const std::vector<double>& g = tp.grad(out);
      std::vector<double>& ga = tp.grad_mut(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += alpha * g[i];
    };
  }
  return t.emplace(std::move(C), rg, std::move(pull));
}

// ---- softmax ----------------------------------------------------------------

Var softmax_rows(Tape& t, Var m) {
  const Tensor& M = t.val(m);
  require_matrix(M, "softmax_rows");
  const std::size_t r = M.rows(), c = M.cols();
  Tensor Y = Tensor::zeros({r, c});
  std::vector<double> exps(c);
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = M.values.data() + i * c;
    double mx = row[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    for (std::size_t j = 0; j < c; ++j) exps[j] = std::exp(row[j] - mx);
    const double denom = stable_sum(exps);
    for (std::size_t j = 0; j < c; ++j) Y.values[i * c + j] = exps[j] / denom;
  }
  bool rg = t.requires_grad(m);
  std::function<void(Tape&)> pull;
  if (rg) {
    Var out{t.size()};
    pull = [m, out, r, c](Tape& tp) {
      const std::vector<double>& g = tp.grad(out);
      const Tensor& Yv = tp.val(out);
      std::vector<double>& gm = tp.grad_mut(m);
      for (std::size_t i = 0; i < r; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * Yv.values[i * c + j];
        for (std::size_t j = 0; j < c; ++j) {
          gm[i * c + j] += Yv.values[i * c + j] * (g[i * c + j] - dot);
        }
      }
    };
  }
  return t.emplace(std::move(Y), rg, std::move(pull));
}

// ---- gelu --------------------------------------------------------------------

Var gelu(Tape& t, Var x) {
  Tensor Y = t.val(x);
  for (double& v : Y.values) v = gelu_value(v);
  bool rg = t.requires_grad(x);
  std::function<void(Tape&)> pull;
  if (rg) {
    Var out{t.size()};
    pull = [x, out](Tape& tp) {
      const std::vector<double>& g = tp.grad(out);
      const Tensor& X = tp.val(x);
      std::vector<double>& gx = tp.grad_mut(x);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * gelu_derivative(X.values[i]);
    };
  }
  return t.emplace(std::move(Y), rg, std::move(pull));
}

// ---- layer norm ---------------------------------------------------------------

Var layer_norm(Tape& t, Var x, Var gain, Var bias, double eps) {
  const Tensor& X = t.val(x);
  const Tensor& G = t.val(gain);
  const Tensor& B = t.val(bias);
  require_matrix(X, "layer_norm");
  const std::size_t n = X.rows(), c = X.cols();
  if (G.numel() != c || B.numel() != c) {
    throw ShapeError("layer_norm: gain/bias must have length " + std::to_string(c));
  }
  Tensor Y = Tensor::zeros({n, c});
  std::vector<double> inv_std(n), xhat(n * c);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = X.values.data() + i * c;
    double mean = 0.0;
    for (std::size_t j = 0; j < c; ++j) mean += row[j];
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(c);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[i] = inv;
    for (std::size_t j = 0; j < c; ++j) {
      const double xh = (row[j] - mean) * inv;
      xhat[i * c + j] = xh;
      Y.values[i * c + j] = G.values[j] * xh + B.values[j];
    }
  }
  bool rg = wants_grad(t, {x, gain, bias});
  std::function<void(Tape&)> pull;
  if (rg) {
    Var out{t.size()};
    pull = [x, gain, bias, out, n, c, inv_std = std::move(inv_std),
            xhat = std::move(xhat)](Tape& tp) {
      const std::vector<double>& g = tp.grad(out);
      const Tensor& G = tp.val(gain);
      if (tp.requires_grad(gain)) {
        std::vector<double>& gg = tp.grad_mut(gain);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < c; ++j) gg[j] += g[i * c + j] * xhat[i * c + j];
        }
      }
      if (tp.requires_grad(bias)) {
        std::vector<double>& gb = tp.grad_mut(bias);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < c; ++j) gb[j] += g[i * c + j];
        }
      }
      if (tp.requires_grad(x)) {
        std::vector<double>& gx = tp.grad_mut(x);
        for (std::size_t i = 0; i < n; ++i) {
          double mean_dxh = 0.0, mean_dxh_xh = 0.0;
          for (std::size_t j = 0; j < c; ++j) {
            const double dxh = g[i * c + j] * G.values[j];
            mean_dxh += dxh;
            mean_dxh_xh += dxh * xhat[i * c + j];
          }
          mean_dxh /= static_cast<double>(c);
          mean_dxh_xh /= static_cast<double>(c);
          for (std::size_t j = 0; j < c; ++j) {
            const double dxh = g[i * c + j] * G.values[j];
            gx[i * c + j] += inv_std[i] * (dxh - mean_dxh - xhat[i * c + j] * mean_dxh_xh);
          }
        }
      }
    };
  }
  return t.emplace(std::move(Y), rg, std::move(pull));
}

// ---- structure ops --------------------------------------------------------------

Var transpose(Tape& t, Var m) {
  const Tensor& M = t.val(m);
  require_matrix(M, "transpose");
  const std::size_t r = M.rows(), c = M.cols();
  Tensor Y = Tensor::zeros({c, r});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) Y.values[j * r + i] = M.values[i * c + j];
  }
  bool rg = t.requires_grad(m);
  std::function<void(Tape&)> pull;
  if (rg) {
    Var out{t.size()};
    pull = [m, out, r, c](Tape& tp) {
      const std::vector<double>& g = tp.grad(out);
      std::vector<double>& gm = tp.grad_mut(m);
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) gm[i * c + j] += g[j * r + i];
      }
    };
  }
  return t.emplace(std::move(Y), rg, std::move(pull));
}

Var concat_cols(Tape& t, Var a, Var b) {
  const Tensor& A = t.val(a);
  const Tensor& B = t.val(b);
  require_matrix(A, "concat_cols");
  require_matrix(B, "concat_cols");
  if (A.rows() != B.rows()) {
    throw ShapeError("concat_cols: row counts differ, " + A.shape_str() + " vs " +
                     B.shape_str());
  }
  const std::size_t n = A.rows(), ca = A.cols(), cb = B.cols();
  Tensor Y = Tensor::zeros({n, ca + cb});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(A.values.data() + i * ca, ca, Y.values.data() + i * (ca + cb));
    std::copy_n(B.values.data() + i * cb, cb, Y.values.data() + i * (ca + cb) + ca);
  }
  bool rg = wants_grad(t, {a, b});
  std::function<void(Tape&)> pull;
  if (rg) {
    Var out{t.size()};
    pull = [a, b, out, n, ca, cb](Tape& tp) {
      const std::vector<double>& g = tp.grad(out);
      if (tp.requires_grad(a)) {
        std::vector<double>& ga = tp.grad_mut(a);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < ca; ++j) ga[i * ca + j] += g[i * (ca + cb) + j];
        }
      }
      if (tp.requires_grad(b)) {
        std::vector<double>& gb = tp.grad_mut(b);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < cb; ++j) gb[i * cb + j] += g[i * (ca + cb) + ca + j];
        }
      }
    };
  }
  return t.emplace(std::move(Y), rg, std::move(pull));
}

Var slice_rows(Tape& t, Var m, const std::vector<std::size_t>& idx) {
  const Tensor& M = t.val(m);
  require_matrix(M, "slice_rows");
  const std::size_t c = M.cols();
  for (std::size_t i : idx) {
    if (i >= M.rows()) {
      throw ShapeError("slice_rows: index " + std::to_string(i) + " out of range for " +
                       M.shape_str());
    }
  }
  Tensor Y = Tensor::zeros({idx.size(), c});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    std::copy_n(M.values.data() + idx[r] * c, c, Y.values.data() + r * c);
  }
  bool rg = t.requires_grad(m);
  std::function<void(Tape&)> pull;
  if (rg) {
    Var out{t.size()};
    pull = [m, out, idx, c](Tape& tp) {
      const std::vector<double>& g = tp.grad(out);
      std::vector<double>& gm = tp.grad_mut(m);
      for (std::size_t r = 0; r < idx.size(); ++r) {
        for (std::size_t j = 0; j < c; ++j) gm[idx[r] * c + j] += g[r * c + j];
      }
    };
  }
  return t.emplace(std::move(Y), rg, std::move(pull));
}

Var slice_cols(Tape& t, Var m, std::size_t start, std::size_t len) {
  const Tensor& M = t.val(m);
  require_matrix(M, "slice_cols");
  const std::size_t n = M.rows(), c = M.cols();
  if (start + len > c) {
    throw ShapeError("slice_cols: range [" + std::to_string(start) + ", " +
                     std::to_string(start + len) + ") out of range for " + M.shape_str());
  }
  Tensor Y = Tensor::zeros({n, len});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(M.values.data() + i * c + start, len, Y.values.data() + i * len);
  }
  bool rg = t.requires_grad(m);
  std::function<void(Tape&)> pull;
  if (rg) {
    Var out{t.size()};
    pull = [m, out, start, len, n, c](Tape& tp) {
      const std::vector<double>& g = tp.grad(out);
      std::vector<double>& gm = tp.grad_mut(m);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < len; ++j) gm[i * c + start + j] += g[i * len + j];
      }
    };
  }
  return t.emplace(std::move(Y), rg, std::move(pull));
}

Var mean_axis(Tape& t, Var v, std::size_t axis) {
  const Tensor& X = t.val(v);
  if (axis >= X.rank()) {
    throw ShapeError("mean_axis: axis " + std::to_string(axis) + " out of range for " +
                     X.shape_str());
  }
  const std::size_t len = X.shape[axis];
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= X.shape[i];
  for (std::size_t i = axis + 1; i < X.rank(); ++i) inner *= X.shape[i];
  std::vector<std::size_t> out_shape;
  for (std::size_t i = 0; i < X.rank(); ++i) {
    if (i != axis) out_shape.push_back(X.shape[i]);
  }
  Tensor Y = Tensor::zeros(out_shape);
  std::vector<double> terms(len);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      for (std::size_t a = 0; a < len; ++a) {
        terms[a] = X.values[(o * len + a) * inner + in];
      }
      Y.values[o * inner + in] = stable_sum(terms) / static_cast<double>(len);
    }
  }
  bool rg = t.requires_grad(v);
  std::function<void(Tape&)> pull;
  if (rg) {
    Var out{t.size()};
    pull = [v, out, outer, inner, len](Tape& tp) {
      const std::vector<double>& g = tp.grad(out);
      std::vector<double>& gv = tp.grad_mut(v);
      const double inv = 1.0 / static_cast<double>(len);
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
          const double gi = g[o * inner + in] * inv;
          for (std::size_t a = 0; a < len; ++a) gv[(o * len + a) * inner + in] += gi;
        }
      }
    };
  }
  return t.emplace(std::move(Y), rg, std::move(pull));
}

Var add_row(Tape& t, Var m, Var row) {
  const Tensor& M = t.val(m);
  const Tensor& R = t.val(row);
  require_matrix(M, "add_row");
  const std::size_t n = M.rows(), c = M.cols();
  if (R.numel() != c || R.rank() > 2 || (R.rank() == 2 && R.rows() != 1)) {
    throw ShapeError("add_row: row of shape " + R.shape_str() + " does not broadcast over " +
                     M.shape_str());
  }
  Tensor Y = M;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) Y.values[i * c + j] += R.values[j];
  }
  bool rg = wants_grad(t, {m, row});
  std::function<void(Tape&)> pull;
  if (rg) {
    Var out{t.size()};
    pull = [m, row, out, n, c](Tape& tp) {
      const std::vector<double>& g = tp.grad(out);
      if (tp.requires_grad(m)) {
        std::vector<double>& gm = tp.grad_mut(m);
        for (std::size_t i = 0; i < g.size(); ++i) gm[i] += g[i];
      }
      if (tp.requires_grad(row)) {
        std::vector<double>& gr = tp.grad_mut(row);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < c; ++j) gr[j] += g[i * c + j];
        }
      }
    };
  }
  return t.emplace(std::move(Y), rg, std::move(pull));
}

Var reshape(Tape& t, Var v, std::vector<std::size_t> shape) {
  const Tensor& X = t.val(v);
  if (shape_numel(shape) != X.numel()) {
    throw ShapeError("reshape: new shape holds " + std::to_string(shape_numel(shape)) +
                     " values, tensor " + X.shape_str() + " has " + std::to_string(X.numel()));
  }
  Tensor Y(std::move(shape), X.values);
  bool rg = t.requires_grad(v);
  std::function<void(Tape&)> pull;
  if (rg) {
    Var out{t.size()};
    pull = [v, out](Tape& tp) {
      const std::vector<double>& g = tp.grad(out);
      std::vector<double>& gv = tp.grad_mut(v);
      for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i];
    };
  }
  return t.emplace(std::move(Y), rg, std::move(pull));
}

Var stack_scalars(Tape& t, const std::vector<Var>& xs) {
  if (xs.empty()) throw ContractError("stack_scalars: empty input");
  std::vector<double> v(xs.size());
  bool rg = false;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const Tensor& X = t.val(xs[i]);
    if (X.numel() != 1) {
      throw ShapeError("stack_scalars: element " + std::to_string(i) + " has shape " +
                       X.shape_str());
    }
    v[i] = X.values[0];
    rg = rg || t.requires_grad(xs[i]);
  }
  Tensor Y = Tensor::vector(std::move(v));
  std::function<void(Tape&)> pull;
  if (rg) {
    Var out{t.size()};
    pull = [xs, out](Tape& tp) {
      const std::vector<double>& g = tp.grad(out);
      for (std::size_t i = 0; i < xs.size(); ++i) {
        if (tp.requires_grad(xs[i])) tp.grad_mut(xs[i])[0] += g[i];
      }
    };
  }
  return t.emplace(std::move(Y), rg, std::move(pull));
}

Var sum_all(Tape& t, Var v) {
  const Tensor& X = t.val(v);
  Tensor Y = Tensor::scalar(stable_sum(X.values));
  bool rg = t.requires_grad(v);
  std::function<void(Tape&)> pull;
  if (rg) {
    Var out{t.size()};
    pull = [v, out](Tape& tp) {
      const double g = tp.grad(out)[0];
      std::vector<double>& gv = tp.grad_mut(v);
      for (double& x : gv) x += g;
    };
  }
  return t.emplace(std::move(Y), rg, std::move(pull));
}

// ---- gradient checking -------------------------------------------------------

double grad_check(const GraphBuilder& build, const std::vector<Tensor>& inputs, double h) {
  // Analytic pass.
  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    std::vector<Var> leaves;
    leaves.reserve(inputs.size());
    for (const Tensor& in : inputs) leaves.push_back(tape.leaf(in));
    Var root = build(tape, leaves);
    if (tape.val(root).numel() != 1) {
      throw ContractError("grad_check: builder must return a scalar root");
    }
    tape.backward(root);
    for (Var l : leaves) analytic.push_back(tape.grad(l));
  }

  auto eval = [&](const std::vector<Tensor>& ins) {
    Tape tape;
    std::vector<Var> leaves;
    leaves.reserve(ins.size());
    for (const Tensor& in : ins) leaves.push_back(tape.constant(in));
    Var root = build(tape, leaves);
    return tape.val(root).values[0];
  };

  double worst = 0.0;
  std::vector<Tensor> work = inputs;
  for (std::size_t t = 0; t < work.size(); ++t) {
    for (std::size_t e = 0; e < work[t].numel(); ++e) {
      const double orig = work[t].values[e];
      work[t].values[e] = orig + h;
      const double fp = eval(work);
      work[t].values[e] = orig - h;
      const double fm = eval(work);
      work[t].values[e] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[t][e];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace dcvq
