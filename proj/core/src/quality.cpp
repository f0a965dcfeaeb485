#include "dcvq/quality.hpp"

#include <cmath>

namespace dcvq {

namespace {

void require_equal_len(std::size_t a, std::size_t b, const char* op) {
  if (a != b) {
    throw ShapeError(std::string(op) + ": length mismatch, " + std::to_string(a) + " vs " +
                     std::to_string(b));
  }
}

double remap_value(double q, const RemapStats& stats, bool literal_sign) {
  const double z = (q - stats.q_mean) / stats.q_std;
  const double e = literal_sign ? std::exp(z) : std::exp(-z);
  return (stats.s_max - stats.s_min) / (1.0 + e) + stats.s_min;
}

double remap_derivative(double q, const RemapStats& stats, bool literal_sign) {
  const double z = (q - stats.q_mean) / stats.q_std;
  const double u = 1.0 / (1.0 + (literal_sign ? std::exp(z) : std::exp(-z)));
  const double sign = literal_sign ? -1.0 : 1.0;
  return sign * (stats.s_max - stats.s_min) * u * (1.0 - u) / stats.q_std;
}

}  // namespace

double aggregate_quality(std::span<const double> d, std::span<const double> w) {
  require_equal_len(d.size(), w.size(), "aggregate_quality");
  if (d.empty()) throw ContractError("aggregate_quality: empty input");
  std::vector<double> terms(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) terms[i] = d[i] * (1.0 + w[i]);
  return stable_sum(std::move(terms)) / static_cast<double>(d.size());
}

Var aggregate_quality(Tape& t, Var d, Var w) {
  const Tensor& D = t.val(d);
  const Tensor& W = t.val(w);
  require_equal_len(D.numel(), W.numel(), "aggregate_quality");
  if (D.numel() == 0) throw ContractError("aggregate_quality: empty input");
  const std::size_t k = D.numel();
  Tensor q = Tensor::scalar(aggregate_quality(std::span<const double>(D.values),
                                              std::span<const double>(W.values)));
  bool rg = t.requires_grad(d) || t.requires_grad(w);
  std::function<void(Tape&)> pull;
  if (rg) {
    Var out{t.size()};
    pull = [d, w, out, k](Tape& tp) {
      const double g = tp.grad(out)[0] / static_cast<double>(k);
      const Tensor& Dv = tp.val(d);
      const Tensor& Wv = tp.val(w);
      if (tp.requires_grad(d)) {
        std::vector<double>& gd = tp.grad_mut(d);
        for (std::size_t i = 0; i < k; ++i) gd[i] += g * (1.0 + Wv.values[i]);
      }
      if (tp.requires_grad(w)) {
        std::vector<double>& gw = tp.grad_mut(w);
        for (std::size_t i = 0; i < k; ++i) gw[i] += g * Dv.values[i];
      }
    };
  }
  return t.emplace(std::move(q), rg, std::move(pull));
}

double remap(double q, const RemapStats& stats, bool literal_sign) {
  return remap_value(q, stats, literal_sign);
}

Var remap(Tape& t, Var q, const RemapStats& stats, bool literal_sign) {
  const Tensor& Q = t.val(q);
  if (Q.numel() != 1) throw ShapeError("remap: expected a scalar, got " + Q.shape_str());
  Tensor y = Tensor::scalar(remap_value(Q.values[0], stats, literal_sign));
  bool rg = t.requires_grad(q);
  std::function<void(Tape&)> pull;
  if (rg) {
    Var out{t.size()};
    pull = [q, out, stats, literal_sign](Tape& tp) {
      const double g = tp.grad(out)[0];
      tp.grad_mut(q)[0] += g * remap_derivative(tp.val(q).values[0], stats, literal_sign);
    };
  }
  return t.emplace(std::move(y), rg, std::move(pull));
}

RemapStats compute_remap_stats(std::span<const double> q_values,
                               std::span<const double> s_values) {
  if (q_values.size() < 2) {
    throw DegenerateError("remap stats: need at least 2 raw scores, got " +
                          std::to_string(q_values.size()));
  }
  if (s_values.empty()) throw DegenerateError("remap stats: empty label set");
  RemapStats st;
  double sum = 0.0;
  for (double q : q_values) sum += q;
  st.q_mean = sum / static_cast<double>(q_values.size());
  double var = 0.0;
  for (double q : q_values) var += (q - st.q_mean) * (q - st.q_mean);
  var /= static_cast<double>(q_values.size());
  st.q_std = std::sqrt(var);
  if (st.q_std == 0.0) {
    throw DegenerateError("remap stats: raw scores are constant, std is zero");
  }
  st.s_min = s_values[0];
  st.s_max = s_values[0];
  for (double s : s_values) {
    st.s_min = std::min(st.s_min, s);
    st.s_max = std::max(st.s_max, s);
  }
  if (!(st.s_max > st.s_min)) {
    throw DegenerateError("remap stats: label range is empty");
  }
  return st;
}

double mae_loss(std::span<const double> pred, std::span<const double> target) {
  require_equal_len(pred.size(), target.size(), "mae_loss");
  if (pred.empty()) throw ContractError("mae_loss: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - target[i]);
  return s / static_cast<double>(pred.size());
}

Var mae_loss(Tape& t, Var pred, std::span<const double> target) {
  const Tensor& P = t.val(pred);
  require_equal_len(P.numel(), target.size(), "mae_loss");
  std::vector<double> tgt(target.begin(), target.end());
  Tensor y = Tensor::scalar(mae_loss(std::span<const double>(P.values), target));
  bool rg = t.requires_grad(pred);
  std::function<void(Tape&)> pull;
  if (rg) {
    Var out{t.size()};
    pull = [pred, out, tgt = std::move(tgt)](Tape& tp) {
      const double g = tp.grad(out)[0] / static_cast<double>(tgt.size());
      const Tensor& Pv = tp.val(pred);
      std::vector<double>& gp = tp.grad_mut(pred);
      for (std::size_t i = 0; i < tgt.size(); ++i) {
        const double diff = Pv.values[i] - tgt[i];
        if (diff > 0.0) gp[i] += g;
        else if (diff < 0.0) gp[i] -= g;
        // exact tie: subgradient 0
      }
    };
  }
  return t.emplace(std::move(y), rg, std::move(pull));
}

}  // namespace dcvq
