#pragma once

#include <span>
#include <vector>

#include "dcvq/errors.hpp"
#include "dcvq/tensor.hpp"

namespace dcvq {

// Statistics driving the logistic remap: q_mean/q_std describe raw
// predictions, s_min/s_max the label range they are mapped into.
struct RemapStats {
  double q_mean = 0.0;
  double q_std = 1.0;
  double s_min = 0.0;
  double s_max = 1.0;
};

// q = sum_i d_i * (1 + w_i) / k; order-invariant accumulation.
double aggregate_quality(std::span<const double> d, std::span<const double> w);
Var aggregate_quality(Tape& t, Var d, Var w);

// Logistic map of a raw score into (s_min, s_max). The default orientation is
// monotone increasing, exp(-(q - mean)/std); literal_sign flips the exponent
// to the decreasing orientation.
double remap(double q, const RemapStats& stats, bool literal_sign = false);
Var remap(Tape& t, Var q, const RemapStats& stats, bool literal_sign = false);

// Mean and population std of q plus the label range. Throws DegenerateError
// for fewer than 2 values, constant q, or a zero-width label range.
RemapStats compute_remap_stats(std::span<const double> q_values,
                               std::span<const double> s_values);

// Mean absolute error; the subgradient at exact ties is 0.
double mae_loss(std::span<const double> pred, std::span<const double> target);
Var mae_loss(Tape& t, Var pred, std::span<const double> target);

}  // namespace dcvq
