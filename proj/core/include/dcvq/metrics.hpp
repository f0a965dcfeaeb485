#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dcvq/errors.hpp"

namespace dcvq {

struct MetricReport {
  double srocc = 0.0;
  double plcc = 0.0;
  double krocc = 0.0;
  std::size_t n = 0;
};

// Pearson linear correlation. Throws DegenerateError if either input is
// constant (undefined correlation), or if n < 2.
double plcc(std::span<const double> x, std::span<const double> y);

// Spearman rank correlation: Pearson of fractional (average) ranks.
double srocc(std::span<const double> x, std::span<const double> y);

// Kendall tau-b with tie correction, O(n^2) pair counting. Throws
// DegenerateError when either input is entirely tied.
double krocc(std::span<const double> x, std::span<const double> y);

MetricReport compute_metrics(std::span<const double> x, std::span<const double> y);

// Fractional ranks: ties receive the average of the ranks they occupy
// (1-based). Exposed for reuse and testing.
std::vector<double> fractional_ranks(std::span<const double> x);

}  // namespace dcvq
