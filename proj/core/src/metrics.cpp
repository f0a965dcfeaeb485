#include "dcvq/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace dcvq {

namespace {

void require_pair(std::span<const double> x, std::span<const double> y, const char* op) {
  if (x.size() != y.size()) {
    throw ShapeError(std::string(op) + ": length mismatch, " + std::to_string(x.size()) +
                     " vs " + std::to_string(y.size()));
  }
  if (x.size() < 2) {
    throw DegenerateError(std::string(op) + ": needs at least 2 samples, got " +
                          std::to_string(x.size()));
  }
}

bool is_constant(std::span<const double> x) {
  for (double v : x) {
    if (v != x[0]) return false;
  }
  return true;
}

}  // namespace

std::vector<double> fractional_ranks(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based average rank
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

double plcc(std::span<const double> x, std::span<const double> y) {
  require_pair(x, y, "plcc");
  if (is_constant(x) || is_constant(y)) {
    throw DegenerateError("plcc: constant input, correlation undefined");
  }
  const std::size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  return sxy / std::sqrt(sxx * syy);
}

double srocc(std::span<const double> x, std::span<const double> y) {
  require_pair(x, y, "srocc");
  if (is_constant(x) || is_constant(y)) {
    throw DegenerateError("srocc: constant input, rank correlation undefined");
  }
  std::vector<double> rx = fractional_ranks(x);
  std::vector<double> ry = fractional_ranks(y);
  return plcc(rx, ry);
}

double krocc(std::span<const double> x, std::span<const double> y) {
  require_pair(x, y, "krocc");
  const std::size_t n = x.size();
  long long concordant = 0, discordant = 0, ties_x = 0, ties_y = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = x[i] - x[j];
      const double dy = y[i] - y[j];
      if (dx == 0.0 && dy == 0.0) {
        ++ties_x;
        ++ties_y;
      } else if (dx == 0.0) {
        ++ties_x;
      } else if (dy == 0.0) {
        ++ties_y;
      } else if ((dx > 0.0) == (dy > 0.0)) {
        ++concordant;
      } else {
        ++discordant;
      }
    }
  }
  const long long n0 = static_cast<long long>(n) * (n - 1) / 2;
  if (ties_x == n0 || ties_y == n0) {
    throw DegenerateError("krocc: all pairs tied, tau undefined");
  }
  const double denom = std::sqrt(static_cast<double>(n0 - ties_x)) *
                       std::sqrt(static_cast<double>(n0 - ties_y));
  return static_cast<double>(concordant - discordant) / denom;
}

MetricReport compute_metrics(std::span<const double> x, std::span<const double> y) {
  MetricReport r;
  r.srocc = srocc(x, y);
  r.plcc = plcc(x, y);
  r.krocc = krocc(x, y);
  r.n = x.size();
  return r;
}

}  // namespace dcvq
