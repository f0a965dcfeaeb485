#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dcvq {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  double threshold = 1e-4;
  bool expect_failure = false;  // negative control: passes when the error is large
  bool pass = false;
};

struct GradCheckSummary {
  std::vector<GradCheckEntry> entries;
  bool all_pass = false;
};

// Finite-difference validation of every differentiable op plus the full
// token-to-loss composition, each over `seeds` random instances. Includes a
// deliberately corrupted rule as a negative control so a silent checker
// cannot pass.
GradCheckSummary run_gradcheck_suite(std::uint64_t seed, std::size_t seeds = 20);

std::string format_gradcheck_table(const GradCheckSummary& summary);

}  // namespace dcvq
