#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace resfeat {

/// Result of one finite-difference check, worst case over all seeds.
struct GradSuiteEntry {
  std::string name;
  int seeds = 0;
  double max_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

inline constexpr double kPerOpTolerance = 1e-4;
inline constexpr double kEndToEndTolerance = 1e-3;

/// 64-bit gradient checks of every layer, the triplet loss, the encoder on a
/// 3 x 16 x 16 input, the full describe path of both variants and the
/// training loss of a 2-pair micro-batch.
std::vector<GradSuiteEntry> run_gradient_suite(int n_seeds = 5, std::uint64_t seed = 0);

struct SelftestCheck {
  std::string name;
  std::string detail;
  bool passed = false;
};

/// Small deterministic oracle checks (matcher, RANSAC, descriptor norms,
/// feature-file round trip, metrics).
std::vector<SelftestCheck> run_oracle_suite(std::uint64_t seed = 0);

/// Runs both suites and prints one line per check. Returns true when all pass.
/// The output contains no timings, so it is byte-stable for a fixed seed.
bool run_selftest(std::ostream& out, std::uint64_t seed = 0, int n_seeds = 5);

}  // namespace resfeat
