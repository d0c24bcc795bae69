#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "rvseg/data.hpp"

namespace rvseg::checks {

struct CheckLine {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct SuiteResult {
  std::string suite;
  std::vector<CheckLine> lines;
  double seconds = 0;

  bool all_pass() const {
    for (const auto& l : lines)
      if (!l.pass) return false;
    return true;
  }
};

// Brute-force oracles, deliberately written as direct set arithmetic /
// all-pairs scans so they share nothing with the production implementations.
double dice_oracle(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);
double hausdorff_oracle(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b,
                        std::int64_t h, std::int64_t w, PixelSpacing spacing);

// Central finite differences (64-bit) against every differentiable
// operation, plus the end-to-end generator+MSE composite.
SuiteResult run_grad_suite();

// dice / hausdorff vs the oracles on 200 seeded random 16x16 pairs,
// including empty, one-empty and both-empty cases.
SuiteResult run_metrics_suite();

// Shared-parameter invariants across 50 training steps of each coupled
// variant: declared shared layers stay exactly equal, unshared layers differ.
SuiteResult run_sharing_suite();

// Loss identity checks (exact values and combination linearity).
SuiteResult run_loss_identity_suite();

// Conv-GRU saturated-gate identities and slice causality on random stacks.
SuiteResult run_gru_suite();

std::vector<SuiteResult> run_all_suites();

void print_suite(const SuiteResult& suite, std::ostream& os);

}  // namespace rvseg::checks
