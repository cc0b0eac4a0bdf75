#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fsdg/featurespace.hpp"

namespace fsdg {

inline constexpr double kGradTolerance = 1e-4;

struct GradSuiteEntry {
  std::string name;
  int instances = 0;
  double max_relative_error = 0.0;
  bool passed = false;
};

/// Finite-difference checks of every loss term on random small instances
/// (B <= 5, d <= 12, S <= 9): L_dec, S_cs, S_cd, S_p, L_lf, L_c, L_FS, L_FSDG.
std::vector<GradSuiteEntry> run_gradient_suite(int instances = 20, std::uint64_t seed = 0,
                                               Metric metric = Metric::Cosine);

}  // namespace fsdg
