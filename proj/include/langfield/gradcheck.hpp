// SPDX-License-Identifier: Apache-2.0
//
// Finite-difference checks of every analytic gradient in the library.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace langfield {

inline constexpr double kGradcheckTolerance = 1e-4;
inline constexpr double kGradcheckStrictTolerance = 1e-6;

struct GradcheckOptions {
  int instances = 100;
  std::uint64_t seed = 0;
  double tolerance = kGradcheckTolerance;
  double step = 1e-5;
  /// Negates every analytic gradient before comparison. A working checker must then fail.
  bool perturb_sign_flip = false;
};

struct GradcheckRow {
  std::string name;
  int instances = 0;
  double max_relative_error = 0.0;
  bool pass = false;
};

struct GradcheckReport {
  std::vector<GradcheckRow> rows;
  double tolerance = kGradcheckTolerance;

  [[nodiscard]] bool pass() const;
  [[nodiscard]] std::string to_table() const;
};

/// Suite names in run order.
std::vector<std::string> gradcheck_suites();

/// Runs the named suites (all of them when `only` is empty).
GradcheckReport run_gradcheck(const GradcheckOptions& options, const std::vector<std::string>& only = {});

}  // namespace langfield
