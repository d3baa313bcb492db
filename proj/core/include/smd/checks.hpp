#pragma once

#include <string>
#include <vector>

#include "smd/forward.hpp"

namespace smd {

/// One identity/oracle check outcome for the gmm-check command.
struct CheckResult {
  std::string name;
  bool pass = false;
  double max_err = 0.0;
  double tol = 0.0;
  std::string detail;
};

/// Runs the Gaussian-algebra and posterior oracle suite. Tolerances can be
/// globally scaled through SMD_CHECK_TOL_SCALE (useful to force a failure
/// path on purpose).
std::vector<CheckResult> run_gmm_checks(std::uint64_t seed);

}  // namespace smd
