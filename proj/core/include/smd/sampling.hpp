#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "smd/denoiser.hpp"

namespace smd {

/// How the additive noise scale relates to the sigma table. The backward
/// kernel is declared with covariance sigma_t * I, so SqrtSigma (the
/// default) adds sqrt(sigma_t) * eps; SigmaLiteral adds sigma_t * eps,
/// matching the sampling recursion as written with sigma_t as a plain
/// coefficient. Both are recorded in run metadata.
enum class NoiseRule { SqrtSigma, SigmaLiteral };

std::string to_string(NoiseRule rule);
NoiseRule noise_rule_from_string(const std::string& s);

struct SampleRun {
  int n = 1;
  bool keep_trajectory = false;
  std::uint64_t seed = 0;
  int T_used = 0;  // 0 means the full schedule
  NoiseRule noise_rule = NoiseRule::SqrtSigma;
};

/// Evenly strided subset of {1..T} including both endpoints, ascending.
std::vector<int> strided_steps(int T, int T_used);

/// One backward update x_t -> x_{t-1}; no noise is added at t=1.
Vec denoise_step(const VanillaDenoiser& d, const Vec& x_t, int t,
                 const NoiseSchedule& s, Rng& noise_rng,
                 NoiseRule rule = NoiseRule::SqrtSigma);
/// SMD variant; eta is drawn from its own stream so that a zero-modulation
/// model consumes exactly the same noise draws as the vanilla one.
Vec denoise_step(const SmdDenoiser& d, const Vec& x_t, int t,
                 const NoiseSchedule& s, Rng& noise_rng, Rng& eta_rng,
                 NoiseRule rule = NoiseRule::SqrtSigma);

struct SampleResult {
  Mat samples;                 // data_dim x n
  std::vector<int> step_set;   // ascending step indices used
  std::vector<Mat> trajectory; // filled when keep_trajectory; [0] holds x_T
};

SampleResult sample_chain(const VanillaDenoiser& d, const SampleRun& run,
                          const NoiseSchedule& s);
SampleResult sample_chain(const SmdDenoiser& d, const SampleRun& run,
                          const NoiseSchedule& s);

}  // namespace smd
