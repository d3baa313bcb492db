#pragma once

#include <string>
#include <vector>

#include "smd/gaussian.hpp"

namespace smd {

/// Which per-step backward variance the sigma table carries.
/// Beta: sigma_t = beta_t. BetaTilde: sigma_t = beta_tilde_t (floored at
/// 1e-12 for t=1 where beta_tilde is exactly zero). Both are variances,
/// i.e. the backward kernel is N(mean, sigma_t * I).
enum class SigmaMode { Beta, BetaTilde };

std::string to_string(SigmaMode mode);
SigmaMode sigma_mode_from_string(const std::string& s);

/// Variance schedule of a T-step chain plus the derived tables.
/// All per-step vectors are indexed 1..T; index 0 is only meaningful for
/// alpha_bar, where alpha_bar[0] == 1 by convention.
struct NoiseSchedule {
  int T = 0;
  SigmaMode sigma_mode = SigmaMode::Beta;
  std::vector<double> beta;        // beta_t
  std::vector<double> alpha;       // 1 - beta_t
  std::vector<double> alpha_bar;   // prod_{u<=t} alpha_u, alpha_bar[0] = 1
  std::vector<double> beta_tilde;  // (1-abar_{t-1})/(1-abar_t) * beta_t
  std::vector<double> sigma;       // per sigma_mode
  std::vector<double> gamma;       // beta^2 / (2 sigma alpha (1-abar))

  void check_step(int t) const;
};

/// Linear beta interpolation from beta_min to beta_max over T steps.
NoiseSchedule make_schedule(int T, double beta_min, double beta_max,
                            SigmaMode sigma_mode);

/// sqrt(abar_t) x0 + sqrt(1-abar_t) eps.
Vec sample_forward(const Vec& x0, int t, const Vec& eps, const NoiseSchedule& s);

/// Marginal q(x_t) of noised mixture data: component k becomes
/// N(sqrt(abar_t) mu_k, (1-abar_t) I + abar_t Sigma_k). t=0 returns the data.
GaussianMixture marginal_q_xt(const GaussianMixture& data, int t,
                              const NoiseSchedule& s);

/// Exact one-step inverse q(x_{t-1} | x_t) of mixture data, as a mixture.
struct PosteriorMixture {
  GaussianMixture mixture;
  std::vector<Mat> lambda_mats;  // the per-component Lambda_k matrices
};

PosteriorMixture posterior_true(const GaussianMixture& data, const Vec& x_t,
                                int t, const NoiseSchedule& s);

/// q(x_{t-1} | x_t, x0) = N(mu_tilde, beta_tilde_t I). At t=1 the variance
/// is exactly zero; it is returned floored at 1e-12 so the Gaussian stays
/// valid (callers sampling at t=1 use the zero-noise rule instead).
Gaussian ddpm_posterior_given_x0(const Vec& x_t, const Vec& x0, int t,
                                 const NoiseSchedule& s);

}  // namespace smd
