#pragma once

#include <memory>
#include <string>
#include <vector>

#include "smd/denoiser.hpp"
#include "smd/forward.hpp"

namespace smd {

struct McStat {
  double value = 0.0;
  double se = 0.0;
};

/// A backward kernel p(x_{t-1} | x_t) as seen by the error estimators.
/// Gaussian-kind models expose the single Gaussian (analytic cross-entropy
/// path); mixture-kind models expose a finite mixture whose log-pdf stands
/// in for log p (Monte-Carlo path).
class BackwardModel {
 public:
  virtual ~BackwardModel() = default;
  virtual bool is_gaussian() const = 0;
  virtual Gaussian conditional_gaussian(const Vec& x_t, int t, Rng& rng) const;
  virtual GaussianMixture conditional_mixture(const Vec& x_t, int t, Rng& rng) const;
};

/// N(mean_from_eps(x_t, t), sigma_t I) from a trained vanilla denoiser.
class VanillaBackward : public BackwardModel {
 public:
  VanillaBackward(const VanillaDenoiser& d, const NoiseSchedule& s)
      : d_(d), s_(s) {}
  bool is_gaussian() const override { return true; }
  Gaussian conditional_gaussian(const Vec& x_t, int t, Rng& rng) const override;

 private:
  const VanillaDenoiser& d_;
  const NoiseSchedule& s_;
};

/// Equal-weight mixture of N(mean(x_t, t, eta_h), sigma_t I) over
/// `n_density_draws` fresh eta draws; its log-pdf is the log-mean-exp
/// estimate of the soft-mixture density.
class SmdBackward : public BackwardModel {
 public:
  SmdBackward(const SmdDenoiser& d, const NoiseSchedule& s, int n_density_draws)
      : d_(d), s_(s), n_draws_(n_density_draws) {}
  bool is_gaussian() const override { return false; }
  GaussianMixture conditional_mixture(const Vec& x_t, int t, Rng& rng) const override;

 private:
  const SmdDenoiser& d_;
  const NoiseSchedule& s_;
  int n_draws_;
};

/// Oracle kernel equal to the true posterior; the zero-error reference.
class ExactPosteriorBackward : public BackwardModel {
 public:
  ExactPosteriorBackward(const GaussianMixture& data, const NoiseSchedule& s)
      : data_(data), s_(s) {}
  bool is_gaussian() const override { return false; }
  GaussianMixture conditional_mixture(const Vec& x_t, int t, Rng& rng) const override;

 private:
  const GaussianMixture& data_;
  const NoiseSchedule& s_;
};

/// Density-weighted KL between the true posterior and the model kernel at
/// step t, estimated over n_outer draws of x_t ~ q(x_t) with n_inner
/// posterior samples each. Returns the mean and its standard error.
McStat local_error_mt(const GaussianMixture& data, const BackwardModel& model,
                      int t, const NoiseSchedule& s, int n_outer, int n_inner,
                      const Rng& rng);

/// Sum of local errors over t = 1..T with pooled standard error.
McStat global_error_e(const GaussianMixture& data, const BackwardModel& model,
                      const NoiseSchedule& s, int n_outer, int n_inner,
                      const Rng& rng);

// --- Unbounded-error construction -------------------------------------------

/// Symmetric mixture family with means lambda * mu_k and covariances
/// delta_k I, subject to sum_k w_k mu_k / (1 + (delta_k - 1) abar_t) = 0.
struct Theorem1Config {
  std::vector<double> lambda_values;
  std::vector<double> delta;   // per-component isotropic variance
  std::vector<Vec> base_means;
  std::vector<double> weights;
  int t = 1;

  int dim() const;
  void validate(const NoiseSchedule& s) const;
};

struct Theorem1Bound {
  double quad_coeff = 0.0;  // multiplies lambda^2
  double constant = 0.0;
  double value(double lambda) const { return quad_coeff * (lambda * lambda) + constant; }
};

/// Closed-form lower-bound pieces; value(lambda) is the bound at scale lambda.
Theorem1Bound theorem1_bound_parts(const Theorem1Config& cfg, const NoiseSchedule& s);
/// Bound evaluated at each configured lambda.
std::vector<double> theorem1_lower_bound(const Theorem1Config& cfg, const NoiseSchedule& s);

/// Data mixture at scale lambda: means lambda * mu_k, covariance delta_k I.
GaussianMixture theorem1_mixture(const Theorem1Config& cfg, double lambda);

/// Gaussian kernel with the construction's optimal mean,
/// coef(t) sqrt(alpha_t) x_t + m*, and covariance sigma_t I. All deltas
/// must be equal (the coefficient is shared across components).
class Theorem1BestGaussianBackward : public BackwardModel {
 public:
  Theorem1BestGaussianBackward(const Theorem1Config& cfg, const NoiseSchedule& s,
                               double lambda);
  bool is_gaussian() const override { return true; }
  Gaussian conditional_gaussian(const Vec& x_t, int t, Rng& rng) const override;

 private:
  double coef_;
  Vec offset_;
  double sigma_;
  int t_;
};

// --- Toy-experiment quality metrics ------------------------------------------

struct ModeMetrics {
  double mode_recall = 0.0;
  double mean_nll = 0.0;
  std::vector<int> assign_counts;
};

/// Nearest-mean assignment metrics; a mode counts as covered when it holds
/// at least a quarter of its fair share of samples and its assignees sit
/// within three standard deviations of the component mean.
ModeMetrics mode_metrics(const Mat& samples, const GaussianMixture& truth);

// --- Report ------------------------------------------------------------------

struct MetricReport {
  struct PerStep {
    int t = 0;
    double m_t = 0.0;
    double se = 0.0;
  };
  std::vector<PerStep> m_t;
  McStat e_global;
  double mode_recall = -1.0;  // negative when not computed
  double mean_nll = 0.0;
  std::vector<std::pair<std::string, std::string>> metadata;
};

std::string metric_report_to_json(const MetricReport& report);
/// CSV rows "t,m_t,se" with header.
std::string metric_report_to_csv(const MetricReport& report);

}  // namespace smd
