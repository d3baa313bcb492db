#pragma once

#include <Eigen/Dense>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "smd/rng.hpp"

namespace smd {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Covariance failed the symmetry or Cholesky test. Raised instead of
/// repairing the matrix: a silently clipped eigenvalue hides test bugs.
class NotPositiveDefinite : public std::runtime_error {
 public:
  explicit NotPositiveDefinite(const std::string& what)
      : std::runtime_error(what) {}
};

class DimensionMismatch : public std::invalid_argument {
 public:
  explicit DimensionMismatch(const std::string& what)
      : std::invalid_argument(what) {}
};

/// Multivariate Gaussian N(mean, cov) with a cached Cholesky factor.
/// Covariances are stored dense; isotropic inputs are expanded on entry.
class Gaussian {
 public:
  Gaussian(Vec mean, Mat cov);
  static Gaussian isotropic(Vec mean, double variance);

  int dim() const { return static_cast<int>(mean_.size()); }
  const Vec& mean() const { return mean_; }
  const Mat& cov() const { return cov_; }
  const Eigen::LLT<Mat>& llt() const { return llt_; }
  double log_det_cov() const { return log_det_cov_; }

  double log_pdf(const Vec& x) const;
  /// Differential entropy, 0.5 * ln|2*pi*e*cov|.
  double entropy() const;
  Vec sample(Rng& rng) const;

 private:
  Vec mean_;
  Mat cov_;
  Eigen::LLT<Mat> llt_;
  double log_det_cov_;
};

/// A positive multiple of a Gaussian density: exp(log_scale) * pdf(gaussian).
/// Shows up when Gaussians are multiplied or their mean variable is rescaled.
struct ScaledGaussian {
  double log_scale;
  Gaussian gaussian;

  double log_eval(const Vec& x) const {
    return log_scale + gaussian.log_pdf(x);
  }
};

/// Finite Gaussian mixture with strictly positive weights summing to one.
class GaussianMixture {
 public:
  GaussianMixture(std::vector<double> weights, std::vector<Gaussian> components);

  int dim() const { return components_.front().dim(); }
  int size() const { return static_cast<int>(components_.size()); }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<Gaussian>& components() const { return components_; }
  const Gaussian& component(int k) const { return components_.at(k); }

  double log_pdf(const Vec& x) const;
  Vec sample(Rng& rng) const;
  /// Component index drawn by weight, then a Gaussian draw. Used when the
  /// caller wants the assignment as well.
  std::pair<int, Vec> sample_with_component(Rng& rng) const;

  Vec mean() const;
  /// Full second-moment covariance of the mixture (moment matching).
  Mat covariance() const;

 private:
  std::vector<double> weights_;
  std::vector<double> log_weights_;
  std::vector<Gaussian> components_;
};

double gaussian_log_pdf(const Vec& x, const Gaussian& g);

/// pdf(g1)(x) * pdf(g2)(x) == exp(log_scale) * pdf(result)(x) for all x.
ScaledGaussian gaussian_product(const Gaussian& g1, const Gaussian& g2);

/// Rewrites x -> N(g.mean; lambda*x, g.cov) as a scaled density in x:
/// exp(log_scale) * N(x; g.mean/lambda, g.cov/lambda^2) with
/// log_scale = -dim * ln(lambda). This is the mean/argument swap used to
/// turn a forward kernel into a density over the earlier variable.
ScaledGaussian gaussian_rescale(double lambda, const Gaussian& g);

/// Analytic KL(p || q) between Gaussians.
double kl_gaussian_gaussian(const Gaussian& p, const Gaussian& q);

double mixture_log_pdf(const Vec& x, const GaussianMixture& m);

std::vector<Vec> mixture_sample(const GaussianMixture& m, Rng& rng, int n);

/// Analytic cross-entropy -E_m[ln g] = sum_k w_k (KL(N_k, g) + H(N_k)).
double cross_entropy_mixture_gaussian(const GaussianMixture& m, const Gaussian& g);

/// sum_k w_k (-ln w_k + H(N_k)); upper-bounds the mixture's entropy.
double mixture_entropy_upper_bound(const GaussianMixture& m);

struct McEstimate {
  double value;
  double std_error;
  int n;
};

/// Monte-Carlo KL(target || approx) with its sample standard error.
/// `approx_log_pdf` must be finite at every draw; a non-finite value is an
/// error rather than a NaN that poisons the mean.
McEstimate kl_mixture_target_mc(const GaussianMixture& target,
                                const std::function<double(const Vec&)>& approx_log_pdf,
                                Rng& rng, int n);

/// log(sum_i exp(v_i)) with max subtraction.
double log_sum_exp(std::span<const double> values);

}  // namespace smd
