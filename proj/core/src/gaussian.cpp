#include "smd/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace smd {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;  // ln(2*pi)
constexpr double kSymmetryTol = 1e-12;
}  // namespace

Gaussian::Gaussian(Vec mean, Mat cov) : mean_(std::move(mean)), cov_(std::move(cov)) {
  const auto d = mean_.size();
  if (cov_.rows() != d || cov_.cols() != d) {
    throw DimensionMismatch("Gaussian: cov must be " + std::to_string(d) + "x" +
                            std::to_string(d));
  }
  const double asym = (cov_ - cov_.transpose()).cwiseAbs().maxCoeff();
  if (!(asym <= kSymmetryTol)) {
    throw NotPositiveDefinite("Gaussian: covariance asymmetric by " +
                              std::to_string(asym));
  }
  llt_.compute(cov_);
  if (llt_.info() != Eigen::Success) {
    throw NotPositiveDefinite("Gaussian: covariance is not positive definite");
  }
  log_det_cov_ = 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
  if (!std::isfinite(log_det_cov_)) {
    throw NotPositiveDefinite("Gaussian: non-finite log-determinant");
  }
}

Gaussian Gaussian::isotropic(Vec mean, double variance) {
  if (!(variance > 0.0)) {
    throw NotPositiveDefinite("Gaussian::isotropic: variance must be > 0");
  }
  const auto d = mean.size();
  return Gaussian(std::move(mean), variance * Mat::Identity(d, d));
}

double Gaussian::log_pdf(const Vec& x) const {
  if (x.size() != mean_.size()) {
    throw DimensionMismatch("Gaussian::log_pdf: input dim mismatch");
  }
  const Vec diff = x - mean_;
  // Quadratic form via the Cholesky factor: ||L^-1 diff||^2.
  const Vec half = llt_.matrixL().solve(diff);
  return -0.5 * (dim() * kLog2Pi + log_det_cov_ + half.squaredNorm());
}

double Gaussian::entropy() const {
  return 0.5 * (dim() * (kLog2Pi + 1.0) + log_det_cov_);
}

Vec Gaussian::sample(Rng& rng) const {
  Vec z(dim());
  for (int i = 0; i < dim(); ++i) z[i] = rng.normal();
  return mean_ + llt_.matrixL() * z;
}

GaussianMixture::GaussianMixture(std::vector<double> weights,
                                 std::vector<Gaussian> components)
    : weights_(std::move(weights)), components_(std::move(components)) {
  if (components_.empty()) {
    throw std::invalid_argument("GaussianMixture: empty mixture");
  }
  if (weights_.size() != components_.size()) {
    throw std::invalid_argument("GaussianMixture: weights/components count mismatch");
  }
  double total = 0.0;
  for (double w : weights_) {
    if (!(w > 0.0)) throw std::invalid_argument("GaussianMixture: weights must be > 0");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-10) {
    throw std::invalid_argument("GaussianMixture: weights sum to " +
                                std::to_string(total) + ", expected 1");
  }
  const int d = components_.front().dim();
  for (const auto& c : components_) {
    if (c.dim() != d) {
      throw DimensionMismatch("GaussianMixture: components disagree on dimension");
    }
  }
  log_weights_.reserve(weights_.size());
  for (double w : weights_) log_weights_.push_back(std::log(w));
}

double GaussianMixture::log_pdf(const Vec& x) const {
  std::vector<double> terms(components_.size());
  for (std::size_t k = 0; k < components_.size(); ++k) {
    terms[k] = log_weights_[k] + components_[k].log_pdf(x);
  }
  return log_sum_exp(terms);
}

Vec GaussianMixture::sample(Rng& rng) const {
  return sample_with_component(rng).second;
}

std::pair<int, Vec> GaussianMixture::sample_with_component(Rng& rng) const {
  const auto k = rng.categorical(weights_);
  return {static_cast<int>(k), components_[k].sample(rng)};
}

Vec GaussianMixture::mean() const {
  Vec m = Vec::Zero(dim());
  for (std::size_t k = 0; k < components_.size(); ++k) {
    m += weights_[k] * components_[k].mean();
  }
  return m;
}

Mat GaussianMixture::covariance() const {
  const Vec m = mean();
  Mat c = Mat::Zero(dim(), dim());
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const Vec d = components_[k].mean() - m;
    c += weights_[k] * (components_[k].cov() + d * d.transpose());
  }
  return c;
}

double gaussian_log_pdf(const Vec& x, const Gaussian& g) { return g.log_pdf(x); }

ScaledGaussian gaussian_product(const Gaussian& g1, const Gaussian& g2) {
  if (g1.dim() != g2.dim()) {
    throw DimensionMismatch("gaussian_product: dimension mismatch");
  }
  const Gaussian convolution(g1.mean(), g1.cov() + g2.cov());
  const double log_scale = convolution.log_pdf(g2.mean());

  // (S1^-1 + S2^-1)^-1 and the precision-weighted mean, via solves.
  const Mat id = Mat::Identity(g1.dim(), g1.dim());
  const Mat p1 = g1.llt().solve(id);
  const Mat p2 = g2.llt().solve(id);
  const Mat prec = p1 + p2;
  const Eigen::LLT<Mat> prec_llt(prec);
  if (prec_llt.info() != Eigen::Success) {
    throw NotPositiveDefinite("gaussian_product: degenerate precision sum");
  }
  Mat cov = prec_llt.solve(id);
  cov = 0.5 * (cov + cov.transpose());  // kill round-off asymmetry
  const Vec mean = prec_llt.solve(p1 * g1.mean() + p2 * g2.mean());
  return {log_scale, Gaussian(mean, cov)};
}

ScaledGaussian gaussian_rescale(double lambda, const Gaussian& g) {
  if (!(lambda > 0.0)) {
    throw std::invalid_argument("gaussian_rescale: lambda must be > 0");
  }
  const double log_scale = -g.dim() * std::log(lambda);
  return {log_scale, Gaussian(g.mean() / lambda, g.cov() / (lambda * lambda))};
}

double kl_gaussian_gaussian(const Gaussian& p, const Gaussian& q) {
  if (p.dim() != q.dim()) {
    throw DimensionMismatch("kl_gaussian_gaussian: dimension mismatch");
  }
  const int d = p.dim();
  const Vec diff = p.mean() - q.mean();
  const Vec half = q.llt().matrixL().solve(diff);
  const Mat qinv_p = q.llt().solve(p.cov());
  const double kl = 0.5 * (q.log_det_cov() - p.log_det_cov() - d +
                           half.squaredNorm() + qinv_p.trace());
  return kl;
}

double mixture_log_pdf(const Vec& x, const GaussianMixture& m) {
  return m.log_pdf(x);
}

std::vector<Vec> mixture_sample(const GaussianMixture& m, Rng& rng, int n) {
  if (n < 1) throw std::invalid_argument("mixture_sample: n must be >= 1");
  std::vector<Vec> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.push_back(m.sample(rng));
  return out;
}

double cross_entropy_mixture_gaussian(const GaussianMixture& m, const Gaussian& g) {
  if (m.dim() != g.dim()) {
    throw DimensionMismatch("cross_entropy_mixture_gaussian: dimension mismatch");
  }
  double ce = 0.0;
  for (int k = 0; k < m.size(); ++k) {
    const Gaussian& comp = m.component(k);
    ce += m.weights()[k] * (kl_gaussian_gaussian(comp, g) + comp.entropy());
  }
  return ce;
}

double mixture_entropy_upper_bound(const GaussianMixture& m) {
  double bound = 0.0;
  for (int k = 0; k < m.size(); ++k) {
    const double w = m.weights()[k];
    bound += w * (-std::log(w) + m.component(k).entropy());
  }
  return bound;
}

McEstimate kl_mixture_target_mc(const GaussianMixture& target,
                                const std::function<double(const Vec&)>& approx_log_pdf,
                                Rng& rng, int n) {
  if (n < 100) {
    throw std::invalid_argument("kl_mixture_target_mc: need n >= 100");
  }
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const Vec x = target.sample(rng);
    const double lq = target.log_pdf(x);
    const double lp = approx_log_pdf(x);
    if (!std::isfinite(lp)) {
      throw std::runtime_error("kl_mixture_target_mc: approx log-pdf not finite at draw " +
                               std::to_string(i));
    }
    const double term = lq - lp;
    sum += term;
    sum_sq += term * term;
  }
  const double mean = sum / n;
  const double var = std::max(0.0, (sum_sq - n * mean * mean) / (n - 1));
  return {mean, std::sqrt(var / n), n};
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) {
    throw std::invalid_argument("log_sum_exp: empty input");
  }
  const double m = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(m)) return m;  // all -inf (or a NaN) dominates
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - m);
  return m + std::log(acc);
}

}  // namespace smd
