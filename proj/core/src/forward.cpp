#include "smd/forward.hpp"

#include <cmath>
#include <stdexcept>

namespace smd {

namespace {
constexpr double kSigmaFloor = 1e-12;
}

std::string to_string(SigmaMode mode) {
  return mode == SigmaMode::Beta ? "beta" : "beta_tilde";
}

SigmaMode sigma_mode_from_string(const std::string& s) {
  if (s == "beta") return SigmaMode::Beta;
  if (s == "beta_tilde") return SigmaMode::BetaTilde;
  throw std::invalid_argument("unknown sigma_mode '" + s + "'");
}

void NoiseSchedule::check_step(int t) const {
  if (t < 1 || t > T) {
    throw std::out_of_range("step t=" + std::to_string(t) + " outside [1," +
                            std::to_string(T) + "]");
  }
}

NoiseSchedule make_schedule(int T, double beta_min, double beta_max,
                            SigmaMode sigma_mode) {
  if (T < 1) throw std::invalid_argument("make_schedule: T must be >= 1");
  if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0)) {
    throw std::invalid_argument("make_schedule: need 0 < beta_min <= beta_max < 1");
  }
  NoiseSchedule s;
  s.T = T;
  s.sigma_mode = sigma_mode;
  s.beta.assign(T + 1, 0.0);
  s.alpha.assign(T + 1, 0.0);
  s.alpha_bar.assign(T + 1, 0.0);
  s.beta_tilde.assign(T + 1, 0.0);
  s.sigma.assign(T + 1, 0.0);
  s.gamma.assign(T + 1, 0.0);

  s.alpha_bar[0] = 1.0;
  for (int t = 1; t <= T; ++t) {
    const double frac = (T == 1) ? 0.0 : static_cast<double>(t - 1) / (T - 1);
    s.beta[t] = beta_min + (beta_max - beta_min) * frac;
    s.alpha[t] = 1.0 - s.beta[t];
    s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alpha[t];
    s.beta_tilde[t] =
        (1.0 - s.alpha_bar[t - 1]) / (1.0 - s.alpha_bar[t]) * s.beta[t];
    s.sigma[t] = (sigma_mode == SigmaMode::Beta)
                     ? s.beta[t]
                     : std::max(s.beta_tilde[t], kSigmaFloor);
    s.gamma[t] = s.beta[t] * s.beta[t] /
                 (2.0 * s.sigma[t] * s.alpha[t] * (1.0 - s.alpha_bar[t]));
  }
  return s;
}

Vec sample_forward(const Vec& x0, int t, const Vec& eps, const NoiseSchedule& s) {
  s.check_step(t);
  if (x0.size() != eps.size()) {
    throw DimensionMismatch("sample_forward: x0/eps dims differ");
  }
  const double ab = s.alpha_bar[t];
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

GaussianMixture marginal_q_xt(const GaussianMixture& data, int t,
                              const NoiseSchedule& s) {
  if (t == 0) return data;
  s.check_step(t);
  const double ab = s.alpha_bar[t];
  const int d = data.dim();
  std::vector<Gaussian> comps;
  comps.reserve(data.size());
  for (int k = 0; k < data.size(); ++k) {
    const Gaussian& c = data.component(k);
    comps.emplace_back(std::sqrt(ab) * c.mean(),
                       (1.0 - ab) * Mat::Identity(d, d) + ab * c.cov());
  }
  return GaussianMixture(data.weights(), std::move(comps));
}

PosteriorMixture posterior_true(const GaussianMixture& data, const Vec& x_t,
                                int t, const NoiseSchedule& s) {
  s.check_step(t);
  if (x_t.size() != data.dim()) {
    throw DimensionMismatch("posterior_true: x_t dim mismatch");
  }
  if (!x_t.allFinite()) {
    throw std::invalid_argument("posterior_true: x_t must be finite");
  }
  const int d = data.dim();
  const int K = data.size();
  const double a = s.alpha[t];
  const double ab = s.alpha_bar[t];
  const double ab_prev = s.alpha_bar[t - 1];
  const Mat id = Mat::Identity(d, d);

  const GaussianMixture marginal = marginal_q_xt(data, t, s);

  std::vector<double> log_w(K);
  std::vector<Gaussian> comps;
  std::vector<Mat> lambdas;
  comps.reserve(K);
  lambdas.reserve(K);
  for (int k = 0; k < K; ++k) {
    log_w[k] = std::log(data.weights()[k]) + marginal.component(k).log_pdf(x_t);

    Mat lambda = ((a - ab) * id + ab * data.component(k).cov()) / (1.0 - a);
    lambda = 0.5 * (lambda + lambda.transpose());
    const Eigen::LLT<Mat> lambda_llt(lambda);
    if (lambda_llt.info() != Eigen::Success) {
      throw NotPositiveDefinite("posterior_true: Lambda_k not PD at k=" +
                                std::to_string(k));
    }
    // (I + Lambda^-1)^-1 = Lambda (I + Lambda)^-1, computed by solve.
    const Mat i_plus_lambda = id + lambda;
    const Eigen::LLT<Mat> ipl_llt(i_plus_lambda);
    if (ipl_llt.info() != Eigen::Success) {
      throw NotPositiveDefinite("posterior_true: I + Lambda_k not PD");
    }
    const Mat inv_ipl = ipl_llt.solve(id);          // (I + Lambda)^-1
    const Mat shrink = lambda * inv_ipl;            // (I + Lambda^-1)^-1

    const Vec mean = shrink * (x_t / std::sqrt(a)) +
                     inv_ipl * (std::sqrt(ab_prev) * data.component(k).mean());
    Mat cov = ((1.0 - a) / a) * shrink;
    cov = 0.5 * (cov + cov.transpose());
    comps.emplace_back(mean, cov);
    lambdas.push_back(std::move(lambda));
  }

  // Normalize the weights in the log domain; q(x_t) is the normalizer.
  const double lz = log_sum_exp(log_w);
  std::vector<double> w(K);
  double total = 0.0;
  for (int k = 0; k < K; ++k) {
    w[k] = std::exp(log_w[k] - lz);
    total += w[k];
  }
  for (double& wk : w) wk /= total;

  return PosteriorMixture{GaussianMixture(std::move(w), std::move(comps)),
                          std::move(lambdas)};
}

Gaussian ddpm_posterior_given_x0(const Vec& x_t, const Vec& x0, int t,
                                 const NoiseSchedule& s) {
  s.check_step(t);
  if (x_t.size() != x0.size()) {
    throw DimensionMismatch("ddpm_posterior_given_x0: dims differ");
  }
  const double a = s.alpha[t];
  const double ab = s.alpha_bar[t];
  const double ab_prev = s.alpha_bar[t - 1];
  const double beta = s.beta[t];
  const Vec mean = (std::sqrt(ab_prev) * beta / (1.0 - ab)) * x0 +
                   (std::sqrt(a) * (1.0 - ab_prev) / (1.0 - ab)) * x_t;
  const double var = std::max(s.beta_tilde[t], kSigmaFloor);
  return Gaussian::isotropic(mean, var);
}

}  // namespace smd
