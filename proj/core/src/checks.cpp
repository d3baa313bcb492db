#include "smd/checks.hpp"

#include <cmath>
#include <cstdlib>

namespace smd {

namespace {

double tol_scale() {
  if (const char* env = std::getenv("SMD_CHECK_TOL_SCALE")) {
    const double v = std::atof(env);
    if (v > 0.0) return v;
  }
  return 1.0;
}

Gaussian random_gaussian(Rng& rng, int d, double mean_range = 3.0) {
  Vec mean(d);
  for (int i = 0; i < d; ++i) mean[i] = mean_range * (2.0 * rng.uniform01() - 1.0);
  // A A^T + small ridge keeps the covariance well conditioned.
  Mat a(d, d);
  for (int r = 0; r < d; ++r) {
    for (int c = 0; c < d; ++c) a(r, c) = rng.normal();
  }
  Mat cov = a * a.transpose() / d + 0.3 * Mat::Identity(d, d);
  return Gaussian(mean, cov);
}

GaussianMixture random_mixture_1d(Rng& rng, int max_k = 3) {
  const int k = static_cast<int>(rng.uniform_int(1, max_k));
  std::vector<double> w(k);
  double sum = 0.0;
  for (auto& v : w) {
    v = 0.2 + rng.uniform01();
    sum += v;
  }
  for (auto& v : w) v /= sum;
  std::vector<Gaussian> comps;
  for (int i = 0; i < k; ++i) {
    Vec mean(1);
    mean << 4.0 * (2.0 * rng.uniform01() - 1.0);
    comps.push_back(Gaussian::isotropic(mean, 0.25 + rng.uniform01()));
  }
  return GaussianMixture(std::move(w), std::move(comps));
}

double rel_err(double got, double want) {
  return std::abs(got - want) / std::max({std::abs(got), std::abs(want), 1e-300});
}

CheckResult product_identity(Rng& rng) {
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int d = static_cast<int>(rng.uniform_int(1, 3));
    const Gaussian g1 = random_gaussian(rng, d);
    const Gaussian g2 = random_gaussian(rng, d);
    const ScaledGaussian prod = gaussian_product(g1, g2);
    for (int p = 0; p < 20; ++p) {
      Vec x(d);
      for (int i = 0; i < d; ++i) x[i] = 4.0 * (2.0 * rng.uniform01() - 1.0);
      const double direct = std::exp(g1.log_pdf(x) + g2.log_pdf(x));
      const double via = std::exp(prod.log_eval(x));
      worst = std::max(worst, rel_err(via, direct));
    }
  }
  return {"product_identity", false, worst, 1e-9, "pointwise pdf product, 200 pairs x 20 points"};
}

CheckResult rescale_identity(Rng& rng) {
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int d = static_cast<int>(rng.uniform_int(1, 3));
    const Gaussian g = random_gaussian(rng, d);
    const double lambda = 0.2 + 2.0 * rng.uniform01();
    const ScaledGaussian sg = gaussian_rescale(lambda, g);
    for (int p = 0; p < 50; ++p) {
      Vec v(d);
      for (int i = 0; i < d; ++i) v[i] = 3.0 * (2.0 * rng.uniform01() - 1.0);
      // Direct left-hand side: N(g.mean; lambda * v, g.cov).
      const Gaussian lhs(lambda * v, g.cov());
      const double direct = std::exp(lhs.log_pdf(g.mean()));
      const double via = std::exp(sg.log_eval(v));
      worst = std::max(worst, rel_err(via, direct));
    }
  }
  return {"rescale_identity", false, worst, 1e-10, "mean/argument swap, 100 cases x 50 points"};
}

CheckResult kl_nonnegativity(Rng& rng) {
  double worst = 0.0;  // most negative KL seen, flipped
  for (int trial = 0; trial < 200; ++trial) {
    const int d = static_cast<int>(rng.uniform_int(1, 3));
    const Gaussian p = random_gaussian(rng, d);
    const Gaussian q = random_gaussian(rng, d);
    worst = std::max(worst, -kl_gaussian_gaussian(p, q));
    worst = std::max(worst, std::abs(kl_gaussian_gaussian(p, p)));
  }
  return {"kl_nonnegativity", false, worst, 1e-12, "KL >= 0 and KL(p,p) = 0, 200 pairs"};
}

// Trapezoid integral of p ln(p/q) for 1D Gaussians.
double kl_grid_1d(const Gaussian& p, const Gaussian& q) {
  const double sd = std::sqrt(p.cov()(0, 0));
  const double lo = p.mean()[0] - 8.0 * sd;
  const double hi = p.mean()[0] + 8.0 * sd;
  const double step = 0.01 * sd;
  const int n = static_cast<int>((hi - lo) / step) + 1;
  double acc = 0.0;
  Vec x(1);
  for (int i = 0; i < n; ++i) {
    x[0] = lo + i * step;
    const double lp = p.log_pdf(x);
    const double integrand = std::exp(lp) * (lp - q.log_pdf(x));
    acc += (i == 0 || i == n - 1) ? 0.5 * integrand : integrand;
  }
  return acc * step;
}

CheckResult kl_vs_grid(Rng& rng) {
  double worst = 0.0;
  for (int trial = 0; trial < 30; ++trial) {
    const Gaussian p = random_gaussian(rng, 1, 1.0);
    const Gaussian q = random_gaussian(rng, 1, 1.0);
    worst = std::max(worst, std::abs(kl_gaussian_gaussian(p, q) - kl_grid_1d(p, q)));
  }
  return {"kl_vs_grid_1d", false, worst, 1e-4, "analytic KL vs trapezoidal integral, 30 pairs"};
}

CheckResult ce_decomposition(Rng& rng) {
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const GaussianMixture m = random_mixture_1d(rng);
    const Gaussian g = random_gaussian(rng, 1, 1.0);
    const double ce = cross_entropy_mixture_gaussian(m, g);
    double recomposed = 0.0;
    for (int k = 0; k < m.size(); ++k) {
      recomposed += m.weights()[k] * (kl_gaussian_gaussian(m.component(k), g) +
                                      m.component(k).entropy());
    }
    worst = std::max(worst, rel_err(ce, recomposed));
  }
  return {"ce_decomposition", false, worst, 1e-12, "CE = sum w (KL + H), 50 mixtures"};
}

CheckResult entropy_sandwich(Rng& rng) {
  double worst = -1e300;  // worst violation of MC <= bound + 3 SE
  for (int trial = 0; trial < 20; ++trial) {
    const GaussianMixture m = random_mixture_1d(rng);
    const int n = 20000;
    double sum = 0.0, sum_sq = 0.0;
    for (int i = 0; i < n; ++i) {
      const double v = -m.log_pdf(m.sample(rng));
      sum += v;
      sum_sq += v * v;
    }
    const double mean = sum / n;
    const double se = std::sqrt(std::max(0.0, (sum_sq - n * mean * mean) / (n - 1)) / n);
    const double bound = mixture_entropy_upper_bound(m);
    worst = std::max(worst, mean - (bound + 3.0 * se));
  }
  return {"entropy_sandwich", false, worst, 0.0, "MC entropy <= Huber bound + 3 SE, 20 mixtures"};
}

// Normalized Bayes-rule posterior density on a 1D grid:
// q(y | x_t) ~ N(x_t; sqrt(a) y, beta) * q_{t-1}(y).
double posterior_tv_1d(const GaussianMixture& data, const NoiseSchedule& s,
                       int t, const Vec& x_t) {
  const PosteriorMixture post = posterior_true(data, x_t, t, s);
  double lo = 1e300, hi = -1e300, min_sd = 1e300;
  for (int k = 0; k < post.mixture.size(); ++k) {
    const double mu = post.mixture.component(k).mean()[0];
    const double sd = std::sqrt(post.mixture.component(k).cov()(0, 0));
    lo = std::min(lo, mu - 9.0 * sd);
    hi = std::max(hi, mu + 9.0 * sd);
    min_sd = std::min(min_sd, sd);
  }
  const double step = 0.01 * min_sd;
  const int n = std::min(400000, static_cast<int>((hi - lo) / step) + 1);
  const GaussianMixture prior = marginal_q_xt(data, t - 1, s);
  const double a = s.alpha[t];
  const double beta = s.beta[t];

  std::vector<double> log_bayes(n);
  std::vector<double> exact(n);
  Vec y(1);
  for (int i = 0; i < n; ++i) {
    y[0] = lo + i * step;
    const double resid = x_t[0] - std::sqrt(a) * y[0];
    log_bayes[i] = -0.5 * (std::log(2.0 * M_PI * beta) + resid * resid / beta) +
                   prior.log_pdf(y);
    exact[i] = std::exp(post.mixture.log_pdf(y));
  }
  const double lz = log_sum_exp(log_bayes);
  double tv = 0.0;
  for (int i = 0; i < n; ++i) {
    const double bayes_density = std::exp(log_bayes[i] - lz) / step;
    const double w = (i == 0 || i == n - 1) ? 0.5 : 1.0;
    tv += w * std::abs(bayes_density - exact[i]) * step;
  }
  return 0.5 * tv;
}

CheckResult posterior_vs_bayes(Rng& rng) {
  const NoiseSchedule s = make_schedule(10, 0.02, 0.25, SigmaMode::Beta);
  double worst = 0.0;
  for (int trial = 0; trial < 40; ++trial) {
    const GaussianMixture data = random_mixture_1d(rng);
    const int t = static_cast<int>(rng.uniform_int(1, s.T));
    const Vec x_t = marginal_q_xt(data, t, s).sample(rng);
    worst = std::max(worst, posterior_tv_1d(data, s, t, x_t));
  }
  return {"posterior_vs_bayes_grid", false, worst, 1e-3,
          "total variation vs grid Bayes rule, 40 cases"};
}

CheckResult posterior_delta_one(Rng& rng) {
  const NoiseSchedule s = make_schedule(20, 0.01, 0.2, SigmaMode::Beta);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int d = static_cast<int>(rng.uniform_int(1, 3));
    Vec mean(d);
    for (int i = 0; i < d; ++i) mean[i] = 2.0 * rng.normal();
    const GaussianMixture data({1.0}, {Gaussian::isotropic(mean, 1.0)});
    const int t = static_cast<int>(rng.uniform_int(1, s.T));
    Vec x_t(d);
    for (int i = 0; i < d; ++i) x_t[i] = rng.normal();
    const PosteriorMixture post = posterior_true(data, x_t, t, s);
    const Mat want = (1.0 - s.alpha[t]) * Mat::Identity(d, d);
    worst = std::max(worst,
                     (post.mixture.component(0).cov() - want).cwiseAbs().maxCoeff());
  }
  return {"posterior_delta1_cov", false, worst, 1e-12,
          "unit-covariance data gives Sigma' = beta_t I, 50 cases"};
}

CheckResult posterior_weight_sum(Rng& rng) {
  const NoiseSchedule s = make_schedule(10, 0.02, 0.25, SigmaMode::Beta);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const GaussianMixture data = random_mixture_1d(rng);
    const int t = static_cast<int>(rng.uniform_int(1, s.T));
    const Vec x_t = marginal_q_xt(data, t, s).sample(rng);
    const PosteriorMixture post = posterior_true(data, x_t, t, s);
    double sum = 0.0;
    for (double w : post.mixture.weights()) sum += w;
    worst = std::max(worst, std::abs(sum - 1.0));
  }
  return {"posterior_weight_sum", false, worst, 1e-8, "posterior weights normalize, 200 cases"};
}

CheckResult schedule_identities(Rng&) {
  double worst = -1e300;
  for (const auto mode : {SigmaMode::Beta, SigmaMode::BetaTilde}) {
    for (const auto& [T, bmin, bmax] :
         {std::tuple{1000, 1e-4, 0.02}, {100, 1e-3, 0.06}, {1, 0.1, 0.1}}) {
      const NoiseSchedule s = make_schedule(T, bmin, bmax, mode);
      for (int t = 1; t <= T; ++t) {
        worst = std::max(worst, s.beta_tilde[t] - s.beta[t]);  // beta_tilde <= beta
        worst = std::max(worst, -s.gamma[t]);                  // gamma > 0
        worst = std::max(worst, s.alpha_bar[t] - s.alpha_bar[t - 1]);  // decreasing
      }
    }
  }
  return {"schedule_identities", false, worst, 0.0,
          "beta_tilde <= beta, gamma > 0, alpha_bar decreasing"};
}

}  // namespace

std::vector<CheckResult> run_gmm_checks(std::uint64_t seed) {
  const double scale = tol_scale();
  Rng rng(seed);
  std::vector<CheckResult> results = {
      product_identity(rng),  rescale_identity(rng),   kl_nonnegativity(rng),
      kl_vs_grid(rng),        ce_decomposition(rng),   entropy_sandwich(rng),
      posterior_vs_bayes(rng), posterior_delta_one(rng), posterior_weight_sum(rng),
      schedule_identities(rng)};
  for (auto& r : results) {
    r.tol *= scale;
    r.pass = r.max_err <= r.tol;
  }
  return results;
}

}  // namespace smd
