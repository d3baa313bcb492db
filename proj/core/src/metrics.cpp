#include "smd/metrics.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include <Eigen/Eigenvalues>
#include "json.hpp"
#include "smd/parallel.hpp"

namespace smd {

Gaussian BackwardModel::conditional_gaussian(const Vec&, int, Rng&) const {
  throw std::logic_error("BackwardModel: not a Gaussian-kind model");
}

GaussianMixture BackwardModel::conditional_mixture(const Vec&, int, Rng&) const {
  throw std::logic_error("BackwardModel: not a mixture-kind model");
}

Gaussian VanillaBackward::conditional_gaussian(const Vec& x_t, int t, Rng&) const {
  const Vec eps_hat = predict_eps_vanilla(d_, x_t, t);
  if (!eps_hat.allFinite()) {
    throw std::runtime_error("VanillaBackward: non-finite model output at t=" +
                             std::to_string(t));
  }
  return Gaussian::isotropic(mean_from_eps(x_t, t, eps_hat, s_), s_.sigma[t]);
}

GaussianMixture SmdBackward::conditional_mixture(const Vec& x_t, int t,
                                                 Rng& rng) const {
  Mat eta(d_.latent_dim, n_draws_);
  for (int c = 0; c < n_draws_; ++c) {
    for (int r = 0; r < d_.latent_dim; ++r) eta(r, c) = rng.normal();
  }
  Mat x_rep(x_t.size(), n_draws_);
  x_rep.colwise() = x_t;
  const std::vector<int> ts(n_draws_, t);
  const Mat eps_hat = predict_eps_smd_batch(d_, x_rep, ts, eta, nullptr);
  if (!eps_hat.allFinite()) {
    throw std::runtime_error("SmdBackward: non-finite model output at t=" +
                             std::to_string(t));
  }
  const Mat means = mean_from_eps_batch(x_rep, t, eps_hat, s_);
  std::vector<Gaussian> comps;
  comps.reserve(n_draws_);
  for (int c = 0; c < n_draws_; ++c) {
    comps.push_back(Gaussian::isotropic(means.col(c), s_.sigma[t]));
  }
  return GaussianMixture(std::vector<double>(n_draws_, 1.0 / n_draws_),
                         std::move(comps));
}

GaussianMixture ExactPosteriorBackward::conditional_mixture(const Vec& x_t, int t,
                                                            Rng&) const {
  return posterior_true(data_, x_t, t, s_).mixture;
}

namespace {

struct MeanSe {
  double mean;
  double se;
};

MeanSe mean_and_se(const std::vector<double>& xs) {
  const int n = static_cast<int>(xs.size());
  double sum = 0.0;
  for (double x : xs) sum += x;
  const double mean = sum / n;
  if (n < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1) / n)};
}

// Monte-Carlo entropy of the posterior mixture, with a Huber-bound sanity
// ceiling: an estimate far above the analytic upper bound means the
// estimator itself is broken.
double mc_mixture_entropy(const GaussianMixture& mix, int n, Rng& rng) {
  std::vector<double> terms(n);
  for (int j = 0; j < n; ++j) {
    terms[j] = -mix.log_pdf(mix.sample(rng));
  }
  const MeanSe est = mean_and_se(terms);
  const double ceiling = mixture_entropy_upper_bound(mix);
  if (est.mean > ceiling + 6.0 * est.se + 1e-6) {
    throw std::runtime_error("mc_mixture_entropy: estimate exceeds entropy bound");
  }
  return est.mean;
}

}  // namespace

McStat local_error_mt(const GaussianMixture& data, const BackwardModel& model,
                      int t, const NoiseSchedule& s, int n_outer, int n_inner,
                      const Rng& rng) {
  s.check_step(t);
  if (n_outer < 2 || n_inner < 1) {
    throw std::invalid_argument("local_error_mt: need n_outer >= 2, n_inner >= 1");
  }
  const GaussianMixture marginal = marginal_q_xt(data, t, s);

  std::vector<double> kl(n_outer);
  parallel_for(n_outer, [&](int i) {
    Rng rng_i = rng.fork(static_cast<std::uint64_t>(i));
    const Vec x_t = marginal.sample(rng_i);
    const PosteriorMixture post = posterior_true(data, x_t, t, s);

    if (model.is_gaussian()) {
      const Gaussian g = model.conditional_gaussian(x_t, t, rng_i);
      const double ce = cross_entropy_mixture_gaussian(post.mixture, g);
      const double h = mc_mixture_entropy(post.mixture, n_inner, rng_i);
      kl[i] = ce - h;
    } else {
      const GaussianMixture approx = model.conditional_mixture(x_t, t, rng_i);
      double acc = 0.0;
      for (int j = 0; j < n_inner; ++j) {
        const Vec y = post.mixture.sample(rng_i);
        const double lp = approx.log_pdf(y);
        if (!std::isfinite(lp)) {
          throw std::runtime_error("local_error_mt: non-finite model log-pdf");
        }
        acc += post.mixture.log_pdf(y) - lp;
      }
      kl[i] = acc / n_inner;
    }
  });

  const MeanSe est = mean_and_se(kl);
  return {est.mean, est.se};
}

McStat global_error_e(const GaussianMixture& data, const BackwardModel& model,
                      const NoiseSchedule& s, int n_outer, int n_inner,
                      const Rng& rng) {
  double total = 0.0;
  double var = 0.0;
  for (int t = 1; t <= s.T; ++t) {
    const McStat mt = local_error_mt(data, model, t, s, n_outer, n_inner,
                                     rng.fork(static_cast<std::uint64_t>(t)));
    total += mt.value;
    var += mt.se * mt.se;
  }
  return {total, std::sqrt(var)};
}

int Theorem1Config::dim() const {
  return base_means.empty() ? 0 : static_cast<int>(base_means.front().size());
}

void Theorem1Config::validate(const NoiseSchedule& s) const {
  s.check_step(t);
  const std::size_t K = base_means.size();
  if (K == 0) throw std::invalid_argument("Theorem1Config: no components");
  if (weights.size() != K || delta.size() != K) {
    throw std::invalid_argument("Theorem1Config: weights/delta/means count mismatch");
  }
  double wsum = 0.0;
  for (double w : weights) {
    if (!(w > 0.0)) throw std::invalid_argument("Theorem1Config: weights must be > 0");
    wsum += w;
  }
  if (std::abs(wsum - 1.0) > 1e-10) {
    throw std::invalid_argument("Theorem1Config: weights must sum to 1");
  }
  for (double dv : delta) {
    if (!(dv > 0.0)) throw std::invalid_argument("Theorem1Config: delta must be > 0");
  }
  for (double l : lambda_values) {
    if (!(l > 0.0)) throw std::invalid_argument("Theorem1Config: lambda must be > 0");
  }
  const double ab = s.alpha_bar[t];
  Vec constraint = Vec::Zero(dim());
  for (std::size_t k = 0; k < K; ++k) {
    constraint += weights[k] * base_means[k] / (1.0 + (delta[k] - 1.0) * ab);
  }
  if (constraint.cwiseAbs().maxCoeff() > 1e-10) {
    throw std::invalid_argument(
        "Theorem1Config: weighted zero-mean constraint violated (|sum| = " +
        std::to_string(constraint.cwiseAbs().maxCoeff()) + ")");
  }
}

Theorem1Bound theorem1_bound_parts(const Theorem1Config& cfg, const NoiseSchedule& s) {
  cfg.validate(s);
  const int t = cfg.t;
  const int d = cfg.dim();
  const double a = s.alpha[t];
  const double ab = s.alpha_bar[t];
  const double ab_prev = s.alpha_bar[t - 1];
  const double sigma = s.sigma[t];
  const double K = static_cast<double>(cfg.base_means.size());

  double weighted_norms = 0.0;
  for (std::size_t k = 0; k < cfg.base_means.size(); ++k) {
    const double denom = 1.0 + (cfg.delta[k] - 1.0) * ab;
    weighted_norms += cfg.weights[k] * (cfg.base_means[k] / denom).squaredNorm();
  }

  Theorem1Bound bound;
  bound.quad_coeff =
      (1.0 - a) * (1.0 - a) * ab_prev / (2.0 * sigma) * weighted_norms;
  bound.constant = -std::log(K) +
                   0.5 * d * (std::log(sigma * a / (1.0 - a)) +
                              (1.0 - a) / sigma - 1.0);
  return bound;
}

std::vector<double> theorem1_lower_bound(const Theorem1Config& cfg,
                                         const NoiseSchedule& s) {
  const Theorem1Bound parts = theorem1_bound_parts(cfg, s);
  std::vector<double> out;
  out.reserve(cfg.lambda_values.size());
  for (double l : cfg.lambda_values) out.push_back(parts.value(l));
  return out;
}

GaussianMixture theorem1_mixture(const Theorem1Config& cfg, double lambda) {
  std::vector<Gaussian> comps;
  comps.reserve(cfg.base_means.size());
  for (std::size_t k = 0; k < cfg.base_means.size(); ++k) {
    comps.push_back(Gaussian::isotropic(lambda * cfg.base_means[k], cfg.delta[k]));
  }
  return GaussianMixture(cfg.weights, std::move(comps));
}

Theorem1BestGaussianBackward::Theorem1BestGaussianBackward(
    const Theorem1Config& cfg, const NoiseSchedule& s, double lambda) {
  cfg.validate(s);
  for (double dv : cfg.delta) {
    if (std::abs(dv - cfg.delta.front()) > 1e-14) {
      throw std::invalid_argument(
          "Theorem1BestGaussianBackward: deltas must be equal");
    }
  }
  t_ = cfg.t;
  const double delta = cfg.delta.front();
  const double ab = s.alpha_bar[t_];
  const double ab_prev = s.alpha_bar[t_ - 1];
  const double a = s.alpha[t_];
  coef_ = (1.0 + (delta - 1.0) * ab_prev) / (1.0 + (delta - 1.0) * ab) *
          std::sqrt(a);
  offset_ = Vec::Zero(cfg.dim());
  for (std::size_t k = 0; k < cfg.base_means.size(); ++k) {
    offset_ += cfg.weights[k] * (1.0 - a) * std::sqrt(ab_prev) /
               (1.0 + (delta - 1.0) * ab) * (lambda * cfg.base_means[k]);
  }
  sigma_ = s.sigma[t_];
}

Gaussian Theorem1BestGaussianBackward::conditional_gaussian(const Vec& x_t, int t,
                                                            Rng&) const {
  if (t != t_) {
    throw std::invalid_argument("Theorem1BestGaussianBackward: built for t=" +
                                std::to_string(t_));
  }
  return Gaussian::isotropic(coef_ * x_t + offset_, sigma_);
}

ModeMetrics mode_metrics(const Mat& samples, const GaussianMixture& truth) {
  const int n = static_cast<int>(samples.cols());
  if (n < 1000) {
    throw std::invalid_argument("mode_metrics: need at least 1000 samples");
  }
  if (samples.rows() != truth.dim()) {
    throw DimensionMismatch("mode_metrics: sample dim mismatch");
  }
  const int K = truth.size();

  ModeMetrics out;
  out.assign_counts.assign(K, 0);
  std::vector<double> dist_sums(K, 0.0);
  double nll_sum = 0.0;

  for (int i = 0; i < n; ++i) {
    const Vec x = samples.col(i);
    int best = 0;
    double best_dist = (x - truth.component(0).mean()).norm();
    for (int k = 1; k < K; ++k) {
      const double dk = (x - truth.component(k).mean()).norm();
      if (dk < best_dist) {
        best = k;
        best_dist = dk;
      }
    }
    out.assign_counts[best] += 1;
    dist_sums[best] += best_dist;
    nll_sum -= truth.log_pdf(x);
  }

  const double count_floor = 0.25 * static_cast<double>(n) / K;
  int covered = 0;
  for (int k = 0; k < K; ++k) {
    if (out.assign_counts[k] < count_floor) continue;
    Eigen::SelfAdjointEigenSolver<Mat> eig(truth.component(k).cov());
    const double spread_cap = 3.0 * std::sqrt(eig.eigenvalues().maxCoeff());
    const double mean_dist = dist_sums[k] / out.assign_counts[k];
    if (mean_dist < spread_cap) ++covered;
  }
  out.mode_recall = static_cast<double>(covered) / K;
  out.mean_nll = nll_sum / n;
  return out;
}

std::string metric_report_to_json(const MetricReport& report) {
  nlohmann::json j;
  j["m_t"] = nlohmann::json::array();
  for (const auto& row : report.m_t) {
    j["m_t"].push_back({{"t", row.t}, {"m_t", row.m_t}, {"se", row.se}});
  }
  j["e_global"] = {{"value", report.e_global.value}, {"se", report.e_global.se}};
  if (report.mode_recall >= 0.0) {
    j["mode_recall"] = report.mode_recall;
    j["mean_nll"] = report.mean_nll;
  }
  nlohmann::json meta = nlohmann::json::object();
  for (const auto& [k, v] : report.metadata) meta[k] = v;
  j["metadata"] = meta;
  return j.dump(2);
}

std::string metric_report_to_csv(const MetricReport& report) {
  std::ostringstream out;
  out << "t,m_t,se\n";
  out.precision(17);
  for (const auto& row : report.m_t) {
    out << row.t << "," << row.m_t << "," << row.se << "\n";
  }
  return out.str();
}

}  // namespace smd
