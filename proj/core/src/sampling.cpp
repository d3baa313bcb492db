#include "smd/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace smd {

std::string to_string(NoiseRule rule) {
  return rule == NoiseRule::SqrtSigma ? "sqrt_sigma" : "sigma_literal";
}

NoiseRule noise_rule_from_string(const std::string& s) {
  if (s == "sqrt_sigma") return NoiseRule::SqrtSigma;
  if (s == "sigma_literal") return NoiseRule::SigmaLiteral;
  throw std::invalid_argument("unknown noise_rule '" + s + "'");
}

std::vector<int> strided_steps(int T, int T_used) {
  if (T_used < 1 || T_used > T) {
    throw std::invalid_argument("strided_steps: T_used outside [1, T]");
  }
  if (T_used == 1) return {T};
  std::vector<int> steps;
  steps.reserve(T_used);
  for (int k = 0; k < T_used; ++k) {
    const double pos = 1.0 + static_cast<double>(T - 1) * k / (T_used - 1);
    steps.push_back(static_cast<int>(std::lround(pos)));
  }
  steps.erase(std::unique(steps.begin(), steps.end()), steps.end());
  return steps;
}

namespace {

double noise_std(const NoiseSchedule& s, int t, NoiseRule rule) {
  if (t == 1) return 0.0;  // deterministic last step
  return rule == NoiseRule::SqrtSigma ? std::sqrt(s.sigma[t]) : s.sigma[t];
}

Mat update_mean(const Mat& x_t, int t, const Mat& eps_hat, const NoiseSchedule& s) {
  return mean_from_eps_batch(x_t, t, eps_hat, s);
}

// Predict is (X, t, eta_rngs) -> eps_hat; the vanilla one ignores the rngs.
template <typename PredictFn>
SampleResult chain_impl(int data_dim, const SampleRun& run, const NoiseSchedule& s,
                        PredictFn&& predict) {
  if (run.n < 1) throw std::invalid_argument("sample_chain: n must be >= 1");
  const int t_used = run.T_used == 0 ? s.T : run.T_used;
  SampleResult result;
  result.step_set = strided_steps(s.T, t_used);

  const Rng root(run.seed);
  std::vector<Rng> noise_rngs;
  std::vector<Rng> eta_rngs;
  noise_rngs.reserve(run.n);
  eta_rngs.reserve(run.n);
  for (int i = 0; i < run.n; ++i) {
    const Rng chain = root.fork(static_cast<std::uint64_t>(i));
    noise_rngs.push_back(chain.fork(0));
    eta_rngs.push_back(chain.fork(1));
  }

  Mat x(data_dim, run.n);
  for (int i = 0; i < run.n; ++i) {
    for (int r = 0; r < data_dim; ++r) x(r, i) = noise_rngs[i].normal();
  }
  if (run.keep_trajectory) result.trajectory.push_back(x);

  for (auto it = result.step_set.rbegin(); it != result.step_set.rend(); ++it) {
    const int t = *it;
    const Mat eps_hat = predict(x, t, eta_rngs);
    x = update_mean(x, t, eps_hat, s);
    const double std_dev = noise_std(s, t, run.noise_rule);
    if (std_dev > 0.0) {
      for (int i = 0; i < run.n; ++i) {
        for (int r = 0; r < data_dim; ++r) x(r, i) += std_dev * noise_rngs[i].normal();
      }
    }
    if (!x.allFinite()) {
      throw std::runtime_error("sample_chain: non-finite state after step t=" +
                               std::to_string(t));
    }
    if (run.keep_trajectory) result.trajectory.push_back(x);
  }
  result.samples = std::move(x);
  return result;
}

}  // namespace

Vec denoise_step(const VanillaDenoiser& d, const Vec& x_t, int t,
                 const NoiseSchedule& s, Rng& noise_rng, NoiseRule rule) {
  s.check_step(t);
  const Vec eps_hat = predict_eps_vanilla(d, x_t, t);
  Vec next = mean_from_eps(x_t, t, eps_hat, s);
  const double std_dev = noise_std(s, t, rule);
  if (std_dev > 0.0) {
    for (Eigen::Index r = 0; r < next.size(); ++r) {
      next[r] += std_dev * noise_rng.normal();
    }
  }
  return next;
}

Vec denoise_step(const SmdDenoiser& d, const Vec& x_t, int t,
                 const NoiseSchedule& s, Rng& noise_rng, Rng& eta_rng,
                 NoiseRule rule) {
  s.check_step(t);
  Vec eta(d.latent_dim);
  for (int r = 0; r < d.latent_dim; ++r) eta[r] = eta_rng.normal();
  const Vec eps_hat = predict_eps_smd(d, x_t, t, eta);
  Vec next = mean_from_eps(x_t, t, eps_hat, s);
  const double std_dev = noise_std(s, t, rule);
  if (std_dev > 0.0) {
    for (Eigen::Index r = 0; r < next.size(); ++r) {
      next[r] += std_dev * noise_rng.normal();
    }
  }
  return next;
}

SampleResult sample_chain(const VanillaDenoiser& d, const SampleRun& run,
                          const NoiseSchedule& s) {
  return chain_impl(d.data_dim, run, s,
                    [&](const Mat& x, int t, std::vector<Rng>&) {
                      const std::vector<int> ts(x.cols(), t);
                      return predict_eps_vanilla_batch(d, x, ts, nullptr);
                    });
}

SampleResult sample_chain(const SmdDenoiser& d, const SampleRun& run,
                          const NoiseSchedule& s) {
  return chain_impl(d.data_dim, run, s,
                    [&](const Mat& x, int t, std::vector<Rng>& eta_rngs) {
                      Mat eta(d.latent_dim, x.cols());
                      for (Eigen::Index i = 0; i < x.cols(); ++i) {
                        for (int r = 0; r < d.latent_dim; ++r) {
                          eta(r, i) = eta_rngs[static_cast<std::size_t>(i)].normal();
                        }
                      }
                      const std::vector<int> ts(x.cols(), t);
                      return predict_eps_smd_batch(d, x, ts, eta, nullptr);
                    });
}

}  // namespace smd
