#include "smd/training.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace smd {

std::string to_string(WeightMode mode) {
  return mode == WeightMode::Simple ? "simple" : "gamma_weighted";
}

WeightMode weight_mode_from_string(const std::string& s) {
  if (s == "simple") return WeightMode::Simple;
  if (s == "gamma_weighted") return WeightMode::GammaWeighted;
  throw std::invalid_argument("unknown weight_mode '" + s + "'");
}

void TrainConfig::validate() const {
  if (steps < 0) throw std::invalid_argument("train: steps must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (!(lr > 0.0)) throw std::invalid_argument("train: lr must be > 0");
  if (n_eta < 1) throw std::invalid_argument("train: n_eta must be >= 1");
  if (eval_every < 1) throw std::invalid_argument("train: eval_every must be >= 1");
}

namespace {

struct BatchDraw {
  Mat x0;
  Mat eps;
  Mat x_t;
  std::vector<int> ts;
};

// Fixed draw order per example: x0 (component pick + Gaussian), t, eps.
BatchDraw draw_batch(const GaussianMixture& data, const NoiseSchedule& s,
                     int batch, Rng& data_rng) {
  const int d = data.dim();
  BatchDraw b;
  b.x0.resize(d, batch);
  b.eps.resize(d, batch);
  b.x_t.resize(d, batch);
  b.ts.resize(batch);
  for (int i = 0; i < batch; ++i) {
    b.x0.col(i) = data.sample(data_rng);
    b.ts[i] = static_cast<int>(data_rng.uniform_int(1, s.T));
    for (int r = 0; r < d; ++r) b.eps(r, i) = data_rng.normal();
    const double ab = s.alpha_bar[b.ts[i]];
    b.x_t.col(i) = std::sqrt(ab) * b.x0.col(i) + std::sqrt(1.0 - ab) * b.eps.col(i);
  }
  return b;
}

double example_weight(const TrainConfig& cfg, const NoiseSchedule& s, int t) {
  return cfg.weight_mode == WeightMode::GammaWeighted ? s.gamma[t] : 1.0;
}

}  // namespace

double ddpm_loss_batch(VanillaDenoiser& d, const GaussianMixture& data,
                       const NoiseSchedule& s, const TrainConfig& cfg,
                       const Rng& step_rng) {
  cfg.validate();
  Rng data_rng = step_rng.fork(0);
  const BatchDraw b = draw_batch(data, s, cfg.batch_size, data_rng);

  MlpTape tape;
  const Mat eps_hat = predict_eps_vanilla_batch(d, b.x_t, b.ts, &tape);
  const Mat residual = eps_hat - b.eps;

  double loss = 0.0;
  Mat out_grad(residual.rows(), residual.cols());
  for (int i = 0; i < cfg.batch_size; ++i) {
    const double w = example_weight(cfg, s, b.ts[i]);
    loss += w * residual.col(i).squaredNorm();
    out_grad.col(i) = (2.0 * w / cfg.batch_size) * residual.col(i);
  }
  loss /= cfg.batch_size;

  d.params.zero_grads();
  mlp_backward(d.spec, d.params, "base.", tape, out_grad);
  return loss;
}

double smd_loss_batch(SmdDenoiser& d, const GaussianMixture& data,
                      const NoiseSchedule& s, const TrainConfig& cfg,
                      const Rng& step_rng) {
  cfg.validate();
  Rng data_rng = step_rng.fork(0);
  Rng eta_rng = step_rng.fork(1);
  const BatchDraw b = draw_batch(data, s, cfg.batch_size, data_rng);

  const int n_eta = cfg.n_eta;
  const int wide = cfg.batch_size * n_eta;
  const int dd = d.data_dim;

  // Each example is replicated n_eta times with fresh eta draws; the
  // per-example loss is the mean over its eta replicas.
  Mat x_t(dd, wide), eps(dd, wide), eta(d.latent_dim, wide);
  std::vector<int> ts(wide);
  for (int i = 0; i < cfg.batch_size; ++i) {
    for (int j = 0; j < n_eta; ++j) {
      const int c = i * n_eta + j;
      x_t.col(c) = b.x_t.col(i);
      eps.col(c) = b.eps.col(i);
      ts[c] = b.ts[i];
      for (int r = 0; r < d.latent_dim; ++r) eta(r, c) = eta_rng.normal();
    }
  }

  SmdTapes tapes;
  const Mat eps_hat = predict_eps_smd_batch(d, x_t, ts, eta, &tapes);
  const Mat residual = eps_hat - eps;

  double loss = 0.0;
  Mat out_grad(residual.rows(), residual.cols());
  for (int c = 0; c < wide; ++c) {
    const double w = example_weight(cfg, s, ts[c]);
    loss += w * residual.col(c).squaredNorm();
    out_grad.col(c) = (2.0 * w / wide) * residual.col(c);
  }
  loss /= wide;

  d.params.zero_grads();
  smd_backward(d, tapes, out_grad);
  return loss;
}

namespace {

template <typename Model, typename LossFn>
TrainResult train_impl(Model& model, const TrainConfig& cfg, const EvalHook& hook,
                       std::int64_t start_step, LossFn&& loss_fn) {
  cfg.validate();
  if (start_step < 0 || start_step > cfg.steps) {
    throw std::invalid_argument("train: start_step outside [0, steps]");
  }
  const Rng root(cfg.seed);
  TrainResult result;
  result.final_step = start_step;

  using clock = std::chrono::steady_clock;
  for (std::int64_t step = start_step + 1; step <= cfg.steps; ++step) {
    const auto begin = clock::now();
    const Rng step_rng = root.fork(static_cast<std::uint64_t>(step));
    const double loss = loss_fn(model, step_rng);
    if (!std::isfinite(loss)) {
      throw std::runtime_error("train: non-finite loss at step " +
                               std::to_string(step));
    }
    adam_step(model.params, cfg.lr, 0.9, 0.999, 1e-8, step);
    const double wall_ms =
        std::chrono::duration<double, std::milli>(clock::now() - begin).count();

    result.final_step = step;
    if (step % cfg.eval_every == 0 || step == cfg.steps) {
      const TraceRow row{step, loss, wall_ms};
      result.trace.push_back(row);
      if (hook) hook(row);
    }
  }
  return result;
}

}  // namespace

TrainResult train(VanillaDenoiser& model, const GaussianMixture& data,
                  const NoiseSchedule& s, const TrainConfig& cfg,
                  const EvalHook& hook, std::int64_t start_step) {
  return train_impl(model, cfg, hook, start_step,
                    [&](VanillaDenoiser& m, const Rng& r) {
                      return ddpm_loss_batch(m, data, s, cfg, r);
                    });
}

TrainResult train(SmdDenoiser& model, const GaussianMixture& data,
                  const NoiseSchedule& s, const TrainConfig& cfg,
                  const EvalHook& hook, std::int64_t start_step) {
  return train_impl(model, cfg, hook, start_step,
                    [&](SmdDenoiser& m, const Rng& r) {
                      return smd_loss_batch(m, data, s, cfg, r);
                    });
}

}  // namespace smd
