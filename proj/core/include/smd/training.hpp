#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "smd/denoiser.hpp"

namespace smd {

enum class WeightMode { Simple, GammaWeighted };

std::string to_string(WeightMode mode);
WeightMode weight_mode_from_string(const std::string& s);

struct TrainConfig {
  int steps = 1;
  int batch_size = 256;
  double lr = 2e-4;
  int n_eta = 1;
  WeightMode weight_mode = WeightMode::Simple;
  std::uint64_t seed = 0;
  int eval_every = 1000;

  void validate() const;
};

/// One loss evaluation over a fresh batch. Gradients are accumulated into
/// the model's ParamStore (cleared first); the scalar loss is returned.
///
/// x0, t and eps come from `step_rng.fork(0)`; eta draws (SMD only) come
/// from `step_rng.fork(1)`. Keeping the data stream separate is what makes
/// the zero-modulation SMD loss reproduce the vanilla loss bit-for-bit
/// under a shared step seed.
double ddpm_loss_batch(VanillaDenoiser& d, const GaussianMixture& data,
                       const NoiseSchedule& s, const TrainConfig& cfg,
                       const Rng& step_rng);
double smd_loss_batch(SmdDenoiser& d, const GaussianMixture& data,
                      const NoiseSchedule& s, const TrainConfig& cfg,
                      const Rng& step_rng);

struct TraceRow {
  std::int64_t step = 0;
  double loss = 0.0;
  double wall_ms = 0.0;
};

struct TrainResult {
  std::vector<TraceRow> trace;
  std::int64_t final_step = 0;
};

/// Invoked at every eval_every boundary (and at the last step).
using EvalHook = std::function<void(const TraceRow&)>;

/// Adam loop; deterministic per seed: step k always draws from
/// Rng(seed).fork(k), so resuming from a checkpoint at step k reproduces
/// the uninterrupted run exactly.
TrainResult train(VanillaDenoiser& model, const GaussianMixture& data,
                  const NoiseSchedule& s, const TrainConfig& cfg,
                  const EvalHook& hook = nullptr, std::int64_t start_step = 0);
TrainResult train(SmdDenoiser& model, const GaussianMixture& data,
                  const NoiseSchedule& s, const TrainConfig& cfg,
                  const EvalHook& hook = nullptr, std::int64_t start_step = 0);

}  // namespace smd
