#pragma once

#include <vector>

#include "smd/forward.hpp"
#include "smd/nn.hpp"

namespace smd {

/// Plain noise-prediction head: eps(x_t, t) from an MLP over
/// [x_t ; time_embedding(t)].
struct VanillaDenoiser {
  MlpSpec spec;
  int data_dim = 0;
  int T = 0;  // chain length the time embedding is scaled by
  ParamStore params;
};

VanillaDenoiser make_vanilla_denoiser(int data_dim, const std::vector<int>& hidden,
                                      int time_embed_dim, int T, Rng& rng);

/// Soft-mixture head: a latent sampler maps (eta, x_t, t) to z_t, a
/// hypernetwork maps (z_t, t) to per-layer FiLM (scale, shift) pairs, and
/// the base MLP runs under that modulation. The hypernetwork's output layer
/// is zero-initialized, so a fresh model is exactly the vanilla one.
struct SmdDenoiser {
  MlpSpec base_spec;
  MlpSpec latent_spec;
  MlpSpec hyper_spec;
  int data_dim = 0;
  int latent_dim = 0;
  int T = 0;
  ParamStore params;  // "base.*", "latent.*", "hyper.*"
};

SmdDenoiser make_smd_denoiser(int data_dim, const std::vector<int>& hidden,
                              int time_embed_dim, int latent_dim,
                              const std::vector<int>& latent_hidden,
                              const std::vector<int>& hyper_hidden, int T,
                              Rng& rng);

/// Stacks [x ; time_embedding(t)] column-wise for a batch.
Mat with_time_embedding(const Mat& x, const std::vector<int>& ts, int T,
                        int embed_dim);

/// Splits a stacked hypernetwork output into per-layer (scale, shift).
Modulation modulation_from_raw(const MlpSpec& base_spec, const Mat& raw);
/// Inverse of modulation_from_raw for gradients.
Mat raw_from_modulation(const MlpSpec& base_spec, const Modulation& mod);

Vec predict_eps_vanilla(const VanillaDenoiser& d, const Vec& x_t, int t);
Mat predict_eps_vanilla_batch(const VanillaDenoiser& d, const Mat& x_t,
                              const std::vector<int>& ts, MlpTape* tape);

Vec sample_latent(const SmdDenoiser& d, const Vec& eta, const Vec& x_t, int t);

struct SmdTapes {
  MlpTape latent;
  MlpTape hyper;
  MlpTape base;
};

Vec predict_eps_smd(const SmdDenoiser& d, const Vec& x_t, int t, const Vec& eta);
/// Batched SMD forward; eta has one column per x_t column.
Mat predict_eps_smd_batch(const SmdDenoiser& d, const Mat& x_t,
                          const std::vector<int>& ts, const Mat& eta,
                          SmdTapes* tapes);

/// Backpropagates d(loss)/d(eps_hat) through base, hyper and latent nets,
/// accumulating into d.params.
void smd_backward(SmdDenoiser& d, const SmdTapes& tapes, const Mat& output_grad);

/// Backward mean from predicted noise:
/// (x_t - beta_t/sqrt(1-abar_t) * eps_hat) / sqrt(alpha_t).
Vec mean_from_eps(const Vec& x_t, int t, const Vec& eps_hat,
                  const NoiseSchedule& s);
Mat mean_from_eps_batch(const Mat& x_t, int t, const Mat& eps_hat,
                        const NoiseSchedule& s);

}  // namespace smd
