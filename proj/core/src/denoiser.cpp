#include "smd/denoiser.hpp"

#include <cmath>
#include <stdexcept>

namespace smd {

VanillaDenoiser make_vanilla_denoiser(int data_dim, const std::vector<int>& hidden,
                                      int time_embed_dim, int T, Rng& rng) {
  VanillaDenoiser d;
  d.data_dim = data_dim;
  d.T = T;
  d.spec.input_dim = data_dim + time_embed_dim;
  d.spec.hidden = hidden;
  d.spec.output_dim = data_dim;
  d.spec.time_embed_dim = time_embed_dim;
  init_mlp_params(d.spec, d.params, "base.", rng);
  return d;
}

SmdDenoiser make_smd_denoiser(int data_dim, const std::vector<int>& hidden,
                              int time_embed_dim, int latent_dim,
                              const std::vector<int>& latent_hidden,
                              const std::vector<int>& hyper_hidden, int T,
                              Rng& rng) {
  SmdDenoiser d;
  d.data_dim = data_dim;
  d.latent_dim = latent_dim;
  d.T = T;

  d.base_spec.input_dim = data_dim + time_embed_dim;
  d.base_spec.hidden = hidden;
  d.base_spec.output_dim = data_dim;
  d.base_spec.time_embed_dim = time_embed_dim;

  d.latent_spec.input_dim = latent_dim + data_dim + time_embed_dim;
  d.latent_spec.hidden = latent_hidden;
  d.latent_spec.output_dim = latent_dim;
  d.latent_spec.time_embed_dim = time_embed_dim;

  d.hyper_spec.input_dim = latent_dim + time_embed_dim;
  d.hyper_spec.hidden = hyper_hidden;
  d.hyper_spec.output_dim = d.base_spec.modulation_dim();
  d.hyper_spec.time_embed_dim = time_embed_dim;

  init_mlp_params(d.base_spec, d.params, "base.", rng);
  init_mlp_params(d.latent_spec, d.params, "latent.", rng);
  // Zero output layer: training starts exactly at the vanilla model.
  init_mlp_params(d.hyper_spec, d.params, "hyper.", rng,
                  /*zero_output_layer=*/true);
  return d;
}

Mat with_time_embedding(const Mat& x, const std::vector<int>& ts, int T,
                        int embed_dim) {
  if (static_cast<std::size_t>(x.cols()) != ts.size()) {
    throw DimensionMismatch("with_time_embedding: ts count != batch width");
  }
  Mat out(x.rows() + embed_dim, x.cols());
  out.topRows(x.rows()) = x;
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    out.col(c).tail(embed_dim) = time_embedding(ts[c], T, embed_dim);
  }
  return out;
}

Modulation modulation_from_raw(const MlpSpec& base_spec, const Mat& raw) {
  if (raw.rows() != base_spec.modulation_dim()) {
    throw DimensionMismatch("modulation_from_raw: row count mismatch");
  }
  Modulation mod;
  int offset = 0;
  for (int h : base_spec.hidden) {
    mod.scale.push_back(raw.middleRows(offset, h));
    mod.shift.push_back(raw.middleRows(offset + h, h));
    offset += 2 * h;
  }
  return mod;
}

Mat raw_from_modulation(const MlpSpec& base_spec, const Modulation& mod) {
  const Eigen::Index cols = mod.scale.empty() ? 0 : mod.scale[0].cols();
  Mat raw(base_spec.modulation_dim(), cols);
  int offset = 0;
  for (std::size_t l = 0; l < base_spec.hidden.size(); ++l) {
    const int h = base_spec.hidden[l];
    raw.middleRows(offset, h) = mod.scale[l];
    raw.middleRows(offset + h, h) = mod.shift[l];
    offset += 2 * h;
  }
  return raw;
}

Vec predict_eps_vanilla(const VanillaDenoiser& d, const Vec& x_t, int t) {
  return predict_eps_vanilla_batch(d, x_t, {t}, nullptr).col(0);
}

Mat predict_eps_vanilla_batch(const VanillaDenoiser& d, const Mat& x_t,
                              const std::vector<int>& ts, MlpTape* tape) {
  const Mat input = with_time_embedding(x_t, ts, d.T, d.spec.time_embed_dim);
  return mlp_forward(d.spec, d.params, "base.", input, nullptr, tape);
}

Vec sample_latent(const SmdDenoiser& d, const Vec& eta, const Vec& x_t, int t) {
  if (eta.size() != d.latent_dim) {
    throw DimensionMismatch("sample_latent: eta dim != latent_dim");
  }
  Mat stacked(d.latent_dim + x_t.size(), 1);
  stacked.col(0) << eta, x_t;
  const Mat input =
      with_time_embedding(stacked, {t}, d.T, d.latent_spec.time_embed_dim);
  return mlp_forward(d.latent_spec, d.params, "latent.", input, nullptr, nullptr)
      .col(0);
}

Vec predict_eps_smd(const SmdDenoiser& d, const Vec& x_t, int t, const Vec& eta) {
  return predict_eps_smd_batch(d, x_t, {t}, eta, nullptr).col(0);
}

Mat predict_eps_smd_batch(const SmdDenoiser& d, const Mat& x_t,
                          const std::vector<int>& ts, const Mat& eta,
                          SmdTapes* tapes) {
  if (eta.rows() != d.latent_dim || eta.cols() != x_t.cols()) {
    throw DimensionMismatch("predict_eps_smd_batch: eta shape mismatch");
  }
  const int embed = d.base_spec.time_embed_dim;

  Mat latent_stack(d.latent_dim + x_t.rows(), x_t.cols());
  latent_stack.topRows(d.latent_dim) = eta;
  latent_stack.bottomRows(x_t.rows()) = x_t;
  const Mat latent_in = with_time_embedding(latent_stack, ts, d.T, embed);
  const Mat z = mlp_forward(d.latent_spec, d.params, "latent.", latent_in,
                            nullptr, tapes ? &tapes->latent : nullptr);

  const Mat hyper_in = with_time_embedding(z, ts, d.T, embed);
  const Mat raw = mlp_forward(d.hyper_spec, d.params, "hyper.", hyper_in,
                              nullptr, tapes ? &tapes->hyper : nullptr);
  const Modulation mod = modulation_from_raw(d.base_spec, raw);

  const Mat base_in = with_time_embedding(x_t, ts, d.T, embed);
  return mlp_forward(d.base_spec, d.params, "base.", base_in, &mod,
                     tapes ? &tapes->base : nullptr);
}

void smd_backward(SmdDenoiser& d, const SmdTapes& tapes, const Mat& output_grad) {
  const MlpBackwardResult base_back =
      mlp_backward(d.base_spec, d.params, "base.", tapes.base, output_grad);
  const Mat raw_grad = raw_from_modulation(d.base_spec, base_back.mod_grad);
  const MlpBackwardResult hyper_back =
      mlp_backward(d.hyper_spec, d.params, "hyper.", tapes.hyper, raw_grad);
  // Only the z rows of the hypernetwork input feed back into g_xi; the
  // time-embedding rows are constants.
  const Mat z_grad = hyper_back.input_grad.topRows(d.latent_dim);
  mlp_backward(d.latent_spec, d.params, "latent.", tapes.latent, z_grad);
}

Vec mean_from_eps(const Vec& x_t, int t, const Vec& eps_hat,
                  const NoiseSchedule& s) {
  return mean_from_eps_batch(x_t, t, eps_hat, s).col(0);
}

Mat mean_from_eps_batch(const Mat& x_t, int t, const Mat& eps_hat,
                        const NoiseSchedule& s) {
  s.check_step(t);
  if (x_t.rows() != eps_hat.rows() || x_t.cols() != eps_hat.cols()) {
    throw DimensionMismatch("mean_from_eps: shape mismatch");
  }
  const double coef = s.beta[t] / std::sqrt(1.0 - s.alpha_bar[t]);
  return (x_t - coef * eps_hat) / std::sqrt(s.alpha[t]);
}

}  // namespace smd
