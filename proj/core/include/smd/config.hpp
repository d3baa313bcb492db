#pragma once

#include <string>
#include <vector>

#include "smd/metrics.hpp"
#include "smd/sampling.hpp"
#include "smd/training.hpp"

namespace smd {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct ScheduleConfig {
  int T = 100;
  double beta_min = 1e-3;
  double beta_max = 0.06;
  SigmaMode sigma_mode = SigmaMode::Beta;
};

struct DataConfig {
  std::string kind = "grid";  // grid | custom
  // grid
  int grid_size = 7;
  double spacing = 2.0;
  double component_std = 0.1;
  // custom
  std::vector<double> weights;
  std::vector<std::vector<double>> means;
  std::vector<std::vector<std::vector<double>>> covs;
};

struct ModelConfig {
  std::string kind = "vanilla";  // vanilla | smd
  std::vector<int> hidden = {128, 128, 128};
  int latent_dim = 8;
  int time_embed_dim = 16;
  std::vector<int> latent_hidden = {64};
  std::vector<int> hyper_hidden = {64};
};

struct SampleConfig {
  int n = 4096;
  bool keep_trajectory = false;
  std::uint64_t seed = 7;
  int T_used = 0;  // 0 = full schedule
  NoiseRule noise_rule = NoiseRule::SqrtSigma;
};

struct MetricsConfig {
  int n_outer = 256;
  int n_inner = 256;
};

struct TheoremSection {
  std::vector<double> lambda_values = {1.0, 2.0, 4.0, 8.0};
  std::vector<double> delta = {1.0, 1.0};
  std::vector<std::vector<double>> base_means = {{1.0}, {-1.0}};
  std::vector<double> weights = {0.5, 0.5};
  int t = 1;
};

/// One self-describing document per experiment. Unknown keys are rejected
/// with their full dotted path; `--set a.b=v` overrides apply to the JSON
/// before validation.
struct ExperimentConfig {
  ScheduleConfig schedule;
  DataConfig data;
  ModelConfig model;
  TrainConfig train;
  SampleConfig sample;
  MetricsConfig metrics;
  TheoremSection theorem;

  static ExperimentConfig from_json_text(const std::string& text,
                                         const std::vector<std::string>& overrides = {});
  static ExperimentConfig load_file(const std::string& path,
                                    const std::vector<std::string>& overrides = {});
  static ExperimentConfig defaults(const std::vector<std::string>& overrides = {});

  std::string to_json_text() const;
};

NoiseSchedule build_schedule(const ExperimentConfig& cfg);
GaussianMixture build_data(const ExperimentConfig& cfg);
SampleRun build_sample_run(const ExperimentConfig& cfg);
Theorem1Config build_theorem_config(const ExperimentConfig& cfg);
VanillaDenoiser build_vanilla_model(const ExperimentConfig& cfg, int data_dim);
SmdDenoiser build_smd_model(const ExperimentConfig& cfg, int data_dim);

}  // namespace smd
