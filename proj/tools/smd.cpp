// Experiment driver: dataset construction, training, sampling, metric runs
// and the unbounded-error demonstration, all from one JSON config.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "smd/checks.hpp"
#include "smd/config.hpp"
#include "smd/version.hpp"

namespace fs = std::filesystem;
using namespace smd;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::string checkpoint;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_checkpoint = true) {
  cmd->add_option("--config", args.config_path, "JSON experiment config");
  cmd->add_option("--out", args.out_dir, "output directory for artifacts");
  cmd->add_option("--seed", args.seed,
                  "override train.seed (sample.seed becomes seed+1000003)");
  cmd->add_option("--set", args.overrides,
                  "dotted config override, e.g. --set train.n_eta=5")
      ->take_all();
  if (with_checkpoint) {
    cmd->add_option("--checkpoint", args.checkpoint, "checkpoint file to load");
  }
}

ExperimentConfig load_config(const CommonArgs& args) {
  ExperimentConfig cfg = args.config_path.empty()
                             ? ExperimentConfig::defaults(args.overrides)
                             : ExperimentConfig::load_file(args.config_path,
                                                           args.overrides);
  if (args.seed) {
    cfg.train.seed = *args.seed;
    cfg.sample.seed = *args.seed + 1000003ull;
  }
  return cfg;
}

void ensure_out_dir(const std::string& dir) {
  if (dir.empty()) throw std::runtime_error("--out is required for this command");
  fs::create_directories(dir);
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
}

/// Config echo + seed + version; every artifact directory gets one.
void write_config_echo(const fs::path& dir, const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["config"] = nlohmann::json::parse(cfg.to_json_text());
  j["seed"] = cfg.train.seed;
  j["version"] = kVersion;
  write_text(dir / "config.json", j.dump(2) + "\n");
}

void write_model_sidecar(const fs::path& path, const ExperimentConfig& cfg,
                         int data_dim) {
  nlohmann::json j;
  j["kind"] = cfg.model.kind;
  j["data_dim"] = data_dim;
  j["T"] = cfg.schedule.T;
  j["hidden"] = cfg.model.hidden;
  j["time_embed_dim"] = cfg.model.time_embed_dim;
  j["latent_dim"] = cfg.model.latent_dim;
  j["latent_hidden"] = cfg.model.latent_hidden;
  j["hyper_hidden"] = cfg.model.hyper_hidden;
  j["version"] = kVersion;
  write_text(path, j.dump(2) + "\n");
}

int cmd_gmm_check(const CommonArgs& args) {
  const ExperimentConfig cfg = load_config(args);
  const auto results = run_gmm_checks(cfg.train.seed);
  bool all_pass = true;
  nlohmann::json report = nlohmann::json::array();
  for (const auto& r : results) {
    all_pass = all_pass && r.pass;
    std::printf("[%s] %-24s max_err=%-12.3e tol=%-9.1e %s\n",
                r.pass ? "PASS" : "FAIL", r.name.c_str(), r.max_err, r.tol,
                r.detail.c_str());
    report.push_back({{"name", r.name},
                      {"pass", r.pass},
                      {"max_err", r.max_err},
                      {"tol", r.tol},
                      {"detail", r.detail}});
  }
  if (!args.out_dir.empty()) {
    ensure_out_dir(args.out_dir);
    write_config_echo(args.out_dir, cfg);
    write_text(fs::path(args.out_dir) / "gmm_check.json", report.dump(2) + "\n");
  }
  std::printf("%s\n", all_pass ? "all checks passed" : "CHECK FAILURES PRESENT");
  return all_pass ? 0 : 1;
}

template <typename Model>
int run_training(Model& model, const ExperimentConfig& cfg,
                 const GaussianMixture& data, const NoiseSchedule& schedule,
                 const CommonArgs& args) {
  ensure_out_dir(args.out_dir);
  const fs::path dir(args.out_dir);
  write_config_echo(dir, cfg);
  write_model_sidecar(dir / "model.json", cfg, data.dim());

  std::int64_t start_step = 0;
  if (!args.checkpoint.empty()) {
    start_step = restore_store_from_checkpoint(
        model.params, read_checkpoint_file(args.checkpoint));
    std::printf("resumed from %s at step %lld\n", args.checkpoint.c_str(),
                static_cast<long long>(start_step));
  }

  std::ofstream loss_csv(dir / "loss.csv",
                         start_step > 0 ? std::ios::app : std::ios::trunc);
  if (start_step == 0) loss_csv << "step,loss,wall_ms\n";

  const EvalHook hook = [&](const TraceRow& row) {
    loss_csv << row.step << "," << format_double(row.loss) << ","
             << format_double(row.wall_ms) << "\n";
    loss_csv.flush();
    const auto ckpt = checkpoint_from_store(model.params, row.step);
    write_checkpoint_file((dir / ("ckpt_step" + std::to_string(row.step) + ".bin")).string(),
                          ckpt);
    write_checkpoint_file((dir / "ckpt_final.bin").string(), ckpt);
    std::printf("step %-8lld loss %.6f  (%.1f ms/step)\n",
                static_cast<long long>(row.step), row.loss, row.wall_ms);
  };

  train(model, data, schedule, cfg.train, hook, start_step);
  std::printf("training done; artifacts in %s\n", dir.string().c_str());
  return 0;
}

int cmd_train(const CommonArgs& args) {
  const ExperimentConfig cfg = load_config(args);
  const GaussianMixture data = build_data(cfg);
  const NoiseSchedule schedule = build_schedule(cfg);
  if (cfg.model.kind == "smd") {
    SmdDenoiser model = build_smd_model(cfg, data.dim());
    return run_training(model, cfg, data, schedule, args);
  }
  VanillaDenoiser model = build_vanilla_model(cfg, data.dim());
  return run_training(model, cfg, data, schedule, args);
}

SampleResult run_sampling(const ExperimentConfig& cfg, const GaussianMixture& data,
                          const NoiseSchedule& schedule, const std::string& ckpt_path) {
  const SampleRun run = build_sample_run(cfg);
  if (cfg.model.kind == "smd") {
    SmdDenoiser model = build_smd_model(cfg, data.dim());
    restore_store_from_checkpoint(model.params, read_checkpoint_file(ckpt_path));
    return sample_chain(model, run, schedule);
  }
  VanillaDenoiser model = build_vanilla_model(cfg, data.dim());
  restore_store_from_checkpoint(model.params, read_checkpoint_file(ckpt_path));
  return sample_chain(model, run, schedule);
}

void write_samples_csv(const fs::path& path, const Mat& samples) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << "index";
  for (int r = 0; r < samples.rows(); ++r) out << ",dim" << r;
  out << "\n";
  for (int i = 0; i < samples.cols(); ++i) {
    out << i;
    for (int r = 0; r < samples.rows(); ++r) {
      out << "," << format_double(samples(r, i));
    }
    out << "\n";
  }
}

int cmd_sample(const CommonArgs& args) {
  if (args.checkpoint.empty()) {
    throw std::runtime_error("sample: --checkpoint is required");
  }
  const ExperimentConfig cfg = load_config(args);
  ensure_out_dir(args.out_dir);
  const fs::path dir(args.out_dir);
  write_config_echo(dir, cfg);

  const GaussianMixture data = build_data(cfg);
  const NoiseSchedule schedule = build_schedule(cfg);
  const SampleResult result = run_sampling(cfg, data, schedule, args.checkpoint);

  write_samples_csv(dir / "samples.csv", result.samples);
  if (!result.trajectory.empty()) {
    std::ofstream out(dir / "trajectory.csv", std::ios::binary | std::ios::trunc);
    out << "sample,step";
    for (int r = 0; r < result.samples.rows(); ++r) out << ",dim" << r;
    out << "\n";
    // step column: T at the initial state down to the last selected step.
    std::vector<int> step_labels;
    step_labels.push_back(schedule.T);
    for (auto it = result.step_set.rbegin(); it != result.step_set.rend(); ++it) {
      step_labels.push_back(*it - 1);
    }
    for (std::size_t si = 0; si < result.trajectory.size(); ++si) {
      const Mat& state = result.trajectory[si];
      for (int i = 0; i < state.cols(); ++i) {
        out << i << "," << step_labels[si];
        for (int r = 0; r < state.rows(); ++r) {
          out << "," << format_double(state(r, i));
        }
        out << "\n";
      }
    }
  }
  std::printf("wrote %lld samples to %s\n",
              static_cast<long long>(result.samples.cols()),
              (dir / "samples.csv").string().c_str());
  return 0;
}

int cmd_metrics(const CommonArgs& args) {
  if (args.checkpoint.empty()) {
    throw std::runtime_error("metrics: --checkpoint is required");
  }
  const ExperimentConfig cfg = load_config(args);
  ensure_out_dir(args.out_dir);
  const fs::path dir(args.out_dir);
  write_config_echo(dir, cfg);

  const GaussianMixture data = build_data(cfg);
  const NoiseSchedule schedule = build_schedule(cfg);

  std::unique_ptr<VanillaDenoiser> vanilla;
  std::unique_ptr<SmdDenoiser> smd;
  std::unique_ptr<BackwardModel> backward;
  if (cfg.model.kind == "smd") {
    smd = std::make_unique<SmdDenoiser>(build_smd_model(cfg, data.dim()));
    restore_store_from_checkpoint(smd->params, read_checkpoint_file(args.checkpoint));
    backward = std::make_unique<SmdBackward>(*smd, schedule, cfg.metrics.n_inner);
  } else {
    vanilla = std::make_unique<VanillaDenoiser>(build_vanilla_model(cfg, data.dim()));
    restore_store_from_checkpoint(vanilla->params,
                                  read_checkpoint_file(args.checkpoint));
    backward = std::make_unique<VanillaBackward>(*vanilla, schedule);
  }

  MetricReport report;
  const Rng metric_rng(cfg.train.seed ^ 0x6d65747269637321ull);
  double total = 0.0, var = 0.0;
  for (int t = 1; t <= schedule.T; ++t) {
    const McStat mt =
        local_error_mt(data, *backward, t, schedule, cfg.metrics.n_outer,
                       cfg.metrics.n_inner, metric_rng.fork(t));
    report.m_t.push_back({t, mt.value, mt.se});
    total += mt.value;
    var += mt.se * mt.se;
    std::printf("t=%-4d M_t=%.6f (se %.6f)\n", t, mt.value, mt.se);
  }
  report.e_global = {total, std::sqrt(var)};

  const SampleResult samples = run_sampling(cfg, data, schedule, args.checkpoint);
  const ModeMetrics modes = mode_metrics(samples.samples, data);
  report.mode_recall = modes.mode_recall;
  report.mean_nll = modes.mean_nll;

  report.metadata = {{"version", kVersion},
                     {"model_kind", cfg.model.kind},
                     {"sigma_mode", to_string(cfg.schedule.sigma_mode)},
                     {"noise_rule", to_string(cfg.sample.noise_rule)},
                     {"seed", std::to_string(cfg.train.seed)},
                     {"checkpoint", args.checkpoint},
                     {"infimum_surrogate",
                      "metrics evaluated at the supplied checkpoint; reported "
                      "values upper-bound the best-parameter errors"}};

  write_text(dir / "metrics.json", metric_report_to_json(report) + "\n");
  write_text(dir / "m_t.csv", metric_report_to_csv(report));
  std::printf("E = %.6f (se %.6f), mode_recall = %.3f, mean_nll = %.4f\n",
              report.e_global.value, report.e_global.se, report.mode_recall,
              report.mean_nll);
  return 0;
}

int cmd_theorem_demo(const CommonArgs& args) {
  const ExperimentConfig cfg = load_config(args);
  ensure_out_dir(args.out_dir);
  const fs::path dir(args.out_dir);
  write_config_echo(dir, cfg);

  const NoiseSchedule schedule = build_schedule(cfg);
  const Theorem1Config tcfg = build_theorem_config(cfg);
  const Theorem1Bound parts = theorem1_bound_parts(tcfg, schedule);
  const Rng rng(cfg.train.seed ^ 0x7468656f72656d31ull);

  std::ofstream csv(dir / "theorem.csv", std::ios::binary | std::ios::trunc);
  csv << "lambda,lower_bound,mc_m_t,mc_se\n";
  for (std::size_t i = 0; i < tcfg.lambda_values.size(); ++i) {
    const double lambda = tcfg.lambda_values[i];
    const double bound = parts.value(lambda);
    const GaussianMixture mix = theorem1_mixture(tcfg, lambda);
    const Theorem1BestGaussianBackward model(tcfg, schedule, lambda);
    const McStat mt = local_error_mt(mix, model, tcfg.t, schedule,
                                     cfg.metrics.n_outer, cfg.metrics.n_inner,
                                     rng.fork(i));
    csv << format_double(lambda) << "," << format_double(bound) << ","
        << format_double(mt.value) << "," << format_double(mt.se) << "\n";
    std::printf("lambda=%-6g bound=%-12.6f MC M_t=%-12.6f (se %.6f)\n", lambda,
                bound, mt.value, mt.se);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Soft-mixture denoising laboratory"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  CommonArgs gmm_args, train_args, sample_args, metrics_args, theorem_args;
  auto* gmm = app.add_subcommand("gmm-check", "run Gaussian-algebra oracle checks");
  add_common(gmm, gmm_args, false);
  auto* train_cmd = app.add_subcommand("train", "train a denoiser");
  add_common(train_cmd, train_args);
  auto* sample_cmd = app.add_subcommand("sample", "sample from a checkpoint");
  add_common(sample_cmd, sample_args);
  auto* metrics_cmd = app.add_subcommand("metrics", "denoising-error metrics");
  add_common(metrics_cmd, metrics_args);
  auto* theorem_cmd =
      app.add_subcommand("theorem-demo", "lower bound vs MC error sweep");
  add_common(theorem_cmd, theorem_args, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gmm->parsed()) return cmd_gmm_check(gmm_args);
    if (train_cmd->parsed()) return cmd_train(train_args);
    if (sample_cmd->parsed()) return cmd_sample(sample_args);
    if (metrics_cmd->parsed()) return cmd_metrics(metrics_args);
    if (theorem_cmd->parsed()) return cmd_theorem_demo(theorem_args);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
