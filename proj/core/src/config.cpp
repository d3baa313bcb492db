#include "smd/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace smd {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& why) {
  throw ConfigError("config: " + path + ": " + why);
}

void require_object(const json& j, const std::string& path) {
  if (!j.is_object()) fail(path, "expected an object");
}

/// Tracks which keys a section handler consumed; leftovers are errors.
class KeyGuard {
 public:
  KeyGuard(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    require_object(j_, path_);
  }
  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  const json& get(const std::string& key) { return j_.at(key); }
  std::string path(const std::string& key) const { return path_ + "." + key; }
  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.count(key)) fail(path_, "unknown key '" + key + "'");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename T>
T read_as(const json& j, const std::string& path) {
  try {
    return j.get<T>();
  } catch (const json::exception& e) {
    fail(path, std::string("bad value (") + e.what() + ")");
  }
}

template <typename T>
void read_field(KeyGuard& g, const std::string& key, T& out) {
  if (g.has(key)) out = read_as<T>(g.get(key), g.path(key));
}

void parse_schedule(const json& j, ScheduleConfig& out) {
  KeyGuard g(j, "schedule");
  read_field(g, "T", out.T);
  read_field(g, "beta_min", out.beta_min);
  read_field(g, "beta_max", out.beta_max);
  if (g.has("sigma_mode")) {
    out.sigma_mode = sigma_mode_from_string(
        read_as<std::string>(g.get("sigma_mode"), g.path("sigma_mode")));
  }
  g.finish();
}

void parse_data(const json& j, DataConfig& out) {
  KeyGuard g(j, "data");
  read_field(g, "kind", out.kind);
  read_field(g, "grid_size", out.grid_size);
  read_field(g, "spacing", out.spacing);
  read_field(g, "component_std", out.component_std);
  read_field(g, "weights", out.weights);
  read_field(g, "means", out.means);
  read_field(g, "covs", out.covs);
  if (out.kind != "grid" && out.kind != "custom") {
    fail("data.kind", "must be 'grid' or 'custom'");
  }
  g.finish();
}

void parse_model(const json& j, ModelConfig& out) {
  KeyGuard g(j, "model");
  read_field(g, "kind", out.kind);
  read_field(g, "hidden", out.hidden);
  read_field(g, "latent_dim", out.latent_dim);
  read_field(g, "time_embed_dim", out.time_embed_dim);
  read_field(g, "latent_hidden", out.latent_hidden);
  read_field(g, "hyper_hidden", out.hyper_hidden);
  if (out.kind != "vanilla" && out.kind != "smd") {
    fail("model.kind", "must be 'vanilla' or 'smd'");
  }
  g.finish();
}

void parse_train(const json& j, TrainConfig& out) {
  KeyGuard g(j, "train");
  read_field(g, "steps", out.steps);
  read_field(g, "batch_size", out.batch_size);
  read_field(g, "lr", out.lr);
  read_field(g, "n_eta", out.n_eta);
  if (g.has("weight_mode")) {
    out.weight_mode = weight_mode_from_string(
        read_as<std::string>(g.get("weight_mode"), g.path("weight_mode")));
  }
  read_field(g, "seed", out.seed);
  read_field(g, "eval_every", out.eval_every);
  g.finish();
}

void parse_sample(const json& j, SampleConfig& out) {
  KeyGuard g(j, "sample");
  read_field(g, "n", out.n);
  read_field(g, "keep_trajectory", out.keep_trajectory);
  read_field(g, "seed", out.seed);
  read_field(g, "T_used", out.T_used);
  if (g.has("noise_rule")) {
    out.noise_rule = noise_rule_from_string(
        read_as<std::string>(g.get("noise_rule"), g.path("noise_rule")));
  }
  g.finish();
}

void parse_metrics(const json& j, MetricsConfig& out) {
  KeyGuard g(j, "metrics");
  read_field(g, "n_outer", out.n_outer);
  read_field(g, "n_inner", out.n_inner);
  g.finish();
}

void parse_theorem(const json& j, TheoremSection& out) {
  KeyGuard g(j, "theorem");
  read_field(g, "lambda_values", out.lambda_values);
  read_field(g, "delta", out.delta);
  read_field(g, "base_means", out.base_means);
  read_field(g, "weights", out.weights);
  read_field(g, "t", out.t);
  g.finish();
}

ExperimentConfig parse_config(const json& j) {
  ExperimentConfig cfg;
  KeyGuard g(j, "config");
  if (g.has("schedule")) parse_schedule(g.get("schedule"), cfg.schedule);
  if (g.has("data")) parse_data(g.get("data"), cfg.data);
  if (g.has("model")) parse_model(g.get("model"), cfg.model);
  if (g.has("train")) parse_train(g.get("train"), cfg.train);
  if (g.has("sample")) parse_sample(g.get("sample"), cfg.sample);
  if (g.has("metrics")) parse_metrics(g.get("metrics"), cfg.metrics);
  if (g.has("theorem")) parse_theorem(g.get("theorem"), cfg.theorem);
  g.finish();
  return cfg;
}

/// Applies "a.b.c=value" onto the document; value parsed as JSON when
/// possible, else taken as a string.
void apply_override(json& doc, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("config: override '" + spec + "' is not key=value");
  }
  const std::string key = spec.substr(0, eq);
  const std::string value_text = spec.substr(eq + 1);
  json value;
  try {
    value = json::parse(value_text);
  } catch (const json::exception&) {
    value = value_text;  // plain string
  }
  json* node = &doc;
  std::istringstream parts(key);
  std::string part;
  std::vector<std::string> path;
  while (std::getline(parts, part, '.')) path.push_back(part);
  if (path.empty()) throw ConfigError("config: empty override key");
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    node = &(*node)[path[i]];
  }
  (*node)[path.back()] = value;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json_text(
    const std::string& text, const std::vector<std::string>& overrides) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON (") + e.what() + ")");
  }
  for (const auto& o : overrides) apply_override(doc, o);
  return parse_config(doc);
}

ExperimentConfig ExperimentConfig::load_file(
    const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json_text(buf.str(), overrides);
}

ExperimentConfig ExperimentConfig::defaults(const std::vector<std::string>& overrides) {
  return from_json_text("{}", overrides);
}

std::string ExperimentConfig::to_json_text() const {
  json j;
  j["schedule"] = {{"T", schedule.T},
                   {"beta_min", schedule.beta_min},
                   {"beta_max", schedule.beta_max},
                   {"sigma_mode", to_string(schedule.sigma_mode)}};
  j["data"] = {{"kind", data.kind},
               {"grid_size", data.grid_size},
               {"spacing", data.spacing},
               {"component_std", data.component_std}};
  if (data.kind == "custom") {
    j["data"]["weights"] = data.weights;
    j["data"]["means"] = data.means;
    j["data"]["covs"] = data.covs;
  }
  j["model"] = {{"kind", model.kind},
                {"hidden", model.hidden},
                {"latent_dim", model.latent_dim},
                {"time_embed_dim", model.time_embed_dim},
                {"latent_hidden", model.latent_hidden},
                {"hyper_hidden", model.hyper_hidden}};
  j["train"] = {{"steps", train.steps},
                {"batch_size", train.batch_size},
                {"lr", train.lr},
                {"n_eta", train.n_eta},
                {"weight_mode", to_string(train.weight_mode)},
                {"seed", train.seed},
                {"eval_every", train.eval_every}};
  j["sample"] = {{"n", sample.n},
                 {"keep_trajectory", sample.keep_trajectory},
                 {"seed", sample.seed},
                 {"T_used", sample.T_used},
                 {"noise_rule", to_string(sample.noise_rule)}};
  j["metrics"] = {{"n_outer", metrics.n_outer}, {"n_inner", metrics.n_inner}};
  j["theorem"] = {{"lambda_values", theorem.lambda_values},
                  {"delta", theorem.delta},
                  {"base_means", theorem.base_means},
                  {"weights", theorem.weights},
                  {"t", theorem.t}};
  return j.dump(2);
}

NoiseSchedule build_schedule(const ExperimentConfig& cfg) {
  return make_schedule(cfg.schedule.T, cfg.schedule.beta_min, cfg.schedule.beta_max,
                       cfg.schedule.sigma_mode);
}

GaussianMixture build_data(const ExperimentConfig& cfg) {
  const DataConfig& d = cfg.data;
  if (d.kind == "grid") {
    if (d.grid_size < 1) throw ConfigError("config: data.grid_size must be >= 1");
    if (!(d.component_std > 0.0)) {
      throw ConfigError("config: data.component_std must be > 0");
    }
    const int g = d.grid_size;
    const double var = d.component_std * d.component_std;
    std::vector<Gaussian> comps;
    comps.reserve(static_cast<std::size_t>(g) * g);
    const double offset = 0.5 * (g - 1);
    for (int i = 0; i < g; ++i) {
      for (int jj = 0; jj < g; ++jj) {
        Vec mean(2);
        mean << (i - offset) * d.spacing, (jj - offset) * d.spacing;
        comps.push_back(Gaussian::isotropic(mean, var));
      }
    }
    return GaussianMixture(std::vector<double>(comps.size(), 1.0 / comps.size()),
                           std::move(comps));
  }

  // custom
  if (d.weights.empty() || d.means.size() != d.weights.size()) {
    throw ConfigError("config: data.custom needs matching weights/means");
  }
  std::vector<Gaussian> comps;
  for (std::size_t k = 0; k < d.means.size(); ++k) {
    const auto& mv = d.means[k];
    Vec mean(mv.size());
    for (std::size_t i = 0; i < mv.size(); ++i) mean[i] = mv[i];
    if (!d.covs.empty()) {
      if (d.covs.size() != d.means.size()) {
        throw ConfigError("config: data.covs count mismatch");
      }
      const auto& cv = d.covs[k];
      Mat cov(mv.size(), mv.size());
      if (cv.size() != mv.size()) throw ConfigError("config: data.covs shape mismatch");
      for (std::size_t r = 0; r < cv.size(); ++r) {
        if (cv[r].size() != mv.size()) {
          throw ConfigError("config: data.covs shape mismatch");
        }
        for (std::size_t c = 0; c < cv[r].size(); ++c) cov(r, c) = cv[r][c];
      }
      comps.emplace_back(mean, cov);
    } else {
      comps.push_back(Gaussian::isotropic(mean, d.component_std * d.component_std));
    }
  }
  return GaussianMixture(d.weights, std::move(comps));
}

SampleRun build_sample_run(const ExperimentConfig& cfg) {
  SampleRun run;
  run.n = cfg.sample.n;
  run.keep_trajectory = cfg.sample.keep_trajectory;
  run.seed = cfg.sample.seed;
  run.T_used = cfg.sample.T_used;
  run.noise_rule = cfg.sample.noise_rule;
  return run;
}

Theorem1Config build_theorem_config(const ExperimentConfig& cfg) {
  Theorem1Config t;
  t.lambda_values = cfg.theorem.lambda_values;
  t.delta = cfg.theorem.delta;
  t.weights = cfg.theorem.weights;
  t.t = cfg.theorem.t;
  for (const auto& mv : cfg.theorem.base_means) {
    Vec mean(mv.size());
    for (std::size_t i = 0; i < mv.size(); ++i) mean[i] = mv[i];
    t.base_means.push_back(std::move(mean));
  }
  return t;
}

namespace {
// Distinct from any per-step fork key used by the training loop.
constexpr std::uint64_t kInitStreamKey = 0x696e69742d6b6579ull;
}

VanillaDenoiser build_vanilla_model(const ExperimentConfig& cfg, int data_dim) {
  Rng rng = Rng(cfg.train.seed).fork(kInitStreamKey);
  return make_vanilla_denoiser(data_dim, cfg.model.hidden, cfg.model.time_embed_dim,
                               cfg.schedule.T, rng);
}

SmdDenoiser build_smd_model(const ExperimentConfig& cfg, int data_dim) {
  Rng rng = Rng(cfg.train.seed).fork(kInitStreamKey);
  return make_smd_denoiser(data_dim, cfg.model.hidden, cfg.model.time_embed_dim,
                           cfg.model.latent_dim, cfg.model.latent_hidden,
                           cfg.model.hyper_hidden, cfg.schedule.T, rng);
}

}  // namespace smd
