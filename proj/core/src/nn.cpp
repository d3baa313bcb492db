#include "smd/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace smd {

namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double silu(double x) { return x * sigmoid(x); }

double silu_deriv(double x) {
  const double s = sigmoid(x);
  return s * (1.0 + x * (1.0 - s));
}

std::string weight_name(const std::string& prefix, std::size_t layer) {
  return prefix + "w" + std::to_string(layer);
}
std::string bias_name(const std::string& prefix, std::size_t layer) {
  return prefix + "b" + std::to_string(layer);
}

}  // namespace

Mat& ParamStore::add(const std::string& name, int rows, int cols, int rank) {
  if (index_.count(name)) {
    throw std::invalid_argument("ParamStore: duplicate name '" + name + "'");
  }
  Param p;
  p.name = name;
  p.rank = rank;
  p.value = Mat::Zero(rows, cols);
  p.grad = Mat::Zero(rows, cols);
  p.m = Mat::Zero(rows, cols);
  p.v = Mat::Zero(rows, cols);
  index_[name] = params_.size();
  params_.push_back(std::move(p));
  return params_.back().value;
}

const ParamStore::Param& ParamStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) {
    throw std::out_of_range("ParamStore: unknown name '" + name + "'");
  }
  return params_[it->second];
}

ParamStore::Param& ParamStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) {
    throw std::out_of_range("ParamStore: unknown name '" + name + "'");
  }
  return params_[it->second];
}

void ParamStore::zero_grads() {
  for (auto& p : params_) p.grad.setZero();
}

std::size_t ParamStore::total_size() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void MlpSpec::validate() const {
  if (input_dim < 1 || output_dim < 1) {
    throw std::invalid_argument("MlpSpec: dims must be >= 1");
  }
  for (int h : hidden) {
    if (h < 1) throw std::invalid_argument("MlpSpec: hidden widths must be >= 1");
  }
}

int MlpSpec::modulation_dim() const {
  int n = 0;
  for (int h : hidden) n += 2 * h;
  return n;
}

void init_mlp_params(const MlpSpec& spec, ParamStore& store,
                     const std::string& prefix, Rng& rng,
                     bool zero_output_layer) {
  spec.validate();
  int fan_in = spec.input_dim;
  const std::size_t n_layers = spec.hidden.size() + 1;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const int fan_out =
        (l < spec.hidden.size()) ? spec.hidden[l] : spec.output_dim;
    Mat& w = store.add(weight_name(prefix, l), fan_out, fan_in, 2);
    store.add(bias_name(prefix, l), fan_out, 1, 1);
    const bool zero = zero_output_layer && l == n_layers - 1;
    if (!zero) {
      const double scale = std::sqrt(2.0 / fan_in);
      for (int i = 0; i < w.rows(); ++i) {
        for (int j = 0; j < w.cols(); ++j) w(i, j) = scale * rng.normal();
      }
    }
    fan_in = fan_out;
  }
}

Mat mlp_forward(const MlpSpec& spec, const ParamStore& store,
                const std::string& prefix, const Mat& input,
                const Modulation* mod, MlpTape* tape) {
  if (input.rows() != spec.input_dim) {
    throw DimensionMismatch("mlp_forward: input rows " +
                            std::to_string(input.rows()) + " != spec input_dim " +
                            std::to_string(spec.input_dim));
  }
  const std::size_t n_hidden = spec.hidden.size();
  if (mod) {
    if (mod->scale.size() != n_hidden || mod->shift.size() != n_hidden) {
      throw DimensionMismatch("mlp_forward: modulation layer count mismatch");
    }
    for (std::size_t l = 0; l < n_hidden; ++l) {
      if (mod->scale[l].rows() != spec.hidden[l] ||
          mod->shift[l].rows() != spec.hidden[l] ||
          mod->scale[l].cols() != input.cols() ||
          mod->shift[l].cols() != input.cols()) {
        throw DimensionMismatch("mlp_forward: modulation shape mismatch at layer " +
                                std::to_string(l));
      }
    }
  }

  if (tape) {
    tape->params_version = store.version();
    tape->modulated = mod != nullptr;
    tape->input = input;
    tape->pre.clear();
    tape->act.clear();
    tape->post.clear();
    tape->mod_scale.clear();
  }

  Mat x = input;
  for (std::size_t l = 0; l < n_hidden; ++l) {
    Mat pre = (store.value(weight_name(prefix, l)) * x).colwise() +
              Eigen::VectorXd(store.value(bias_name(prefix, l)).col(0));
    Mat act = pre.unaryExpr([](double v) { return silu(v); });
    Mat post;
    if (mod) {
      post = act.cwiseProduct(Mat::Ones(act.rows(), act.cols()) + mod->scale[l]) +
             mod->shift[l];
    } else {
      post = act;
    }
    if (tape) {
      tape->pre.push_back(std::move(pre));
      tape->act.push_back(act);
      if (mod) tape->mod_scale.push_back(mod->scale[l]);
      tape->post.push_back(post);
    }
    x = std::move(post);
  }
  const std::size_t out_l = n_hidden;
  return (store.value(weight_name(prefix, out_l)) * x).colwise() +
         Eigen::VectorXd(store.value(bias_name(prefix, out_l)).col(0));
}

MlpBackwardResult mlp_backward(const MlpSpec& spec, ParamStore& store,
                               const std::string& prefix, const MlpTape& tape,
                               const Mat& output_grad) {
  if (tape.params_version != store.version()) {
    throw std::logic_error("mlp_backward: tape is stale (params changed since forward)");
  }
  const std::size_t n_hidden = spec.hidden.size();
  if (output_grad.rows() != spec.output_dim ||
      output_grad.cols() != tape.input.cols()) {
    throw DimensionMismatch("mlp_backward: output_grad shape mismatch");
  }

  MlpBackwardResult result;
  if (tape.modulated) {
    result.mod_grad.scale.resize(n_hidden);
    result.mod_grad.shift.resize(n_hidden);
  }

  const std::size_t out_l = n_hidden;
  const Mat& out_in = n_hidden == 0 ? tape.input : tape.post[n_hidden - 1];
  store.grad(weight_name(prefix, out_l)) += output_grad * out_in.transpose();
  store.grad(bias_name(prefix, out_l)).col(0) += output_grad.rowwise().sum();
  Mat g = store.value(weight_name(prefix, out_l)).transpose() * output_grad;

  for (std::size_t li = n_hidden; li-- > 0;) {
    Mat dact;
    if (tape.modulated) {
      result.mod_grad.scale[li] = g.cwiseProduct(tape.act[li]);
      result.mod_grad.shift[li] = g;
      dact = g.cwiseProduct(Mat::Ones(g.rows(), g.cols()) + tape.mod_scale[li]);
    } else {
      dact = std::move(g);
    }
    const Mat dpre =
        dact.cwiseProduct(tape.pre[li].unaryExpr([](double v) { return silu_deriv(v); }));
    const Mat& layer_in = li == 0 ? tape.input : tape.post[li - 1];
    store.grad(weight_name(prefix, li)) += dpre * layer_in.transpose();
    store.grad(bias_name(prefix, li)).col(0) += dpre.rowwise().sum();
    g = store.value(weight_name(prefix, li)).transpose() * dpre;
  }
  result.input_grad = std::move(g);
  return result;
}

void adam_step(ParamStore& store, double lr, double beta1, double beta2,
               double eps, std::int64_t step_index) {
  if (step_index < 1) throw std::invalid_argument("adam_step: step_index >= 1");
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_index));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_index));
  for (auto& p : store.params()) {
    p.m = beta1 * p.m + (1.0 - beta1) * p.grad;
    p.v = beta2 * p.v + (1.0 - beta2) * p.grad.cwiseProduct(p.grad);
    const Mat m_hat = p.m / bc1;
    const Mat v_hat = p.v / bc2;
    p.value -= lr * m_hat.cwiseQuotient(v_hat.cwiseSqrt() +
                                        Mat::Constant(p.v.rows(), p.v.cols(), eps));
  }
  store.bump_version();
}

Vec time_embedding(int t, int T, int dim) {
  if (dim < 2 || dim % 2 != 0) {
    throw std::invalid_argument("time_embedding: dim must be even and >= 2");
  }
  if (T < 1) throw std::invalid_argument("time_embedding: T must be >= 1");
  const int half = dim / 2;
  const double tau = static_cast<double>(t) / T;
  Vec emb(dim);
  for (int j = 0; j < half; ++j) {
    const double expo = half > 1 ? static_cast<double>(j) / (half - 1) : 0.0;
    const double freq = std::pow(1000.0, expo);
    emb[j] = std::sin(freq * tau);
    emb[half + j] = std::cos(freq * tau);
  }
  return emb;
}

void Checkpoint::put(const std::string& name, const Mat& value, int rank) {
  Entry e;
  e.rank = rank;
  if (rank == 1) {
    e.dims = {static_cast<std::uint32_t>(value.size())};
  } else {
    e.dims = {static_cast<std::uint32_t>(value.rows()),
              static_cast<std::uint32_t>(value.cols())};
  }
  e.data.reserve(static_cast<std::size_t>(value.size()));
  for (int r = 0; r < value.rows(); ++r) {
    for (int c = 0; c < value.cols(); ++c) e.data.push_back(value(r, c));
  }
  if (!entries.count(name)) order.push_back(name);
  entries[name] = std::move(e);
}

const Checkpoint::Entry& Checkpoint::get(const std::string& name) const {
  auto it = entries.find(name);
  if (it == entries.end()) {
    throw std::out_of_range("Checkpoint: missing entry '" + name + "'");
  }
  return it->second;
}

namespace {

void write_u32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::ifstream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw std::runtime_error("checkpoint: truncated u32");
  return v;
}

}  // namespace

void write_checkpoint_file(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot open '" + path + "' for write");
  out.write("SMD1", 4);
  write_u32(out, 1u);
  for (const auto& name : ckpt.order) {
    const auto& e = ckpt.entries.at(name);
    write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(out, static_cast<std::uint32_t>(e.rank));
    for (auto d : e.dims) write_u32(out, d);
    out.write(reinterpret_cast<const char*>(e.data.data()),
              static_cast<std::streamsize>(e.data.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

Checkpoint read_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "SMD1", 4) != 0) {
    throw std::runtime_error("checkpoint: bad magic in '" + path + "'");
  }
  const std::uint32_t version = read_u32(in);
  if (version != 1u) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint ckpt;
  while (true) {
    std::uint32_t name_len = 0;
    in.read(reinterpret_cast<char*>(&name_len), sizeof(name_len));
    if (in.eof()) break;
    if (!in) throw std::runtime_error("checkpoint: truncated entry header");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    Checkpoint::Entry e;
    e.rank = static_cast<int>(read_u32(in));
    std::size_t count = 1;
    e.dims.resize(static_cast<std::size_t>(e.rank));
    for (auto& d : e.dims) {
      d = read_u32(in);
      count *= d;
    }
    e.data.resize(count);
    in.read(reinterpret_cast<char*>(e.data.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) throw std::runtime_error("checkpoint: truncated payload for '" + name + "'");
    if (!ckpt.entries.count(name)) ckpt.order.push_back(name);
    ckpt.entries[name] = std::move(e);
  }
  return ckpt;
}

Checkpoint checkpoint_from_store(const ParamStore& store, std::int64_t step) {
  Checkpoint ckpt;
  for (const auto& p : store.params()) {
    ckpt.put(p.name, p.value, p.rank);
    ckpt.put("adam.m/" + p.name, p.m, p.rank);
    ckpt.put("adam.v/" + p.name, p.v, p.rank);
  }
  Mat step_mat(1, 1);
  step_mat(0, 0) = static_cast<double>(step);
  ckpt.put("adam.step", step_mat, 1);
  return ckpt;
}

namespace {

void fill_from_entry(Mat& dst, const Checkpoint::Entry& e, const std::string& name) {
  if (static_cast<std::size_t>(dst.size()) != e.data.size()) {
    throw std::runtime_error("checkpoint: size mismatch for '" + name + "'");
  }
  std::size_t i = 0;
  for (int r = 0; r < dst.rows(); ++r) {
    for (int c = 0; c < dst.cols(); ++c) dst(r, c) = e.data[i++];
  }
}

}  // namespace

std::int64_t restore_store_from_checkpoint(ParamStore& store, const Checkpoint& ckpt) {
  for (auto& p : store.params()) {
    fill_from_entry(p.value, ckpt.get(p.name), p.name);
    fill_from_entry(p.m, ckpt.get("adam.m/" + p.name), p.name);
    fill_from_entry(p.v, ckpt.get("adam.v/" + p.name), p.name);
  }
  store.bump_version();
  return static_cast<std::int64_t>(ckpt.get("adam.step").data.at(0));
}

}  // namespace smd
