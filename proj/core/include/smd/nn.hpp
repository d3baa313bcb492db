#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "smd/gaussian.hpp"

namespace smd {

/// Named parameter tensors with parallel gradient and optimizer-moment
/// slots. Iteration order is insertion order, which fixes the (sequential)
/// reduction order everywhere and keeps runs reproducible.
class ParamStore {
 public:
  struct Param {
    std::string name;
    int rank = 2;  // 1 for vectors, 2 for matrices
    Mat value;     // vectors stored as n x 1
    Mat grad;
    Mat m;  // first adaptive moment
    Mat v;  // second adaptive moment
  };

  Mat& add(const std::string& name, int rows, int cols, int rank = 2);
  bool has(const std::string& name) const { return index_.count(name) > 0; }
  const Mat& value(const std::string& name) const { return at(name).value; }
  Mat& value(const std::string& name) { return at(name).value; }
  const Mat& grad(const std::string& name) const { return at(name).grad; }
  Mat& grad(const std::string& name) { return at(name).grad; }

  const std::vector<Param>& params() const { return params_; }
  std::vector<Param>& params() { return params_; }

  void zero_grads();
  std::size_t total_size() const;

  /// Bumped on every optimizer update; tapes record it to detect staleness.
  std::uint64_t version() const { return version_; }
  void bump_version() { ++version_; }

  const Param& at(const std::string& name) const;
  Param& at(const std::string& name);

 private:
  std::vector<Param> params_;
  std::unordered_map<std::string, std::size_t> index_;
  std::uint64_t version_ = 0;
};

/// Dense SiLU network: hidden layers are affine + SiLU (optionally FiLM
/// modulated), the output layer is affine.
struct MlpSpec {
  int input_dim = 0;
  std::vector<int> hidden;
  int output_dim = 0;
  int time_embed_dim = 0;  // carried for denoiser input assembly

  void validate() const;
  /// Rows of a stacked per-unit (scale, shift) modulation vector.
  int modulation_dim() const;
};

/// Per-hidden-layer FiLM tensors; scale/shift are width x batch.
struct Modulation {
  std::vector<Mat> scale;
  std::vector<Mat> shift;
};

/// Activations cached by a forward pass, consumed by the matching backward.
struct MlpTape {
  std::uint64_t params_version = 0;
  bool modulated = false;
  Mat input;                   // input_dim x batch
  std::vector<Mat> pre;        // affine outputs per hidden layer
  std::vector<Mat> act;       // SiLU outputs (pre-modulation)
  std::vector<Mat> post;       // layer outputs fed forward
  std::vector<Mat> mod_scale;  // copies of the applied modulation
};

/// Registers (He-initialized) weights "w0","b0",... under `prefix`.
/// `zero_output_layer` zeroes the final affine layer.
void init_mlp_params(const MlpSpec& spec, ParamStore& store,
                     const std::string& prefix, Rng& rng,
                     bool zero_output_layer = false);

/// Batched forward; columns are examples. `mod`, when present, must carry
/// one (scale, shift) pair per hidden layer with matching batch width.
Mat mlp_forward(const MlpSpec& spec, const ParamStore& store,
                const std::string& prefix, const Mat& input,
                const Modulation* mod, MlpTape* tape);

struct MlpBackwardResult {
  Mat input_grad;
  Modulation mod_grad;  // filled only when the forward was modulated
};

/// Accumulates exact reverse-mode gradients of sum(output .* output_grad)
/// into `store` and returns the input (and modulation) gradients.
MlpBackwardResult mlp_backward(const MlpSpec& spec, ParamStore& store,
                               const std::string& prefix, const MlpTape& tape,
                               const Mat& output_grad);

/// Bias-corrected adaptive-moment update; step_index starts at 1.
void adam_step(ParamStore& store, double lr, double beta1, double beta2,
               double eps, std::int64_t step_index);

/// Sinusoidal features of t/T at geometrically spaced frequencies.
Vec time_embedding(int t, int T, int dim);

// --- Checkpoint persistence -------------------------------------------------
// Binary layout: magic "SMD1", version u32, then per entry:
// name length (u32), name bytes, rank (u32), dims (u32 each),
// little-endian f64 payload (row-major). Round-trips are bit-exact.

struct Checkpoint {
  struct Entry {
    int rank = 1;
    std::vector<std::uint32_t> dims;
    std::vector<double> data;
  };
  std::unordered_map<std::string, Entry> entries;
  std::vector<std::string> order;

  void put(const std::string& name, const Mat& value, int rank);
  const Entry& get(const std::string& name) const;
};

void write_checkpoint_file(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint_file(const std::string& path);

/// Snapshot of params + optimizer moments + step counter.
Checkpoint checkpoint_from_store(const ParamStore& store, std::int64_t step);
/// Restores values and moments into a store with identical layout; returns
/// the stored step counter.
std::int64_t restore_store_from_checkpoint(ParamStore& store, const Checkpoint& ckpt);

}  // namespace smd
