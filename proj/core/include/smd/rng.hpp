#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace smd {

/// Deterministic random stream (xoshiro256++ with splitmix64 seeding).
///
/// The standard library distributions are implementation-defined, so every
/// draw here is hand-rolled to keep runs reproducible across compilers.
/// Streams are value types: copy freely, never share one stream across
/// concurrent tasks. `fork(key)` derives an independent child stream as a
/// pure function of (parent seed, key) without consuming parent state, which
/// is what makes per-step / per-chain substreams replayable.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed) {
    std::uint64_t sm = seed;
    for (auto& word : state_) word = splitmix64(sm);
  }

  std::uint64_t seed() const { return seed_; }

  /// Child stream addressed by `key`; does not advance this stream.
  Rng fork(std::uint64_t key) const {
    std::uint64_t sm = seed_ ^ (0x9e3779b97f4a7c15ull + splitmix_of(key));
    return Rng(splitmix64(sm));
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform on the open interval (0,1).
  double uniform01() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Uniform integer in [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    if (lo > hi) throw std::invalid_argument("uniform_int: empty range");
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    // Rejection sampling to stay unbiased.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    std::uint64_t u;
    do {
      u = next_u64();
    } while (u >= limit);
    return lo + static_cast<std::int64_t>(u % span);
  }

  /// Standard normal draw via Box-Muller (one value per uniform pair, no
  /// cached spare, so the stream state is just the generator state).
  double normal() {
    const double u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  /// Index draw from unnormalized nonnegative weights.
  std::size_t categorical(std::span<const double> weights) {
    if (weights.empty()) throw std::invalid_argument("categorical: no weights");
    double total = 0.0;
    for (double w : weights) total += w;
    double u = uniform01() * total;
    for (std::size_t k = 0; k + 1 < weights.size(); ++k) {
      u -= weights[k];
      if (u <= 0.0) return k;
    }
    return weights.size() - 1;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  static std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }
  static std::uint64_t splitmix_of(std::uint64_t x) { return splitmix64(x); }

  std::uint64_t seed_;
  std::uint64_t state_[4];
};

}  // namespace smd
