#pragma once

#include <cmath>
#include <cstdint>

namespace propguard {

// Counter-based PRNG built on the SplitMix64 finalizer: the state walks a
// fixed-stride counter and every output is a bijective hash of it, so a
// stream is fully determined by its seed and draw index. Independent
// streams for agents, rounds, rollouts etc. are derived by re-keying with
// derive_seed rather than by sharing one sequence, which keeps replay and
// parallel evaluation reproducible.

constexpr uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ull;

constexpr uint64_t mix64(uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ull;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBull;
  z ^= z >> 31;
  return z;
}

constexpr uint64_t derive_seed(uint64_t base, uint64_t salt) {
  return mix64(base + kGoldenGamma * (salt + 0x9E2Dull));
}

class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  // Child stream keyed off the current state; does not advance the parent.
  Rng split(uint64_t salt) const { return Rng(derive_seed(state_, salt)); }

  uint64_t next_u64() {
    state_ += kGoldenGamma;
    return mix64(state_);
  }

  // Uniform double in [0, 1), 53 mantissa bits.
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n). n must be > 0.
  uint32_t next_below(uint32_t n) {
    return static_cast<uint32_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  bool bernoulli(double p) { return next_unit() < p; }

  // Box-Muller; always consumes exactly two draws.
  double next_gaussian(double mean = 0.0, double stddev = 1.0) {
    double u1 = 1.0 - next_unit();  // (0, 1]
    double u2 = next_unit();
    double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(6.283185307179586476925287 * u2);
  }

 private:
  uint64_t state_;
};

// Per-node stream used by the simulator: the same (seed, agent, round)
// always yields the same sequence, which is what makes replay exact.
inline Rng node_stream(uint64_t episode_seed, int agent, int round) {
  uint64_t k = derive_seed(episode_seed, 0x6E6F6465ull);  // node-stream domain
  k = derive_seed(k, static_cast<uint64_t>(agent));
  k = derive_seed(k, static_cast<uint64_t>(round));
  return Rng(k);
}

}  // namespace propguard
