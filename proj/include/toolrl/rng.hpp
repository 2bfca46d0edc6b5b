#pragma once

// Seeded random streams.
//
// Every stochastic decision in the harness draws from a stream derived from
// (master seed, purpose tag, indices), so results never depend on how work is
// split across threads. Sampling helpers are written against the raw 64-bit
// engine output instead of <random> distributions, whose algorithms are
// implementation-defined; golden digests stay stable across standard libraries.

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <utility>

namespace toolrl {

using Seed = std::uint64_t;

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Purpose tags for stream derivation. Values are part of the reproducibility
/// contract; never renumber.
enum class Stream : std::uint64_t {
  InitState = 1,
  OracleEpisode = 2,
  OrderSelect = 3,
  OrderPermute = 4,
  ToolResample = 5,
  TrainState = 6,
  Rollout = 7,
  EvalState = 8,
  EvalRollout = 9,
  PoolFault = 10,
  PoolLatency = 11,
  Property = 12,
  PoolBench = 13,
};

inline Seed derive_seed(Seed master, Stream tag, std::initializer_list<std::uint64_t> indices = {}) {
  std::uint64_t h = splitmix64(master ^ 0x5851f42d4c957f2dULL);
  h = splitmix64(h ^ static_cast<std::uint64_t>(tag));
  for (auto i : indices) h = splitmix64(h ^ (i + 0x632be59bd9b4e019ULL));
  return h;
}

class Rng {
 public:
  explicit Rng(Seed seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  /// Uniform integer in [0, n), rejection sampled to avoid modulo bias.
  std::size_t index(std::size_t n) {
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return static_cast<std::size_t>(x % bound);
  }

  /// Inverse-CDF draw from unnormalized non-negative weights.
  std::size_t categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double u = uniform() * total;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (weights[i] <= 0.0) continue;
      last_positive = i;
      if (u < weights[i]) return i;
      u -= weights[i];
    }
    return last_positive;
  }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[index(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace toolrl
