#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace decra {

// Stream tags used to derive independent RNG streams from one master seed.
// Keeping streams separate means disabling one component (e.g. augmentation)
// leaves every other component's draws untouched.
enum class Stream : std::uint64_t {
  init = 1,
  reg_mask = 2,
  aug_mask = 3,
  dropout = 4,
  shuffle = 5,
  subset = 6,
  synth = 7,
  sample = 8,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base,
                                 std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = splitmix64(base);
  for (std::uint64_t p : parts) h = splitmix64(h ^ p);
  return h;
}

inline std::uint64_t derive_seed(std::uint64_t base, Stream s,
                                 std::initializer_list<std::uint64_t> parts = {}) {
  std::uint64_t h = splitmix64(splitmix64(base) ^ static_cast<std::uint64_t>(s));
  for (std::uint64_t p : parts) h = splitmix64(h ^ p);
  return h;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(gen_); }

  bool bernoulli(double p) { return uniform() < p; }

  // Uniform integer in [0, n).
  std::size_t uniform_int(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(gen_);
  }

  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(gen_);
  }

  // Zero-mean normal rejected outside +/- clip standard deviations.
  double trunc_normal(double stddev, double clip = 2.0) {
    for (;;) {
      double z = normal();
      if (z >= -clip && z <= clip) return z * stddev;
    }
  }

  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
};

}  // namespace decra
