#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace arac {

// Deterministic RNG wrapper. All stochastic code in the project draws through
// this type so that a run is reproducible from a single seed. Derived streams
// (per purpose, per generation, per agent) come from seed_seq over fixed tags,
// which keeps results independent of thread scheduling when evaluation is
// parallelized.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  static Rng derive(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
    std::vector<std::uint32_t> material;
    material.push_back(static_cast<std::uint32_t>(seed));
    material.push_back(static_cast<std::uint32_t>(seed >> 32));
    for (std::uint64_t t : tags) {
      material.push_back(static_cast<std::uint32_t>(t));
      material.push_back(static_cast<std::uint32_t>(t >> 32));
    }
    std::seed_seq seq(material.begin(), material.end());
    Rng out(0);
    out.gen_.seed(seq);
    return out;
  }

  double normal() { return normal_(gen_); }

  // Uniform in [0, 1).
  double uniform() { return uniform_(gen_); }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Pre: n > 0.
  std::size_t uniform_index(std::size_t n) {
    std::uniform_int_distribution<std::size_t> d(0, n - 1);
    return d(gen_);
  }

  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace arac
