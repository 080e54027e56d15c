#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace graphmerge {

// Seeded generator threaded explicitly through every random decision.
// Conversions to doubles and bounded integers are done here rather than via
// <random> distributions, whose output is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform in [0, n); n must be > 0.
  std::size_t below(std::size_t n);
  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// Mixes a base seed with a stream id (splitmix64 finalizer) so that
// independent consumers of one user seed get decorrelated streams.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace graphmerge
