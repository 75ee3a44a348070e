#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "sqkd/errors.hpp"

namespace sqkd {

/**
 * Deterministic random stream.
 *
 * All randomness in the library flows through this class so that runs are
 * reproducible bit-for-bit across platforms:
 *  - the generator is std::mt19937_64, whose output sequence is fixed by the
 *    standard for a given seed;
 *  - doubles and bounded integers are derived from raw 64-bit draws by hand
 *    (std::uniform_*_distribution is implementation-defined and never used).
 *
 * Independent streams are derived from a (master seed, stream index) pair via
 * SplitMix64 mixing, so trial k of a run is reproducible in isolation and
 * unaffected by how trials are scheduled across worker threads.
 */
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(mix64(seed ^ 0x6a09e667f3bcc908ull)) {}

  static Rng for_stream(std::uint64_t master_seed, std::uint64_t stream_index) {
    std::uint64_t s = master_seed + 0x9e3779b97f4a7c15ull * (stream_index + 1);
    return Rng(mix64(s));
  }

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1), 53 significant bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform() < p; }

  // Uniform integer in [0, n). Modulo rejection keeps it exactly uniform.
  std::uint64_t uniform_index(std::uint64_t n) {
    if (n == 0) throw domain_error("uniform_index: empty range");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t r;
    do {
      r = next_u64();
    } while (r >= limit);
    return r % n;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_index(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // First k elements of a uniform random permutation of {0, ..., n-1}.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k) {
    if (k > n) throw domain_error("sample_without_replacement: k > n");
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    for (std::size_t i = 0; i < k; ++i) {
      std::size_t j = i + static_cast<std::size_t>(uniform_index(n - i));
      std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    return pool;
  }

  static std::uint64_t mix64(std::uint64_t z) {
    // SplitMix64 finalizer.
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace sqkd
