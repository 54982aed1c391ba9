#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace tsq {

// FNV-1a 64-bit hash; used for run ids, frozen-weight checksums and seed
// derivation.
std::uint64_t fnv1a64(const void* data, std::size_t len,
                      std::uint64_t seed = 0xcbf29ce484222325ull);
std::uint64_t fnv1a64(std::string_view s);

// Deterministic RNG built on std::mt19937_64. The uniform/gaussian draws are
// computed here instead of via std::*_distribution so that a seed produces
// the same stream on every standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; second value of each pair is cached.
  double gaussian();

  // Uniform integer in [0, n).
  std::size_t uniform_index(std::size_t n);

  // In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[uniform_index(i)]);
    }
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Derives an independent sub-stream seed from a master seed and a tag, so
// e.g. data generation and minibatch sampling never share a stream.
std::uint64_t derive_seed(std::uint64_t master, std::string_view tag);

}  // namespace tsq
