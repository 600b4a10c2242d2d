#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace hscd {

// Deterministic random source. Every consumer derives its own stream from a
// root seed and a named path, so module boundaries never share generator
// state and runs are reproducible bit for bit.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller (pair-cached, fixed consumption order).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    // Guard against log(0).
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Uniform integer in [lo, hi] inclusive.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    uint64_t mask = span - 1;
    mask |= mask >> 1;
    mask |= mask >> 2;
    mask |= mask >> 4;
    mask |= mask >> 8;
    mask |= mask >> 16;
    mask |= mask >> 32;
    uint64_t v;
    do {
      v = gen_() & mask;
    } while (v >= span);
    return lo + static_cast<int64_t>(v);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int64_t i = static_cast<int64_t>(v.size()) - 1; i > 0; --i) {
      std::swap(v[static_cast<size_t>(i)],
                v[static_cast<size_t>(uniform_int(0, i))]);
    }
  }

  uint64_t raw() { return gen_(); }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

namespace detail {
inline uint64_t mix64(uint64_t x) {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace detail

// Derives the seed of a named sub-stream: hash of the root seed, a label and
// optional integer indices. Order-sensitive.
inline uint64_t substream(uint64_t root, std::string_view label,
                          std::initializer_list<uint64_t> idx = {}) {
  uint64_t h = detail::mix64(root ^ 0x5bf03635d2d9f6a1ULL);
  for (const char c : label) h = detail::mix64(h ^ static_cast<uint64_t>(c));
  for (const uint64_t i : idx) h = detail::mix64(h ^ i);
  return h;
}

inline Rng substream_rng(uint64_t root, std::string_view label,
                         std::initializer_list<uint64_t> idx = {}) {
  return Rng(substream(root, label, idx));
}

}  // namespace hscd
