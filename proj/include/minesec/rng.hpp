#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string_view>

namespace minesec {

inline constexpr std::uint64_t kStreamIncrement = 0x9E3779B97F4A7C15ull;

// splitmix64 finalizer
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Deterministic splitmix64 stream. Self-contained so that runs are
// reproducible regardless of the standard library in use.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += kStreamIncrement;
    return mix64(state_);
  }

  // [0, 1)
  double uniform01() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // unbiased integer in [0, bound)
  std::uint64_t below(std::uint64_t bound) {
    if (bound == 0) throw std::invalid_argument("Rng::below: bound must be positive");
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % bound;
    }
  }

  // standard normal, Box-Muller with cached spare
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = double((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

inline std::uint64_t hash_name(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// One master seed expands into independent named streams so that each part
// of a run (init, channel noise, evaluation, ...) draws from its own
// reproducible sequence.
inline std::uint64_t derive_stream(std::uint64_t master, std::string_view name) {
  return mix64(master ^ mix64(hash_name(name)));
}

inline std::uint64_t derive_stream(std::uint64_t master, std::string_view name,
                                   std::uint64_t index) {
  return mix64(derive_stream(master, name) + (index + 1) * kStreamIncrement);
}

}  // namespace minesec
