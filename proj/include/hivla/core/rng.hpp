#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <string_view>

namespace hivla {

/// Deterministic 64-bit PRNG (splitmix64). One instance per logical stream;
/// the state is a single word so it serializes trivially into checkpoints.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi] inclusive. Requires lo <= hi.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(next_u64() % span);
  }

  /// Standard normal via Box-Muller; caches the second variate.
  double normal() {
    if (has_cache_) {
      has_cache_ = false;
      return cache_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    cache_ = r * std::sin(a);
    has_cache_ = true;
    return r * std::cos(a);
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Serializes the full generator state. The cached Box-Muller variate is
  /// stored by bit pattern so restore is exact.
  std::string save_state() const {
    return std::to_string(state_) + " " +
           (has_cache_ ? "1 " + std::to_string(std::bit_cast<std::uint64_t>(cache_)) : "0");
  }

  void restore_state(const std::string& text);

 private:
  std::uint64_t state_;
  bool has_cache_ = false;
  double cache_ = 0.0;
};

inline void Rng::restore_state(const std::string& text) {
  std::size_t pos = 0;
  state_ = std::stoull(text, &pos);
  const int flag = std::stoi(text.substr(pos));
  has_cache_ = flag != 0;
  if (has_cache_) {
    const auto sp = text.find(' ', text.find_first_not_of(' ', pos));
    cache_ = std::bit_cast<double>(std::stoull(text.substr(sp)));
  }
}

/// Derives a decorrelated child seed from a base seed, a purpose tag and an
/// index. Same inputs always give the same child seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag, std::uint64_t index = 0) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xffu;
      h *= 0x100000001b3ull;
    }
  };
  mix(base);
  for (const char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  mix(index);
  Rng finisher(h);
  return finisher.next_u64();
}

}  // namespace hivla
