#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

#include "hivla/core/errors.hpp"

namespace hivla::harness {

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

/// Wilson score interval for a binomial proportion at 95% confidence.
/// Zero trials yields the vacuous [0, 1].
inline Interval wilson95(int successes, int trials) {
  if (trials < 0 || successes < 0 || successes > trials) {
    throw ConfigError("wilson95: need 0 <= successes <= trials");
  }
  if (trials == 0) return {0.0, 1.0};
  constexpr double z = 1.959963984540054;  // Phi^-1(0.975)
  const double n = static_cast<double>(trials);
  const double ph = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = (ph + z2 / (2.0 * n)) / denom;
  const double half = z * std::sqrt(ph * (1.0 - ph) / n + z2 / (4.0 * n * n)) / denom;
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

inline double log_choose(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

/// Exact P(X <= k) for X ~ Binomial(n, p), summed in probability space from
/// log-space terms (n is small in every caller).
inline double binom_cdf(int k, int n, double p) {
  if (n < 0 || p < 0.0 || p > 1.0) throw ConfigError("binom_cdf: bad arguments");
  if (k < 0) return 0.0;
  if (k >= n) return 1.0;
  if (p == 0.0) return 1.0;
  if (p == 1.0) return 0.0;
  double acc = 0.0;
  const double lp = std::log(p), lq = std::log1p(-p);
  for (int i = 0; i <= k; ++i) {
    acc += std::exp(log_choose(n, i) + i * lp + (n - i) * lq);
  }
  return std::min(1.0, acc);
}

/// One-sided exact sign test on paired success outcomes. `variant_wins` and
/// `reference_wins` count the discordant pairs in each direction; the return
/// value is the probability, if the variant were really no worse than the
/// reference, of seeing this few wins for the variant. Small values reject
/// "no worse" in favour of "worse".
inline double paired_sign_test_p(int variant_wins, int reference_wins) {
  if (variant_wins < 0 || reference_wins < 0) throw ConfigError("sign test: negative counts");
  const int n = variant_wins + reference_wins;
  if (n == 0) return 1.0;
  return binom_cdf(variant_wins, n, 0.5);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

/// 16 lowercase hex digits of the FNV-1a hash; used to content-address
/// experiment outputs by their canonical config text.
inline std::string content_hash(std::string_view canonical_text) {
  static const char* digits = "0123456789abcdef";
  std::uint64_t h = fnv1a64(canonical_text);
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

/// Guards the train/eval split: both half-open seed ranges must be disjoint.
inline void assert_disjoint_seed_ranges(std::uint64_t train_base, std::uint64_t train_count,
                                        std::uint64_t eval_base, std::uint64_t eval_count) {
  const bool overlap =
      train_base < eval_base + eval_count && eval_base < train_base + train_count;
  if (train_count > 0 && eval_count > 0 && overlap) {
    throw ConfigError("train seeds [" + std::to_string(train_base) + ", " +
                      std::to_string(train_base + train_count) + ") overlap eval seeds [" +
                      std::to_string(eval_base) + ", " + std::to_string(eval_base + eval_count) +
                      ")");
  }
}

}  // namespace hivla::harness
