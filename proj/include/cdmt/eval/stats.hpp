#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "cdmt/tensor/rng.hpp"

namespace cdmt {

struct McNemarResult {
  std::size_t b = 0;  // A right, B wrong
  std::size_t c = 0;  // A wrong, B right
  double statistic = 0.0;
  double p = 1.0;
};

/// Upper tail of the chi-squared distribution with one degree of freedom.
inline double chi2_1_sf(double x) { return x <= 0.0 ? 1.0 : std::erfc(std::sqrt(x / 2.0)); }

inline McNemarResult mcnemar_counts(std::size_t b, std::size_t c) {
  McNemarResult r{b, c, 0.0, 1.0};
  if (b + c == 0) return r;
  const double d = std::abs(static_cast<double>(b) - static_cast<double>(c)) - 1.0;
  r.statistic = d * d / static_cast<double>(b + c);
  r.p = chi2_1_sf(r.statistic);
  return r;
}

/// Continuity-corrected McNemar test on paired correctness.
inline McNemarResult mcnemar(const std::vector<bool>& a, const std::vector<bool>& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("mcnemar: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()) + " items");
  McNemarResult r;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] && !b[i]) ++r.b;
    if (!a[i] && b[i]) ++r.c;
  }
  return mcnemar_counts(r.b, r.c);
}

/// Paired approximate randomization. Each permutation swaps every item pair
/// with probability 1/2 and recomputes |stat(A) - stat(B)|;
/// p = (#{permuted >= observed} + 1) / (permutations + 1).
template <typename Item>
double approx_randomization(const std::vector<Item>& a, const std::vector<Item>& b, std::size_t permutations,
                            std::uint64_t seed, const std::function<double(const std::vector<Item>&)>& stat) {
  if (a.empty() || b.empty()) throw std::invalid_argument("approx_randomization: empty inputs");
  if (a.size() != b.size()) throw std::invalid_argument("approx_randomization: inputs differ in length");
  if (permutations < 1) throw std::invalid_argument("approx_randomization: need at least one permutation");
  const double observed = std::abs(stat(a) - stat(b));
  CounterRng rng(seed, 0xa12);
  std::size_t count = 0;
  std::vector<Item> x(a), y(b);
  for (std::size_t p = 0; p < permutations; ++p) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      const bool swap = rng.bernoulli(0.5);
      x[i] = swap ? b[i] : a[i];
      y[i] = swap ? a[i] : b[i];
    }
    if (std::abs(stat(x) - stat(y)) >= observed) ++count;
  }
  return static_cast<double>(count + 1) / static_cast<double>(permutations + 1);
}

inline double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Approximate randomization on the mean of per-item scores.
inline double approx_randomization(const std::vector<double>& a, const std::vector<double>& b,
                                   std::size_t permutations, std::uint64_t seed) {
  return approx_randomization<double>(a, b, permutations, seed, mean_of);
}

inline constexpr std::size_t kBleuPermutations = 10000;
inline constexpr std::size_t kEntropyPermutations = 1000;

}  // namespace cdmt
