#ifndef KED_RNG_HPP
#define KED_RNG_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

// Sampling helpers built directly on the mt19937_64 bit stream. The engine's
// output is pinned by the standard, so results are identical across
// platforms; std::*_distribution would not be.
namespace ked::rng {

inline double uniform01(std::mt19937_64& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& g, double lo, double hi) {
  return lo + (hi - lo) * uniform01(g);
}

/// Standard normal via Box-Muller (cosine branch only).
inline double gaussian(std::mt19937_64& g) {
  double u1 = uniform01(g);
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  const double u2 = uniform01(g);
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

inline std::uint64_t below(std::mt19937_64& g, std::uint64_t n) {
  return g() % n;
}

template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& g) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(below(g, i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace ked::rng

#endif  // KED_RNG_HPP
