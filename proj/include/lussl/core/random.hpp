#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <numbers>
#include <random>
#include <utility>
#include <vector>

namespace lussl {

/// Anything that yields uniformly distributed 64-bit words.
template <typename R>
concept RandomStream = requires(R& r) {
  { r.next_u64() } -> std::convertible_to<std::uint64_t>;
};

/// Seeded pseudo-random stream. All distributions are computed by the free
/// functions below so results do not depend on the standard library vendor.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}
  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

/// splitmix64 finaliser; used to derive independent child seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

template <typename... Ts>
constexpr std::uint64_t derive_seed(std::uint64_t base, Ts... salts) noexcept {
  std::uint64_t s = mix_seed(base);
  ((s = mix_seed(s ^ static_cast<std::uint64_t>(salts))), ...);
  return s;
}

/// Uniform double in [0, 1) with 53 random bits.
template <RandomStream R>
double uniform01(R& rng) {
  return static_cast<double>(rng.next_u64() >> 11) * 0x1.0p-53;
}

template <RandomStream R>
double uniform(R& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

template <RandomStream R>
bool bernoulli(R& rng, double p) {
  return uniform01(rng) < p;
}

/// Uniform integer in [0, n). Rejection sampling, no modulo bias.
template <RandomStream R>
std::uint64_t uniform_index(R& rng, std::uint64_t n) {
  if (n <= 1) return 0;
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x = rng.next_u64();
  while (x >= limit) x = rng.next_u64();
  return x % n;
}

/// Standard normal via Box-Muller (one draw per call, two words consumed).
template <RandomStream R>
double normal(R& rng) {
  double u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

template <RandomStream R, typename T>
void shuffle(std::vector<T>& v, R& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_index(rng, i));
    using std::swap;
    swap(v[i - 1], v[j]);
  }
}

}  // namespace lussl
