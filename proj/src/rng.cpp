#include "nccr/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace nccr {

namespace {

uint64_t splitmix64_next(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace

uint64_t derive_seed(uint64_t parent, std::string_view label, uint64_t index) {
  uint64_t state = parent;
  uint64_t a = splitmix64_next(state);
  state ^= fnv1a64(label);
  uint64_t b = splitmix64_next(state);
  state ^= index;
  uint64_t c = splitmix64_next(state);
  return a ^ (b + 0x9e3779b97f4a7c15ull) ^ (c << 1);
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
  return lo + uniform() * (hi - lo);
}

uint64_t Rng::uniform_int(uint64_t n) {
  if (n == 0) throw std::invalid_argument("uniform_int: n must be positive");
  // Lemire's multiply-shift with rejection.
  uint64_t x = next_u64();
  __uint128_t m = static_cast<__uint128_t>(x) * n;
  uint64_t lo = static_cast<uint64_t>(m);
  if (lo < n) {
    uint64_t threshold = (0 - n) % n;
    while (lo < threshold) {
      x = next_u64();
      m = static_cast<__uint128_t>(x) * n;
      lo = static_cast<uint64_t>(m);
    }
  }
  return static_cast<uint64_t>(m >> 64);
}

double Rng::normal(double mean, double stddev) {
  // Box-Muller; u1 in (0,1] so the log is finite.
  double u1 = 1.0 - uniform();
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  return mean + stddev * r * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::truncated_normal(double stddev, double bound) {
  if (stddev == 0.0) return 0.0;
  for (;;) {
    double v = normal(0.0, stddev);
    if (std::abs(v) <= bound) return v;
  }
}

}  // namespace nccr
