#include "cfpanel/rng.hpp"

#include <cmath>
#include <limits>


namespace cfpanel {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

Rng Rng::derive(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  std::uint64_t key = splitmix64(seed);
  for (std::uint64_t k : path) key = splitmix64(key ^ splitmix64(k));
  return Rng(key);
}

double Rng::exponential(double mean) { return -mean * std::log(uniform_open()); }

std::uint64_t Rng::index(std::uint64_t n) {
  // Rejection keeps the draw unbiased for every n.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = next();
  } while (x >= limit);
  return x % n;
}

}  // namespace cfpanel
