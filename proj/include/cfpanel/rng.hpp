#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace cfpanel {

std::uint64_t splitmix64(std::uint64_t x);

// Tags for the first component of a derived stream path.
enum class Stream : std::uint64_t {
  kSimulate = 1,
  kBootstrap = 2,
  kMonteCarlo = 3,
  kCalibration = 4,
  kQuadrature = 5,
  kResample = 6,
};

// Random stream backed by mt19937_64, whose output sequence is fixed by the
// C++ standard. Child streams are keyed by a path of integers:
//   key = splitmix64(seed); for each k: key = splitmix64(key ^ splitmix64(k))
// so every (seed, path) pair names one reproducible stream, independent of
// the order or thread in which streams are created.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  static Rng derive(std::uint64_t seed, std::initializer_list<std::uint64_t> path);
  static Rng derive(std::uint64_t seed, Stream tag, std::uint64_t index) {
    return derive(seed, {static_cast<std::uint64_t>(tag), index});
  }

  std::uint64_t next() { return engine_(); }
  // [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  // (0, 1).
  double uniform_open() { return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53; }
  double exponential(double mean = 1.0);
  // Uniform on {0, ..., n-1}, unbiased.
  std::uint64_t index(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace cfpanel
