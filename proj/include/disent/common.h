#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace disent {

// Malformed external input: logs, annotations, configs, checkpoints.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A numeric invariant broke: non-finite loss, failed gradient check.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// splitmix64. Used wherever a cheap deterministic stream is needed
// (dropout masks are re-drawn from the same seed in backward passes).
struct SplitMix {
  std::uint64_t state;

  explicit SplitMix(std::uint64_t seed) : state(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
};

inline std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
  SplitMix s(a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2)));
  return s.next();
}

}  // namespace disent
