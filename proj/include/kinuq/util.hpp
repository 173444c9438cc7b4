#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "kinuq/types.hpp"

namespace kinuq {

/// SplitMix64 mixer. Counter-based: value i of a stream depends only on
/// (seed, i), so sample subsets and supersets share prefixes.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Mix several words into one stream key.
inline std::uint64_t hash_mix(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ (0x9e3779b97f4a7c15ULL + (b << 6) + (b >> 2)));
}

inline Real uniform01(std::uint64_t bits) {
  return static_cast<Real>(bits >> 11) * 0x1.0p-53;
}

/// Small counter-based RNG used for seeded, reproducible sampling.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : seed_(seed) {}
  Real next01() { return uniform01(splitmix64(seed_ ^ counter_++ * 0x9e3779b97f4a7c15ULL)); }
  Real uniform(Real lo, Real hi) { return lo + (hi - lo) * next01(); }
  std::uint64_t next_u64() { return splitmix64(seed_ ^ counter_++ * 0x9e3779b97f4a7c15ULL); }
  Index uniform_index(Index n) { return static_cast<Index>(next01() * static_cast<Real>(n)) % n; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

std::uint64_t fnv1a64(const std::string& data);

/// Runs body(i) for i in [0, n). Work is split into fixed contiguous blocks;
/// each index is processed exactly once, so per-index outputs are
/// deterministic regardless of the worker count.
void parallel_for(Index n, const std::function<void(Index)>& body, int n_jobs = 0);

/// Pairwise (fixed binary tree) column sum; result independent of threading.
Array pairwise_colsum(const ArrayXX& block);

/// Format a double so that round-trips are exact; used by all CSV writers.
std::string format_real(Real v);

}  // namespace kinuq
