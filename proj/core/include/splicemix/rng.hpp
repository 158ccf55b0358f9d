#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace splicemix {

/// splitmix64 step; used to expand a 64-bit seed into xoshiro state.
std::uint64_t splitmix64(std::uint64_t& state);

/// Deterministic random stream (xoshiro256** seeded through splitmix64).
///
/// Every derived draw is defined on top of next() so that the stream can be
/// reproduced bit-exactly in any language:
///   - uniform(n): rejection sampling, reject x >= 2^64 - (2^64 mod n), return x mod n
///   - uniform01(): (next() >> 11) * 2^-53
///   - bernoulli(p): uniform01() < p
///   - sample_without_replacement(n, k): partial Fisher-Yates over [0, n),
///     j = i + uniform(n - i) for i in [0, k)
class SeededStream {
 public:
  explicit SeededStream(std::uint64_t seed);

  std::uint64_t next();
  std::uint64_t uniform(std::uint64_t n);
  double uniform01();
  bool bernoulli(double p);
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

  /// Standard normal via Box-Muller on two uniform01() draws (no caching).
  double normal();

  const std::array<std::uint64_t, 4>& state() const { return state_; }

 private:
  std::array<std::uint64_t, 4> state_{};
};

/// Derives an independent child seed; used to give sub-tasks their own streams.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream_id);

}  // namespace splicemix
