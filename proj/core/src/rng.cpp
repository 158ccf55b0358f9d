#include "splicemix/rng.hpp"

#include <bit>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace splicemix {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

SeededStream::SeededStream(std::uint64_t seed) {
  std::uint64_t sm = seed;
  for (auto& word : state_) word = splitmix64(sm);
}

std::uint64_t SeededStream::next() {
  const std::uint64_t result = std::rotl(state_[1] * 5, 7) * 9;
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = std::rotl(state_[3], 45);
  return result;
}

std::uint64_t SeededStream::uniform(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("uniform(0) has no outcomes");
  // 2^64 mod n computed without 128-bit arithmetic.
  const std::uint64_t rem = (std::numeric_limits<std::uint64_t>::max() % n + 1) % n;
  const std::uint64_t limit = 0 - rem;  // 2^64 - rem, wraps to 0 when rem == 0
  for (;;) {
    const std::uint64_t x = next();
    if (limit == 0 || x < limit) return x % n;
  }
}

double SeededStream::uniform01() {
  return static_cast<double>(next() >> 11) * 0x1.0p-53;
}

bool SeededStream::bernoulli(double p) { return uniform01() < p; }

std::vector<std::size_t> SeededStream::sample_without_replacement(std::size_t n,
                                                                  std::size_t k) {
  if (k > n) throw std::invalid_argument("cannot sample more items than the population");
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(uniform(n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

double SeededStream::normal() {
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform01();
  const double u2 = uniform01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream_id) {
  std::uint64_t sm = seed ^ (stream_id * 0xD1B54A32D192ED03ULL);
  splitmix64(sm);
  return splitmix64(sm);
}

}  // namespace splicemix
