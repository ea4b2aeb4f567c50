#pragma once

#include <cstdint>
#include <optional>
#include <random>

#include "makesense/common/bytes.hpp"

namespace makesense {

// splitmix64 finalizer; used to derive independent streams from (seed, key...) tuples.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t mix64(std::uint64_t a, std::uint64_t b) { return mix64(a ^ mix64(b)); }

std::uint64_t hash_string(std::string_view s);

/// Standard normal deviate that is a pure function of its key.
double keyed_gaussian(std::uint64_t key);

/// Byte source for nonces, randoms and tokens. Seeded sources are reproducible;
/// unseeded ones draw from the OS CSPRNG.
class RandomSource {
 public:
  explicit RandomSource(std::optional<std::uint64_t> seed = std::nullopt);

  void fill(std::span<std::uint8_t> out);
  Bytes bytes(std::size_t n);
  std::uint64_t next_u64();
  bool deterministic() const { return engine_.has_value(); }

 private:
  std::optional<std::mt19937_64> engine_;
};

}  // namespace makesense
