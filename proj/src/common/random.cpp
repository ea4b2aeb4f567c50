#include "makesense/common/random.hpp"

#include <openssl/rand.h>

#include <cmath>
#include <numbers>

#include "makesense/common/error.hpp"

namespace makesense {

std::uint64_t hash_string(std::string_view s) {
  // FNV-1a, then mixed.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return mix64(h);
}

double keyed_gaussian(std::uint64_t key) {
  const std::uint64_t a = mix64(key);
  const std::uint64_t b = mix64(a);
  // 53-bit uniforms in (0, 1].
  const double u1 = (static_cast<double>(a >> 11) + 1.0) * 0x1.0p-53;
  const double u2 = static_cast<double>(b >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

RandomSource::RandomSource(std::optional<std::uint64_t> seed) {
  if (seed) engine_.emplace(*seed);
}

void RandomSource::fill(std::span<std::uint8_t> out) {
  if (!engine_) {
    if (RAND_bytes(out.data(), static_cast<int>(out.size())) != 1) throw Error("RAND_bytes failed");
    return;
  }
  std::size_t i = 0;
  while (i < out.size()) {
    std::uint64_t v = (*engine_)();
    for (int k = 0; k < 8 && i < out.size(); ++k, ++i) {
      out[i] = static_cast<std::uint8_t>(v);
      v >>= 8;
    }
  }
}

Bytes RandomSource::bytes(std::size_t n) {
  Bytes out(n);
  fill(out);
  return out;
}

std::uint64_t RandomSource::next_u64() {
  if (engine_) return (*engine_)();
  std::uint64_t v = 0;
  auto* p = reinterpret_cast<std::uint8_t*>(&v);
  fill({p, sizeof v});
  return v;
}

}  // namespace makesense
