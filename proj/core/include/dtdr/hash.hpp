#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace dtdr {

// FNV-1a, 64 bit. Used wherever a hash must be stable across platforms and
// runs (feature hashing, fingerprints, per-probe seeds).
inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

constexpr std::uint64_t fnv1a(std::string_view data,
                              std::uint64_t h = kFnvOffset) noexcept {
  for (unsigned char c : data) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  // splitmix64 finalizer
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

std::string to_hex(std::uint64_t value);

}  // namespace dtdr
