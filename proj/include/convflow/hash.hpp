#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace convflow {

/// 64-bit FNV-1a. Stable across platforms; used for token seeding,
/// content keys and artifact fingerprints.
constexpr std::uint64_t fnv1a64(std::string_view bytes,
                                std::uint64_t h = 0xcbf29ce484222325ULL) noexcept {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Expands a master seed into an independent named stream ("umap", "gmm", ...).
constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view stream) noexcept {
  return splitmix64(master ^ fnv1a64(stream));
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept {
  return splitmix64(master + splitmix64(index + 0x632be59bd9b4e019ULL));
}

std::string to_hex(std::uint64_t v);

}  // namespace convflow
