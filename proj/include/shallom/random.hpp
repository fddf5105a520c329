#ifndef SHALLOM_RANDOM_HPP
#define SHALLOM_RANDOM_HPP

#include <cstdint>
#include <random>
#include <string_view>

namespace shallom {

using Rng = std::mt19937_64;

/// 64-bit FNV-1a.
constexpr std::uint64_t fnv1a(std::string_view text,
                              std::uint64_t hash = 0xcbf29ce484222325ULL) noexcept {
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

/// Independent generator for one named purpose ("init", "shuffle", "dropout",
/// "urc", ...) derived from a single root seed.
inline Rng make_stream(std::uint64_t root_seed, std::string_view name) {
  const std::uint64_t tag = fnv1a(name);
  std::seed_seq seq{static_cast<std::uint32_t>(root_seed), static_cast<std::uint32_t>(root_seed >> 32),
                    static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32)};
  return Rng(seq);
}

}  // namespace shallom

#endif  // SHALLOM_RANDOM_HPP
