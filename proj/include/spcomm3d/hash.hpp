#pragma once

#include <cstdint>

namespace spc3d {

/// SplitMix64 finalizer. Used as a stateless, counter-keyed random source.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t mix64(std::uint64_t key, std::uint64_t counter) noexcept {
  return mix64(mix64(key) ^ counter);
}

/// Incremental FNV-1a style checksum over 64-bit words.
class Checksum {
public:
  constexpr void add(std::uint64_t w) noexcept { h_ = mix64(h_ ^ w); }
  constexpr std::uint64_t value() const noexcept { return h_; }

private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

}  // namespace spc3d
