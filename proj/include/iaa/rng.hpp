#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace iaa {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used only to derive stream seeds from keys.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for the stream identified by (seed, keys...). Distinct key tuples give
/// independent streams, so generation order never affects the values drawn.
inline std::uint64_t stream_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = mix64(seed);
  for (auto k : keys)
    h = mix64(h ^ mix64(k + 0x632be59bd9b4e019ULL));
  return h;
}

inline Rng keyed_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
  return Rng(stream_seed(seed, keys));
}

/// Stream tags so subsystems sharing one seed never collide.
enum class Stream : std::uint64_t {
  world = 1,
  encoder_init = 2,
  sampler = 3,
  augment = 4,
  fixed_augment = 5,
};

inline Rng keyed_rng(std::uint64_t seed, Stream s, std::initializer_list<std::uint64_t> keys = {}) {
  std::uint64_t h = stream_seed(seed, {static_cast<std::uint64_t>(s)});
  for (auto k : keys)
    h = mix64(h ^ mix64(k + 0x632be59bd9b4e019ULL));
  return Rng(h);
}

} // namespace iaa
