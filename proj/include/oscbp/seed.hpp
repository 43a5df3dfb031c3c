#pragma once

#include <cstdint>
#include <initializer_list>

namespace oscbp {

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives a child seed from a master seed and a path of integers, e.g.
/// derive_seed(master, {kTrainStream, run, fold}). Every module seed comes from here.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = mix64(master);
  for (std::uint64_t p : path) h = mix64(h ^ mix64(p + 0x632be59bd9b4e019ULL));
  return h;
}

// Stream tags keep the seeds of different consumers apart.
inline constexpr std::uint64_t kStreamSynth = 1;
inline constexpr std::uint64_t kStreamFolds = 2;
inline constexpr std::uint64_t kStreamInit = 3;

}  // namespace oscbp
