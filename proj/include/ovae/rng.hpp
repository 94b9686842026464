#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace ovae {

using Rng = std::mt19937_64;

// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seed for stream `stream`, element `index` under a global seed. Streams
// separate purposes (training, labels, pilot, ...); indices separate items
// so results do not depend on how work is split across threads.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream,
                                    std::uint64_t index = 0) noexcept {
  return splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ index);
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream,
                    std::uint64_t index = 0) {
  return Rng(derive_seed(seed, stream, index));
}

// Named stream ids.
namespace streams {
inline constexpr std::uint64_t kSynth = 0x11;
inline constexpr std::uint64_t kSplit = 0x12;
inline constexpr std::uint64_t kInit = 0x21;
inline constexpr std::uint64_t kTrain = 0x22;
inline constexpr std::uint64_t kLabelSubset = 0x31;
inline constexpr std::uint64_t kLabelDraws = 0x32;
inline constexpr std::uint64_t kPilot = 0x41;
inline constexpr std::uint64_t kAssess = 0x51;
inline constexpr std::uint64_t kStatTests = 0x61;
}  // namespace streams

inline double normal_pdf(double x, double mean = 0.0, double sd = 1.0) {
  const double u = (x - mean) / sd;
  return std::exp(-0.5 * u * u) / (sd * std::sqrt(2.0 * std::numbers::pi));
}

inline double normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

}  // namespace ovae
