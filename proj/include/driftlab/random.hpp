#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace driftlab {

/// splitmix64 finalizer; used to derive independent stream keys.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Small counter-style generator satisfying UniformRandomBitGenerator.
/// Each noise stream is keyed by (master seed, purpose, index) rather than
/// by draw order, so results do not depend on iteration order.
class RandomStream {
 public:
  using result_type = std::uint64_t;

  explicit RandomStream(std::uint64_t key) noexcept : state_(key) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix64(state_);
  }

  double normal() { return normal_(*this); }

  /// Uniform on [0, 1).
  double uniform() noexcept {
    return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer on [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    std::uniform_int_distribution<std::int64_t> dist(lo, hi);
    return dist(*this);
  }

 private:
  std::uint64_t state_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Hierarchical seed: child(tag) forks a sub-tree, stream(i) yields the
/// generator for element i. Cheap to copy.
class SeedTree {
 public:
  explicit SeedTree(std::uint64_t seed = 0) noexcept : key_(mix64(seed)) {}

  [[nodiscard]] SeedTree child(std::uint64_t tag) const noexcept {
    SeedTree out;
    out.key_ = mix64(key_ ^ mix64(tag + 0x632be59bd9b4e019ULL));
    return out;
  }

  [[nodiscard]] RandomStream stream(std::uint64_t index) const noexcept {
    return RandomStream(mix64(key_ + mix64(index ^ 0xd1b54a32d192ed03ULL)));
  }

  [[nodiscard]] std::uint64_t key() const noexcept { return key_; }

 private:
  std::uint64_t key_ = 0;
};

// Purpose tags for SeedTree::child. Stable across versions: checkpoints
// resume by re-deriving streams from these.
namespace tags {
inline constexpr std::uint64_t kForward = 1;
inline constexpr std::uint64_t kJump = 2;
inline constexpr std::uint64_t kDenoise = 3;
inline constexpr std::uint64_t kPrior = 4;
inline constexpr std::uint64_t kBootstrapStart = 5;
inline constexpr std::uint64_t kData = 6;
inline constexpr std::uint64_t kDataPrime = 7;
inline constexpr std::uint64_t kTimestep = 8;
inline constexpr std::uint64_t kInit = 9;
inline constexpr std::uint64_t kStep = 10;
inline constexpr std::uint64_t kShuffle = 11;
inline constexpr std::uint64_t kDrift = 12;
inline constexpr std::uint64_t kOracle = 13;
}  // namespace tags

}  // namespace driftlab
