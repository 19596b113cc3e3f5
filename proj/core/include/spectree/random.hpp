#pragma once

#include <cstdint>
#include <limits>
#include <span>

namespace spectree {

using TokenId = std::int32_t;

/// SplitMix64 finalizer. Bijective on 64-bit words.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Combines words into one well-mixed key (order-sensitive).
std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value) noexcept;

/// Tag of the root sampling position (empty token path).
std::uint64_t root_position_tag() noexcept;

/// Tag of the position that follows `token` at the position tagged `parent_tag`.
std::uint64_t extend_position_tag(std::uint64_t parent_tag, TokenId token) noexcept;

/// Tag of an arbitrary token path, equal to folding extend_position_tag from the root.
std::uint64_t path_position_tag(std::span<const TokenId> path) noexcept;

/// Maps 64 random bits to a double in [0, 1).
double to_unit_interval(std::uint64_t bits) noexcept;

/// Counter-based randomness address. The uniform stream for a key is a pure
/// function of (seed, position_tag, sampling_index), so two construction
/// procedures that perform the same sampling at the same position observe the
/// same draw regardless of the order in which they visit positions.
class RandomKey {
 public:
  RandomKey(std::uint64_t seed, std::uint64_t position_tag, std::uint64_t sampling_index) noexcept;

  /// The `draw`-th uniform in [0, 1) of this key's stream.
  double uniform(std::uint64_t draw = 0) const noexcept;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t position_tag() const noexcept { return position_tag_; }
  std::uint64_t sampling_index() const noexcept { return sampling_index_; }

 private:
  std::uint64_t seed_;
  std::uint64_t position_tag_;
  std::uint64_t sampling_index_;
  std::uint64_t base_;
};

/// Sequential uniform stream whose k-th value depends only on (seed, k).
class UniformStream {
 public:
  explicit UniformStream(std::uint64_t seed) noexcept : seed_(seed) {}

  double next() noexcept;
  std::uint64_t consumed() const noexcept { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

/// Counter-based engine satisfying UniformRandomBitGenerator, for feeding the
/// standard <random> distributions from a hashed key.
class CounterEngine {
 public:
  using result_type = std::uint64_t;

  explicit CounterEngine(std::uint64_t key) noexcept : key_(key) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept { return mix64(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace spectree
