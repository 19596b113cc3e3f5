#include "spectree/random.hpp"

namespace spectree {

namespace {
constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
constexpr std::uint64_t kRootTag = 0x5eed'7a65'0000'0001ULL;
}  // namespace

std::uint64_t mix64(std::uint64_t x) noexcept {
  x += kGolden;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value) noexcept {
  return mix64(seed ^ (mix64(value) + kGolden + (seed << 6) + (seed >> 2)));
}

std::uint64_t root_position_tag() noexcept { return mix64(kRootTag); }

std::uint64_t extend_position_tag(std::uint64_t parent_tag, TokenId token) noexcept {
  return hash_combine(parent_tag, static_cast<std::uint64_t>(static_cast<std::uint32_t>(token)));
}

std::uint64_t path_position_tag(std::span<const TokenId> path) noexcept {
  std::uint64_t tag = root_position_tag();
  for (TokenId t : path) tag = extend_position_tag(tag, t);
  return tag;
}

double to_unit_interval(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

RandomKey::RandomKey(std::uint64_t seed, std::uint64_t position_tag,
                     std::uint64_t sampling_index) noexcept
    : seed_(seed),
      position_tag_(position_tag),
      sampling_index_(sampling_index),
      base_(hash_combine(hash_combine(mix64(seed), position_tag), sampling_index)) {}

double RandomKey::uniform(std::uint64_t draw) const noexcept {
  return to_unit_interval(mix64(base_ + kGolden * (draw + 1)));
}

double UniformStream::next() noexcept {
  return to_unit_interval(hash_combine(mix64(seed_), counter_++));
}

}  // namespace spectree
