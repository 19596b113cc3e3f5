#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "spectree/lm.hpp"
#include "spectree/token_tree.hpp"

namespace spectree {

/// Canonical priority of sampling slots: larger value first, then shallower,
/// then the lexicographically smaller slot path (see TokenTree::slot_path).
/// Both builders resolve value ties with it, so they agree on the same
/// budget even when distinct paths carry bit-identical values.
bool slot_before(double value_a, std::span<const int> path_a, double value_b, std::span<const int> path_b) noexcept;

/// An expandable sampling: the next draw at `owner`'s position.
struct HeapEntry {
  double value = 0.0;  // estimated probability the sampling is reached
  Categorical residual;
  NodeId owner = kRootId;
  std::uint64_t position_tag = 0;
  std::uint64_t sampling_index = 0;
  std::vector<int> slot_path;  // slot path of the node this sampling creates
};

/// Max-heap order following slot_before.
struct HeapEntryLess {
  bool operator()(const HeapEntry& a, const HeapEntry& b) const noexcept {
    return slot_before(b.value, b.slot_path, a.value, a.slot_path);
  }
};

struct CostParams {
  double draft_step = 1.0;         // T_d
  double target_step = 100.0;      // T_t
  double per_node_overhead = 0.0;  // c, cost per N log2 N construction unit

  void validate() const;
};

enum class LatencyMode { kGreedy, kLayered };

struct FixedBuild {
  TokenTree tree;
  std::vector<double> popped_values;  // in pop order
  std::size_t draft_calls = 0;
};

/// Greedy fixed-budget construction. Repeatedly pops the highest-priority
/// expandable sampling, draws a token from its residual with the keyed
/// generator, then pushes the next-sibling entry (value v * (1 - R[y])) and the
/// first-child entry (value v * R[y]). Exhausted residuals are dropped.
/// Throws std::invalid_argument when budget == 0.
FixedBuild build_tree_fixed_traced(const LanguageModel& draft, std::span<const TokenId> prefix,
                                   std::size_t budget, std::uint64_t seed);

TokenTree build_tree_fixed(const LanguageModel& draft, std::span<const TokenId> prefix, std::size_t budget,
                           std::uint64_t seed);

struct ThresholdBuild {
  TokenTree tree;
  std::size_t layers = 0;
  std::size_t draft_calls = 0;
};

/// Layer-by-layer construction. At every queued position, sibling samplings
/// continue while the next sampling's value is >= threshold; each new node
/// whose child entry is >= threshold is queued for the next layer. If more than
/// `size_cap` nodes qualify, the first `size_cap` under slot_before are kept
/// (parents and previous siblings always precede, so the result is a tree).
ThresholdBuild build_tree_threshold_traced(const LanguageModel& draft, std::span<const TokenId> prefix,
                                           double threshold, std::size_t size_cap, std::uint64_t seed);

TokenTree build_tree_threshold(const LanguageModel& draft, std::span<const TokenId> prefix, double threshold,
                               std::size_t size_cap, std::uint64_t seed);

/// Expected number of accepted tree tokens given per-node conditional
/// acceptance probabilities `sd` (indexed by node id):
///   sum_u P(path to u accepted) where a node is accepted with probability
///   P(parent accepted) * prod over previous siblings (1 - sd[s]) * sd[u].
/// Throws when sd has the wrong size or an entry lies outside [0, 1].
double expected_accepted(const TokenTree& tree, std::span<const double> sd);

/// expected_accepted with each node's acceptance estimated by the probability
/// it was sampled with (its residual draft probability).
double expected_accepted_draft_approx(const TokenTree& tree);

/// (c * N log2 N + T_t + k * T_d) / e with k = N (greedy) or D (layered).
double estimate_latency(std::size_t tree_size, std::size_t tree_depth, double accepted_per_step,
                        const CostParams& costs, LatencyMode mode);

}  // namespace spectree
