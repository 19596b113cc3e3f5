#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "spectree/categorical.hpp"
#include "spectree/engine.hpp"
#include "spectree/lm.hpp"
#include "spectree/token_tree.hpp"

namespace spectree {

/// Rooted tree with a conditional probability on every edge. Node 0 is the
/// root (conditional 1); parent[i] < i for every other node. A node's weight is
/// the product of conditionals along its root path.
struct WeightedTree {
  std::vector<NodeId> parent{-1};
  std::vector<double> conditional{1.0};

  std::size_t size() const noexcept { return parent.size(); }
  NodeId add_child(NodeId p, double cond);
  std::vector<double> weights() const;
  std::vector<std::vector<NodeId>> children() const;
  /// Throws std::invalid_argument on a malformed parent array, a conditional
  /// outside [0, 1] or children whose conditionals sum above 1.
  void validate() const;
};

/// Random tree of the given depth (root at depth 0). Every node above the
/// bottom level gets 1..k children whose conditionals sum to less than 1.
WeightedTree random_weighted_tree(std::size_t k, std::size_t depth, std::uint64_t seed);

/// The space of samplings explored by the greedy builder: node 0 is the first
/// sampling at the root position; a sampling with draw probability r has a
/// child slot (first sampling after its token, conditional r) and, unless its
/// position is exhausted, a sibling slot (next sampling at the same position,
/// conditional 1 - r). Draws use the same keyed generator as construction.
/// Slots deeper than max_depth (root slot at depth 0) are not generated.
WeightedTree sampling_slot_tree(const LanguageModel& draft, std::span<const TokenId> prefix, std::uint64_t seed,
                                std::size_t max_depth);

/// Sum of `weights` in ascending order, so equal multisets give equal sums.
double canonical_weight_sum(std::vector<double> weights);

struct SubtreeSearchResult {
  double best_weight = 0.0;            // canonical_weight_sum of the chosen nodes
  std::vector<NodeId> best_subtree;    // sorted node ids, always contains 0
  std::size_t enumerated_count = 0;    // subtrees visited (greedy: steps taken)
  std::vector<double> candidate_weights;  // greedy only: weight of each added node
};

inline constexpr std::size_t kDefaultEnumerationCap = 10'000'000;

/// Exhaustive search over connected root-containing subtrees with at most
/// max_nodes nodes. Throws std::length_error once more than `cap` subtrees
/// would be visited and std::invalid_argument when max_nodes == 0.
SubtreeSearchResult brute_force_optimal_subtree(const WeightedTree& tree, std::size_t max_nodes,
                                                std::size_t cap = kDefaultEnumerationCap);

/// Starts from the root and repeatedly adds the heaviest node adjacent to the
/// current subtree (ties to the lower index) until max_nodes or no candidate.
SubtreeSearchResult greedy_subtree(const WeightedTree& tree, std::size_t max_nodes);

/// Continue-drawing rule for exact_verify_distribution: given the branch
/// tokens drawn so far, return whether another branch is drawn.
using BranchPolicy = std::function<bool(std::span<const TokenId> drawn)>;

/// Law of the first token emitted when a position is verified, integrating
/// over both the draft draws (without replacement, as the tree builders do)
/// and the acceptance uniforms. Branches keep being drawn while `policy`
/// allows and the draft has mass left. Returned unnormalized so callers can
/// check the total.
std::vector<double> exact_verify_distribution(const Categorical& draft, const Categorical& target,
                                              const BranchPolicy& policy);
std::vector<double> exact_verify_distribution(const Categorical& draft, const Categorical& target,
                                              std::size_t max_branches);

/// Law of the first emitted token for the root position of a fixed tree,
/// integrating over the acceptance uniforms only. This differs from the
/// target in general: losslessness needs the branches to be random draws.
std::vector<double> fixed_tree_first_token_law(const TokenTree& tree, const PositionDists& targets);

/// Conditional probability that each node passes its test given that the test
/// happens: min(1, R[y] / D[y]) with R and D updated by the preceding sibling
/// rejections exactly as the verifier does.
std::vector<double> true_acceptance_probs(const TokenTree& tree, const PositionDists& targets);

struct OutputLawEstimate {
  std::vector<double> empirical;
  Categorical target;
  double total_variation = 0.0;
  std::size_t trials = 0;
};

/// Runs one generation step (gen_len = 1) for `trials` seeds derived from
/// config.seed and tallies the first emitted token against the target's
/// distribution after `prompt`. Throws when trials == 0.
OutputLawEstimate monte_carlo_output_distribution(const LanguageModel& target, const LanguageModel& draft,
                                                  std::span<const TokenId> prompt, const GenConfig& config,
                                                  std::size_t trials);

struct MeanEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t trials = 0;
};

/// Verifies the fixed `tree` `trials` times with fresh seeds; reports the mean
/// number of accepted tree tokens (bonus excluded).
MeanEstimate monte_carlo_expected_accepted(const LanguageModel& target, std::span<const TokenId> prefix,
                                           const TokenTree& tree, std::size_t trials, std::uint64_t seed);

}  // namespace spectree
