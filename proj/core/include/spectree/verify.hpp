#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "spectree/lm.hpp"
#include "spectree/token_tree.hpp"

namespace spectree {

/// One acceptance test of a tree branch.
struct BranchTrial {
  NodeId node = 0;
  double uniform = 0.0;
  double draft_prob = 0.0;   // D[y] at test time (the residual the token was sampled from)
  double accept_prob = 0.0;  // min(1, R[y] / D[y])
  bool accepted = false;
};

struct VerifyResult {
  /// Accepted tree tokens followed by the bonus token.
  std::vector<TokenId> accepted;
  std::vector<NodeId> accepted_node_ids;
  bool bonus_from_residual = false;
  TokenId bonus_token = 0;
  std::vector<BranchTrial> trace;

  std::size_t accepted_tree_tokens() const noexcept { return accepted_node_ids.size(); }
};

/// Verifies `tree` against per-position target distributions.
///
/// Starting at the root position, the position's sampled branches are tested in
/// sampling order: branch y is accepted iff u < min(1, R[y] / D[y]) with
/// u ~ Uniform[0, 1), R starting at the target distribution and D at the
/// position's original draft distribution. A rejection updates
/// R <- normalize(max(R - D, 0)) and D <- D without y (renormalized); when D is
/// exhausted the loop stops. An acceptance descends into the branch. The pass
/// ends with a bonus token: from R when every branch was rejected, or from the
/// target distribution at an accepted node that has no branches.
///
/// Uniform draws come from a stream that depends only on `seed` and visit order.
/// Throws std::out_of_range when a visited position has no target distribution.
VerifyResult verify_tree(const TokenTree& tree, const PositionDists& target_dists, std::uint64_t seed);

/// Same procedure with caller-supplied uniforms, consumed one per branch test
/// and one for the bonus token.
VerifyResult verify_tree_with(const TokenTree& tree, const PositionDists& target_dists,
                              const std::function<double()>& next_uniform);

}  // namespace spectree
