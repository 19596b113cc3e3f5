#include "spectree/verify.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace spectree {

namespace {

const Categorical& target_at(const PositionDists& dists, NodeId owner) {
  const std::size_t slot = slot_of(owner);
  if (slot >= dists.size() || dists[slot].empty()) {
    throw std::out_of_range("verify_tree: no target distribution for position " + std::to_string(owner));
  }
  if (dists[slot].is_zero()) throw std::invalid_argument("verify_tree: target distribution has no mass");
  return dists[slot];
}

}  // namespace

VerifyResult verify_tree(const TokenTree& tree, const PositionDists& target_dists, std::uint64_t seed) {
  UniformStream stream(hash_combine(seed, 0x7665726966ULL));
  return verify_tree_with(tree, target_dists, [&stream] { return stream.next(); });
}

VerifyResult verify_tree_with(const TokenTree& tree, const PositionDists& target_dists,
                              const std::function<double()>& next_uniform) {
  VerifyResult result;
  NodeId current = kRootId;

  while (true) {
    const Categorical& target = target_at(target_dists, current);
    const auto& branches = tree.children(current);
    if (branches.empty()) {
      result.bonus_token = sample(target, next_uniform());
      result.bonus_from_residual = false;
      break;
    }

    const PositionState& pos = tree.position(current);
    Categorical draft = pos.draft_full;
    Categorical residual = target;
    NodeId accepted_child = kRootId;

    for (NodeId child : branches) {
      const TokenId y = tree.node(child).token;
      const double u = next_uniform();
      const double d = draft[y];
      const double ratio = d > 0.0 ? std::min(1.0, residual[y] / d) : 0.0;
      // Strict comparison keeps zero-ratio branches unreachable when u == 0.
      const bool accept = u < ratio;
      result.trace.push_back({child, u, d, ratio, accept});
      if (accept) {
        accepted_child = child;
        break;
      }
      residual = residual_target(residual, draft);
      // A rejection has positive probability only when R != D, so the positive
      // part of R - D cannot vanish.
      if (residual.is_zero()) throw std::logic_error("verify_tree: residual target vanished after a rejection");
      draft = remove_and_renorm(draft, y);
      if (draft.is_zero()) break;
    }

    if (accepted_child == kRootId) {
      result.bonus_token = sample(residual, next_uniform());
      result.bonus_from_residual = true;
      break;
    }
    result.accepted.push_back(tree.node(accepted_child).token);
    result.accepted_node_ids.push_back(accepted_child);
    current = accepted_child;
  }

  result.accepted.push_back(result.bonus_token);
  return result;
}

}  // namespace spectree
