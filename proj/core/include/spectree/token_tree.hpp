#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "spectree/categorical.hpp"

namespace spectree {

using NodeId = std::int32_t;

/// The synthetic root: the position right after the prefix. Never a node.
inline constexpr NodeId kRootId = -1;

/// Index of a position owner in position-indexed tables (root first).
constexpr std::size_t slot_of(NodeId owner) noexcept { return static_cast<std::size_t>(owner + 1); }

struct TreeNode {
  NodeId id = 0;
  NodeId parent = kRootId;
  TokenId token = 0;
  int sibling_index = 0;  // samplings that preceded this one at the same position
  int depth = 1;
  /// Estimated probability that this sampling is reached during verification
  /// (the heap value it was popped with).
  double value = 1.0;
  /// Probability of the token under the position's original draft distribution.
  double draft_prob = 0.0;
  /// Probability of the token under the residual it was actually sampled from.
  double sampling_prob = 0.0;
};

/// Sampling state of one tree position (the slot after `owner`).
struct PositionState {
  NodeId owner = kRootId;
  std::uint64_t tag = 0;
  Categorical draft_full;
  std::vector<TokenId> sampled;
  std::vector<NodeId> children;  // parallel to `sampled`
  Categorical residual;          // draft_full with `sampled` removed
};

/// A speculative token tree. Nodes are stored in creation order, so a parent
/// always has a smaller id than its children and siblings are ordered by
/// sampling order.
class TokenTree {
 public:
  explicit TokenTree(std::size_t prefix_len = 0) : prefix_len_(prefix_len) { positions_.emplace_back(); }

  std::size_t prefix_len() const noexcept { return prefix_len_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  bool empty() const noexcept { return nodes_.empty(); }
  int depth() const noexcept { return depth_; }

  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
  const TreeNode& node(NodeId id) const;

  /// Attaches the draft distribution for the position after `owner`. The
  /// owner must exist and the position must not be set yet.
  void set_position(NodeId owner, Categorical draft_full);
  bool has_position(NodeId owner) const noexcept;
  const PositionState& position(NodeId owner) const;

  /// Appends a node sampled at the position after `owner`. The token must have
  /// positive mass in that position's current residual and must not have been
  /// sampled there already.
  NodeId add_node(NodeId owner, TokenId token, double value);

  /// Reach probability of the next sampling at `owner`'s position, following
  /// the heap recurrence: parent value * parent sampling prob * prod (1 - r)
  /// over the samplings already made there.
  double next_sampling_value(NodeId owner) const;

  /// Root-to-node path, excluding the synthetic root; length == depth.
  std::vector<NodeId> ancestors(NodeId id) const;
  std::vector<NodeId> previous_siblings(NodeId id) const;
  std::vector<TokenId> path_tokens(NodeId id) const;
  /// Sibling index of every node on the root-to-node path. Names the sampling
  /// slot independently of the order in which the tree was built.
  std::vector<int> slot_path(NodeId id) const;
  const std::vector<NodeId>& children(NodeId owner) const;

  /// Copy restricted to `keep` (which must be closed under parent and previous
  /// sibling). Ids are renumbered densely preserving creation order.
  TokenTree restricted(const std::vector<bool>& keep) const;

 private:
  PositionState& position_mut(NodeId owner);

  std::size_t prefix_len_;
  std::vector<TreeNode> nodes_;
  std::vector<std::optional<PositionState>> positions_;  // indexed by slot_of
  int depth_ = 0;
};

}  // namespace spectree
