#include "spectree/token_tree.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace spectree {

const TreeNode& TokenTree::node(NodeId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
    throw std::out_of_range("TokenTree: no node " + std::to_string(id));
  }
  return nodes_[static_cast<std::size_t>(id)];
}

void TokenTree::set_position(NodeId owner, Categorical draft_full) {
  if (owner != kRootId) node(owner);
  if (draft_full.empty() || draft_full.is_zero()) {
    throw std::invalid_argument("TokenTree::set_position: draft distribution has no mass");
  }
  auto& slot = positions_.at(slot_of(owner));
  if (slot) throw std::logic_error("TokenTree::set_position: position already set");
  PositionState state;
  state.owner = owner;
  state.tag = owner == kRootId ? root_position_tag()
                               : extend_position_tag(position(node(owner).parent).tag, node(owner).token);
  state.residual = draft_full;
  state.draft_full = std::move(draft_full);
  slot = std::move(state);
}

bool TokenTree::has_position(NodeId owner) const noexcept {
  const auto s = slot_of(owner);
  return s < positions_.size() && positions_[s].has_value();
}

const PositionState& TokenTree::position(NodeId owner) const {
  if (!has_position(owner)) throw std::out_of_range("TokenTree: position " + std::to_string(owner) + " not set");
  return *positions_[slot_of(owner)];
}

PositionState& TokenTree::position_mut(NodeId owner) {
  if (!has_position(owner)) throw std::out_of_range("TokenTree: position " + std::to_string(owner) + " not set");
  return *positions_[slot_of(owner)];
}

NodeId TokenTree::add_node(NodeId owner, TokenId token, double value) {
  PositionState& pos = position_mut(owner);
  if (token < 0 || static_cast<std::size_t>(token) >= pos.draft_full.size()) {
    throw std::out_of_range("TokenTree::add_node: token outside vocabulary");
  }
  if (std::find(pos.sampled.begin(), pos.sampled.end(), token) != pos.sampled.end()) {
    throw std::invalid_argument("TokenTree::add_node: token " + std::to_string(token) +
                                " already sampled at this position");
  }
  if (pos.residual.is_zero() || pos.residual[token] <= 0.0) {
    throw std::invalid_argument("TokenTree::add_node: token has no mass in the position's residual");
  }
  TreeNode n;
  n.id = static_cast<NodeId>(nodes_.size());
  n.parent = owner;
  n.token = token;
  n.sibling_index = static_cast<int>(pos.sampled.size());
  n.depth = owner == kRootId ? 1 : node(owner).depth + 1;
  n.value = value;
  n.draft_prob = pos.draft_full[token];
  n.sampling_prob = pos.residual[token];

  pos.sampled.push_back(token);
  pos.children.push_back(n.id);
  pos.residual = remove_and_renorm(pos.residual, token);

  depth_ = std::max(depth_, n.depth);
  nodes_.push_back(n);
  positions_.emplace_back();
  return n.id;
}

double TokenTree::next_sampling_value(NodeId owner) const {
  double v = 1.0;
  if (owner != kRootId) {
    const TreeNode& p = node(owner);
    v = p.value * p.sampling_prob;
  }
  if (has_position(owner)) {
    for (NodeId c : position(owner).children) v *= 1.0 - node(c).sampling_prob;
  }
  return v;
}

std::vector<NodeId> TokenTree::ancestors(NodeId id) const {
  std::vector<NodeId> path;
  for (NodeId cur = id; cur != kRootId; cur = node(cur).parent) path.push_back(cur);
  std::reverse(path.begin(), path.end());
  return path;
}

std::vector<NodeId> TokenTree::previous_siblings(NodeId id) const {
  const TreeNode& n = node(id);
  const auto& kids = position(n.parent).children;
  return {kids.begin(), kids.begin() + n.sibling_index};
}

std::vector<int> TokenTree::slot_path(NodeId id) const {
  std::vector<int> path;
  for (NodeId cur = id; cur != kRootId; cur = node(cur).parent) path.push_back(node(cur).sibling_index);
  std::reverse(path.begin(), path.end());
  return path;
}

std::vector<TokenId> TokenTree::path_tokens(NodeId id) const {
  std::vector<TokenId> tokens;
  for (NodeId cur = id; cur != kRootId; cur = node(cur).parent) tokens.push_back(node(cur).token);
  std::reverse(tokens.begin(), tokens.end());
  return tokens;
}

const std::vector<NodeId>& TokenTree::children(NodeId owner) const {
  static const std::vector<NodeId> kNone;
  return has_position(owner) ? position(owner).children : kNone;
}

TokenTree TokenTree::restricted(const std::vector<bool>& keep) const {
  if (keep.size() != nodes_.size()) throw std::invalid_argument("TokenTree::restricted: mask size mismatch");
  std::vector<NodeId> remap(nodes_.size(), kRootId);
  TokenTree out(prefix_len_);
  if (has_position(kRootId)) out.set_position(kRootId, position(kRootId).draft_full);
  for (const TreeNode& n : nodes_) {
    if (!keep[static_cast<std::size_t>(n.id)]) continue;
    const NodeId owner = n.parent == kRootId ? kRootId : remap[static_cast<std::size_t>(n.parent)];
    if (n.parent != kRootId && owner == kRootId) {
      throw std::invalid_argument("TokenTree::restricted: kept node has a dropped parent");
    }
    if (out.position(owner).sampled.size() != static_cast<std::size_t>(n.sibling_index)) {
      throw std::invalid_argument("TokenTree::restricted: kept node has a dropped previous sibling");
    }
    const NodeId id = out.add_node(owner, n.token, n.value);
    remap[static_cast<std::size_t>(n.id)] = id;
    if (has_position(n.id)) out.set_position(id, position(n.id).draft_full);
  }
  return out;
}

}  // namespace spectree
