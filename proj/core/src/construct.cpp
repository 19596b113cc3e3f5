#include "spectree/construct.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <stdexcept>
#include <string>

namespace spectree {

namespace {

std::vector<TokenId> context_for(std::span<const TokenId> prefix, const TokenTree& tree, NodeId owner) {
  std::vector<TokenId> context(prefix.begin(), prefix.end());
  if (owner != kRootId) {
    const auto path = tree.path_tokens(owner);
    context.insert(context.end(), path.begin(), path.end());
  }
  return context;
}

struct LayerEntry {
  NodeId owner;
  double value;
};

}  // namespace

bool slot_before(double value_a, std::span<const int> path_a, double value_b, std::span<const int> path_b) noexcept {
  if (value_a != value_b) return value_a > value_b;
  if (path_a.size() != path_b.size()) return path_a.size() < path_b.size();
  return std::lexicographical_compare(path_a.begin(), path_a.end(), path_b.begin(), path_b.end());
}

void CostParams::validate() const {
  if (!(draft_step >= 0.0) || !(target_step >= 0.0) || !(per_node_overhead >= 0.0)) {
    throw std::invalid_argument("CostParams: all costs must be >= 0");
  }
}

FixedBuild build_tree_fixed_traced(const LanguageModel& draft, std::span<const TokenId> prefix,
                                   std::size_t budget, std::uint64_t seed) {
  if (budget == 0) throw std::invalid_argument("build_tree_fixed: budget must be >= 1");

  FixedBuild out{TokenTree(prefix.size()), {}, 0};
  TokenTree& tree = out.tree;
  std::priority_queue<HeapEntry, std::vector<HeapEntry>, HeapEntryLess> heap;

  tree.set_position(kRootId, draft.next_distribution(prefix));
  ++out.draft_calls;
  heap.push({1.0, tree.position(kRootId).draft_full, kRootId, tree.position(kRootId).tag, 0, {0}});

  while (tree.size() < budget && !heap.empty()) {
    HeapEntry entry = heap.top();
    heap.pop();
    out.popped_values.push_back(entry.value);

    const RandomKey key(seed, entry.position_tag, entry.sampling_index);
    const TokenId y = sample(entry.residual, key.uniform());
    const double r = entry.residual[y];
    const NodeId id = tree.add_node(entry.owner, y, entry.value);

    Categorical rest = remove_and_renorm(entry.residual, y);
    if (!rest.is_zero()) {
      std::vector<int> sibling_path = entry.slot_path;
      ++sibling_path.back();
      heap.push({entry.value * (1.0 - r), std::move(rest), entry.owner, entry.position_tag,
                 entry.sampling_index + 1, std::move(sibling_path)});
    }

    tree.set_position(id, draft.next_distribution(context_for(prefix, tree, id)));
    ++out.draft_calls;
    std::vector<int> child_path = std::move(entry.slot_path);
    child_path.push_back(0);
    heap.push({entry.value * r, tree.position(id).draft_full, id, tree.position(id).tag, 0, std::move(child_path)});
  }
  return out;
}

TokenTree build_tree_fixed(const LanguageModel& draft, std::span<const TokenId> prefix, std::size_t budget,
                           std::uint64_t seed) {
  return build_tree_fixed_traced(draft, prefix, budget, seed).tree;
}

ThresholdBuild build_tree_threshold_traced(const LanguageModel& draft, std::span<const TokenId> prefix,
                                           double threshold, std::size_t size_cap, std::uint64_t seed) {
  if (!(threshold > 0.0) || threshold > 1.0) throw std::invalid_argument("build_tree_threshold: need 0 < C <= 1");
  if (size_cap == 0) throw std::invalid_argument("build_tree_threshold: size_cap must be >= 1");

  ThresholdBuild out{TokenTree(prefix.size()), 0, 0};
  TokenTree& tree = out.tree;
  std::vector<LayerEntry> layer{{kRootId, 1.0}};

  // Order in which nodes would be kept under the cap.
  std::vector<std::vector<int>> slot_paths;
  const auto keep_before = [&tree, &slot_paths](NodeId a, NodeId b) {
    return slot_before(tree.node(a).value, slot_paths[static_cast<std::size_t>(a)], tree.node(b).value,
                       slot_paths[static_cast<std::size_t>(b)]);
  };
  const auto refresh_paths = [&tree, &slot_paths] {
    for (auto id = static_cast<NodeId>(slot_paths.size()); id < static_cast<NodeId>(tree.size()); ++id) {
      slot_paths.push_back(tree.slot_path(id));
    }
  };

  while (!layer.empty()) {
    ++out.layers;
    std::vector<LayerEntry> next;
    for (const LayerEntry& entry : layer) {
      tree.set_position(entry.owner, draft.next_distribution(context_for(prefix, tree, entry.owner)));
      ++out.draft_calls;
      Categorical residual = tree.position(entry.owner).draft_full;
      const std::uint64_t tag = tree.position(entry.owner).tag;
      double v = entry.value;
      for (std::uint64_t k = 0; v >= threshold && !residual.is_zero(); ++k) {
        const TokenId y = sample(residual, RandomKey(seed, tag, k).uniform());
        const double r = residual[y];
        const NodeId id = tree.add_node(entry.owner, y, v);
        const double child_value = v * r;
        if (child_value >= threshold) next.push_back({id, child_value});
        v = v * (1.0 - r);
        residual = remove_and_renorm(residual, y);
      }
    }

    // Once the cap is reachable, entries whose descendants cannot beat the
    // cap-th node only produce nodes that would be truncated anyway. A
    // descendant has value <= the entry's value and depth > the owner's depth.
    if (tree.size() >= size_cap && !next.empty()) {
      refresh_paths();
      std::vector<NodeId> ids(tree.size());
      std::iota(ids.begin(), ids.end(), 0);
      std::nth_element(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(size_cap - 1), ids.end(), keep_before);
      const TreeNode& cut = tree.node(ids[size_cap - 1]);
      std::erase_if(next, [&](const LayerEntry& e) {
        return e.value < cut.value || (e.value == cut.value && tree.node(e.owner).depth + 1 > cut.depth);
      });
    }
    layer = std::move(next);
  }

  if (tree.size() > size_cap) {
    refresh_paths();
    std::vector<NodeId> ids(tree.size());
    std::iota(ids.begin(), ids.end(), 0);
    std::sort(ids.begin(), ids.end(), keep_before);
    std::vector<bool> keep(tree.size(), false);
    for (std::size_t i = 0; i < size_cap; ++i) keep[static_cast<std::size_t>(ids[i])] = true;
    tree = tree.restricted(keep);
  }
  return out;
}

TokenTree build_tree_threshold(const LanguageModel& draft, std::span<const TokenId> prefix, double threshold,
                               std::size_t size_cap, std::uint64_t seed) {
  return build_tree_threshold_traced(draft, prefix, threshold, size_cap, seed).tree;
}

double expected_accepted(const TokenTree& tree, std::span<const double> sd) {
  if (sd.size() != tree.size()) {
    throw std::invalid_argument("expected_accepted: need one acceptance probability per node");
  }
  for (double p : sd) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("expected_accepted: probability outside [0, 1]");
  }
  // accepted[u] = P(every node on the path to u is accepted). Nodes are in
  // creation order, so parents and previous siblings are already filled in.
  std::vector<double> accepted(tree.size(), 0.0);
  double total = 0.0;
  for (const TreeNode& n : tree.nodes()) {
    double reach = n.parent == kRootId ? 1.0 : accepted[static_cast<std::size_t>(n.parent)];
    for (NodeId s : tree.previous_siblings(n.id)) reach *= 1.0 - sd[static_cast<std::size_t>(s)];
    accepted[static_cast<std::size_t>(n.id)] = reach * sd[static_cast<std::size_t>(n.id)];
    total += accepted[static_cast<std::size_t>(n.id)];
  }
  return total;
}

double expected_accepted_draft_approx(const TokenTree& tree) {
  std::vector<double> sd;
  sd.reserve(tree.size());
  for (const TreeNode& n : tree.nodes()) sd.push_back(std::clamp(n.sampling_prob, 0.0, 1.0));
  return expected_accepted(tree, sd);
}

double estimate_latency(std::size_t tree_size, std::size_t tree_depth, double accepted_per_step,
                        const CostParams& costs, LatencyMode mode) {
  if (!(accepted_per_step > 0.0)) throw std::invalid_argument("estimate_latency: accepted per step must be > 0");
  if (tree_size == 0) throw std::invalid_argument("estimate_latency: tree size must be >= 1");
  if (tree_depth == 0 || tree_depth > tree_size) {
    throw std::invalid_argument("estimate_latency: need 1 <= depth <= size");
  }
  costs.validate();
  const double n = static_cast<double>(tree_size);
  const double draft_steps = mode == LatencyMode::kGreedy ? n : static_cast<double>(tree_depth);
  const double construction = costs.per_node_overhead * n * std::log2(n);
  return (construction + costs.target_step + draft_steps * costs.draft_step) / accepted_per_step;
}

}  // namespace spectree
