#include "spectree/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "spectree/parallel.hpp"
#include "spectree/verify.hpp"

namespace spectree {

NodeId WeightedTree::add_child(NodeId p, double cond) {
  if (p < 0 || static_cast<std::size_t>(p) >= size()) throw std::out_of_range("WeightedTree: unknown parent");
  parent.push_back(p);
  conditional.push_back(cond);
  return static_cast<NodeId>(size() - 1);
}

std::vector<double> WeightedTree::weights() const {
  std::vector<double> w(size(), 1.0);
  for (std::size_t i = 1; i < size(); ++i) w[i] = w[static_cast<std::size_t>(parent[i])] * conditional[i];
  return w;
}

std::vector<std::vector<NodeId>> WeightedTree::children() const {
  std::vector<std::vector<NodeId>> kids(size());
  for (std::size_t i = 1; i < size(); ++i) kids[static_cast<std::size_t>(parent[i])].push_back(static_cast<NodeId>(i));
  return kids;
}

void WeightedTree::validate() const {
  if (parent.empty() || parent.size() != conditional.size() || parent[0] != -1 || conditional[0] != 1.0) {
    throw std::invalid_argument("WeightedTree: node 0 must be the root with conditional 1");
  }
  std::vector<double> mass(size(), 0.0);
  for (std::size_t i = 1; i < size(); ++i) {
    if (parent[i] < 0 || parent[i] >= static_cast<NodeId>(i)) {
      throw std::invalid_argument("WeightedTree: parent must precede child");
    }
    if (!(conditional[i] >= 0.0 && conditional[i] <= 1.0)) {
      throw std::invalid_argument("WeightedTree: conditional outside [0, 1]");
    }
    mass[static_cast<std::size_t>(parent[i])] += conditional[i];
  }
  for (double m : mass) {
    if (m > 1.0 + 1e-12) throw std::invalid_argument("WeightedTree: children conditionals sum above 1");
  }
}

WeightedTree random_weighted_tree(std::size_t k, std::size_t depth, std::uint64_t seed) {
  if (k == 0) throw std::invalid_argument("random_weighted_tree: k must be >= 1");
  WeightedTree tree;
  CounterEngine engine(hash_combine(seed, 0x77747265ULL));
  std::vector<NodeId> level{0};
  for (std::size_t d = 0; d < depth; ++d) {
    std::vector<NodeId> next;
    for (NodeId p : level) {
      const std::size_t count = 1 + static_cast<std::size_t>(to_unit_interval(engine()) * static_cast<double>(k));
      // count + 1 exponential spacings: the extra one keeps the total below 1.
      std::vector<double> e(count + 1);
      double total = 0.0;
      for (double& x : e) {
        x = -std::log1p(-to_unit_interval(engine()));
        total += x;
      }
      for (std::size_t c = 0; c < count; ++c) next.push_back(tree.add_child(p, e[c] / total));
    }
    level = std::move(next);
  }
  return tree;
}

namespace {

struct SlotBuilder {
  const LanguageModel& draft;
  std::span<const TokenId> prefix;
  std::uint64_t seed;
  std::size_t max_depth;
  WeightedTree out;

  // Adds the sampling slot at a position (tag, path) whose current residual is
  // `residual`, reached with conditional `cond` from `parent`.
  void add(NodeId parent, double cond, std::size_t depth, const std::vector<TokenId>& path, std::uint64_t tag,
           const Categorical& residual, std::uint64_t sampling_index) {
    const NodeId self = parent < 0 ? 0 : out.add_child(parent, cond);
    const TokenId y = sample(residual, RandomKey(seed, tag, sampling_index).uniform());
    const double r = residual[y];
    if (depth == max_depth) return;

    const Categorical rest = remove_and_renorm(residual, y);
    if (!rest.is_zero()) add(self, 1.0 - r, depth + 1, path, tag, rest, sampling_index + 1);

    std::vector<TokenId> child_path = path;
    child_path.push_back(y);
    std::vector<TokenId> context(prefix.begin(), prefix.end());
    context.insert(context.end(), child_path.begin(), child_path.end());
    add(self, r, depth + 1, child_path, extend_position_tag(tag, y), draft.next_distribution(context), 0);
  }
};

}  // namespace

WeightedTree sampling_slot_tree(const LanguageModel& draft, std::span<const TokenId> prefix, std::uint64_t seed,
                                std::size_t max_depth) {
  SlotBuilder builder{draft, prefix, seed, max_depth, WeightedTree{}};
  builder.add(-1, 1.0, 0, {}, root_position_tag(), draft.next_distribution(prefix), 0);
  return std::move(builder.out);
}

double canonical_weight_sum(std::vector<double> weights) {
  std::sort(weights.begin(), weights.end());
  double total = 0.0;
  for (double w : weights) total += w;
  return total;
}

SubtreeSearchResult brute_force_optimal_subtree(const WeightedTree& tree, std::size_t max_nodes, std::size_t cap) {
  if (max_nodes == 0) throw std::invalid_argument("brute_force_optimal_subtree: max_nodes must be >= 1");
  tree.validate();
  const auto w = tree.weights();
  const auto kids = tree.children();

  SubtreeSearchResult best;
  std::vector<NodeId> chosen{0};
  std::vector<NodeId> frontier(kids[0].begin(), kids[0].end());
  bool have_best = false;

  const auto record = [&] {
    if (++best.enumerated_count > cap) {
      throw std::length_error("brute_force_optimal_subtree: enumeration cap exceeded");
    }
    std::vector<double> ws;
    ws.reserve(chosen.size());
    for (NodeId id : chosen) ws.push_back(w[static_cast<std::size_t>(id)]);
    const double total = canonical_weight_sum(std::move(ws));
    if (!have_best || total > best.best_weight) {
      have_best = true;
      best.best_weight = total;
      best.best_subtree = chosen;
    }
  };

  // Each connected subtree is produced once: extensions only use frontier
  // entries after the last one taken, and the frontier only grows at the back.
  const auto extend = [&](auto&& self, std::size_t from) -> void {
    if (chosen.size() == max_nodes) return;
    for (std::size_t j = from; j < frontier.size(); ++j) {
      const NodeId v = frontier[j];
      const auto& vk = kids[static_cast<std::size_t>(v)];
      chosen.push_back(v);
      frontier.insert(frontier.end(), vk.begin(), vk.end());
      record();
      self(self, j + 1);
      frontier.resize(frontier.size() - vk.size());
      chosen.pop_back();
    }
  };
  record();
  extend(extend, 0);
  std::sort(best.best_subtree.begin(), best.best_subtree.end());
  return best;
}

SubtreeSearchResult greedy_subtree(const WeightedTree& tree, std::size_t max_nodes) {
  if (max_nodes == 0) throw std::invalid_argument("greedy_subtree: max_nodes must be >= 1");
  tree.validate();
  const auto w = tree.weights();
  const auto kids = tree.children();

  SubtreeSearchResult result;
  result.best_subtree = {0};
  result.candidate_weights = {w[0]};
  std::vector<NodeId> frontier(kids[0].begin(), kids[0].end());
  while (result.best_subtree.size() < max_nodes && !frontier.empty()) {
    auto pick = frontier.begin();
    for (auto it = frontier.begin(); it != frontier.end(); ++it) {
      const double a = w[static_cast<std::size_t>(*it)];
      const double b = w[static_cast<std::size_t>(*pick)];
      if (a > b || (a == b && *it < *pick)) pick = it;
    }
    const NodeId v = *pick;
    frontier.erase(pick);
    result.best_subtree.push_back(v);
    result.candidate_weights.push_back(w[static_cast<std::size_t>(v)]);
    const auto& vk = kids[static_cast<std::size_t>(v)];
    frontier.insert(frontier.end(), vk.begin(), vk.end());
  }
  result.enumerated_count = result.best_subtree.size();
  result.best_weight = canonical_weight_sum(result.candidate_weights);
  std::sort(result.best_subtree.begin(), result.best_subtree.end());
  return result;
}

namespace {

void accumulate_first_token(const Categorical& residual, const Categorical& draft, std::vector<TokenId>& drawn,
                            double mass, const BranchPolicy& policy, std::vector<double>& out) {
  if (draft.is_zero() || !policy(drawn)) {
    for (std::size_t x = 0; x < out.size(); ++x) out[x] += mass * residual.probs()[x];
    return;
  }
  const Categorical next_residual = residual_target(residual, draft);
  for (std::size_t yi = 0; yi < draft.size(); ++yi) {
    const auto y = static_cast<TokenId>(yi);
    const double d = draft[y];
    if (d <= 0.0) continue;
    const double accept = std::min(1.0, residual[y] / d);
    out[yi] += mass * d * accept;
    const double reject = mass * d * (1.0 - accept);
    if (reject <= 0.0) continue;
    if (next_residual.is_zero()) {
      throw std::logic_error("exact_verify_distribution: residual vanished with rejection mass left");
    }
    drawn.push_back(y);
    accumulate_first_token(next_residual, remove_and_renorm(draft, y), drawn, reject, policy, out);
    drawn.pop_back();
  }
}

}  // namespace

std::vector<double> exact_verify_distribution(const Categorical& draft, const Categorical& target,
                                              const BranchPolicy& policy) {
  if (draft.size() != target.size() || draft.is_zero() || target.is_zero()) {
    throw std::invalid_argument("exact_verify_distribution: need non-zero distributions of equal size");
  }
  std::vector<double> out(target.size(), 0.0);
  std::vector<TokenId> drawn;
  accumulate_first_token(target, draft, drawn, 1.0, policy, out);
  return out;
}

std::vector<double> exact_verify_distribution(const Categorical& draft, const Categorical& target,
                                              std::size_t max_branches) {
  return exact_verify_distribution(draft, target,
                                   [max_branches](std::span<const TokenId> drawn) { return drawn.size() < max_branches; });
}

std::vector<double> fixed_tree_first_token_law(const TokenTree& tree, const PositionDists& targets) {
  if (targets.empty() || targets[0].is_zero()) throw std::invalid_argument("fixed_tree_first_token_law: no root target");
  const Categorical& target = targets[0];
  std::vector<double> out(target.size(), 0.0);
  const auto& branches = tree.children(kRootId);
  if (branches.empty()) {
    for (std::size_t x = 0; x < out.size(); ++x) out[x] = target.probs()[x];
    return out;
  }
  Categorical draft = tree.position(kRootId).draft_full;
  Categorical residual = target;
  double mass = 1.0;
  for (NodeId child : branches) {
    const TokenId y = tree.node(child).token;
    const double d = draft[y];
    const double accept = d > 0.0 ? std::min(1.0, residual[y] / d) : 0.0;
    out[static_cast<std::size_t>(y)] += mass * accept;
    mass *= 1.0 - accept;
    if (mass <= 0.0) return out;
    residual = residual_target(residual, draft);
    draft = remove_and_renorm(draft, y);
    if (residual.is_zero()) throw std::logic_error("fixed_tree_first_token_law: residual vanished");
    if (draft.is_zero()) break;
  }
  for (std::size_t x = 0; x < out.size(); ++x) out[x] += mass * residual.probs()[x];
  return out;
}

std::vector<double> true_acceptance_probs(const TokenTree& tree, const PositionDists& targets) {
  if (targets.size() != tree.size() + 1) {
    throw std::invalid_argument("true_acceptance_probs: need one target distribution per position");
  }
  std::vector<double> sd(tree.size(), 0.0);
  for (NodeId owner = kRootId; owner < static_cast<NodeId>(tree.size()); ++owner) {
    const auto& branches = tree.children(owner);
    if (branches.empty()) continue;
    Categorical draft = tree.position(owner).draft_full;
    Categorical residual = targets[slot_of(owner)];
    for (NodeId child : branches) {
      const TokenId y = tree.node(child).token;
      const double d = draft[y];
      sd[static_cast<std::size_t>(child)] = d > 0.0 ? std::min(1.0, residual[y] / d) : 0.0;
      residual = residual_target(residual, draft);
      draft = remove_and_renorm(draft, y);
      // Later siblings are unreachable once the residual is gone (R == D means
      // the previous test accepted surely); their probability stays 0.
      if (residual.is_zero() || draft.is_zero()) break;
    }
  }
  return sd;
}

OutputLawEstimate monte_carlo_output_distribution(const LanguageModel& target, const LanguageModel& draft,
                                                  std::span<const TokenId> prompt, const GenConfig& config,
                                                  std::size_t trials) {
  if (trials == 0) throw std::invalid_argument("monte_carlo_output_distribution: trials must be >= 1");
  GenConfig step = config;
  step.gen_len = 1;
  step.prefix_len = prompt.size();
  step.collect_trace = false;
  step.validate();

  std::vector<TokenId> first(trials);
  parallel_for(trials, [&](std::size_t i) {
    GenConfig local = step;
    local.seed = hash_combine(config.seed, i);
    first[i] = generate(target, draft, prompt, local).tokens.front();
  });

  OutputLawEstimate est;
  est.trials = trials;
  est.target = target.with_temperature(config.target_temp).next_distribution(prompt);
  est.empirical.assign(target.vocab_size(), 0.0);
  for (TokenId t : first) est.empirical[static_cast<std::size_t>(t)] += 1.0;
  double l1 = 0.0;
  for (std::size_t x = 0; x < est.empirical.size(); ++x) {
    est.empirical[x] /= static_cast<double>(trials);
    l1 += std::abs(est.empirical[x] - est.target.probs()[x]);
  }
  est.total_variation = 0.5 * l1;
  return est;
}

MeanEstimate monte_carlo_expected_accepted(const LanguageModel& target, std::span<const TokenId> prefix,
                                           const TokenTree& tree, std::size_t trials, std::uint64_t seed) {
  if (trials < 2) throw std::invalid_argument("monte_carlo_expected_accepted: trials must be >= 2");
  const PositionDists targets = target_distributions_for_tree(target, prefix, tree);
  std::vector<double> accepted(trials);
  parallel_for(trials, [&](std::size_t i) {
    accepted[i] = static_cast<double>(verify_tree(tree, targets, hash_combine(seed, i)).accepted_tree_tokens());
  });
  double sum = 0.0;
  for (double a : accepted) sum += a;
  const double n = static_cast<double>(trials);
  const double mean = sum / n;
  double ss = 0.0;
  for (double a : accepted) ss += (a - mean) * (a - mean);
  return {mean, std::sqrt(ss / (n - 1.0) / n), trials};
}

}  // namespace spectree
