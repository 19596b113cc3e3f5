#include "spectree/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace spectree {

namespace {

constexpr std::uint64_t kBuildStream = 0x6275696c64ULL;
constexpr std::uint64_t kVerifyStream = 0x766572696679ULL;

std::vector<TokenId> context_for(std::span<const TokenId> prefix, const TokenTree& tree, NodeId owner) {
  std::vector<TokenId> context(prefix.begin(), prefix.end());
  if (owner != kRootId) {
    const auto path = tree.path_tokens(owner);
    context.insert(context.end(), path.begin(), path.end());
  }
  return context;
}

// Ensures the position after `owner` carries its draft distribution.
void ensure_position(TokenTree& tree, const LanguageModel& draft, std::span<const TokenId> prefix, NodeId owner) {
  if (!tree.has_position(owner)) tree.set_position(owner, draft.next_distribution(context_for(prefix, tree, owner)));
}

// One more sampling (without replacement) at `owner`'s position. Returns
// kRootId when the position's residual is exhausted.
NodeId sample_at(TokenTree& tree, const LanguageModel& draft, std::span<const TokenId> prefix, NodeId owner,
                 std::uint64_t seed) {
  ensure_position(tree, draft, prefix, owner);
  const PositionState& pos = tree.position(owner);
  if (pos.residual.is_zero()) return kRootId;
  const RandomKey key(seed, pos.tag, pos.sampled.size());
  const TokenId y = sample(pos.residual, key.uniform());
  return tree.add_node(owner, y, tree.next_sampling_value(owner));
}

void extend_chain(TokenTree& tree, const LanguageModel& draft, std::span<const TokenId> prefix, NodeId from,
                  std::size_t length, std::uint64_t seed) {
  NodeId cur = from;
  for (std::size_t i = 0; i < length; ++i) {
    const NodeId next = sample_at(tree, draft, prefix, cur, seed);
    if (next == kRootId) return;
    cur = next;
  }
}

}  // namespace

std::string to_string(Structure s) {
  switch (s) {
    case Structure::kDynamic: return "dynamic";
    case Structure::kChain: return "chain";
    case Structure::kStaticTree: return "static_tree";
    case Structure::kKChains: return "k_chains";
  }
  return "unknown";
}

std::optional<Structure> parse_structure(std::string_view name) {
  if (name == "dynamic") return Structure::kDynamic;
  if (name == "chain") return Structure::kChain;
  if (name == "static_tree") return Structure::kStaticTree;
  if (name == "k_chains") return Structure::kKChains;
  return std::nullopt;
}

void GenConfig::validate() const {
  if (gen_len < 1) throw std::invalid_argument("gen_len must be >= 1");
  if (budget.has_value() == threshold.has_value()) {
    throw std::invalid_argument("exactly one of budget and threshold must be set");
  }
  if (budget && *budget < 1) throw std::invalid_argument("budget must be >= 1");
  if (threshold && !(*threshold > 0.0 && *threshold <= 1.0)) throw std::invalid_argument("threshold must be in (0, 1]");
  if (threshold && structure != Structure::kDynamic) {
    throw std::invalid_argument("threshold construction only applies to the dynamic structure");
  }
  if (size_cap < 1) throw std::invalid_argument("size_cap must be >= 1");
  if (!(draft_temp >= 0.0) || !(target_temp >= 0.0)) throw std::invalid_argument("temperatures must be >= 0");
  if (structure == Structure::kStaticTree) {
    if (branching.empty()) throw std::invalid_argument("static_tree needs a branching vector");
    std::size_t level = 1;
    std::size_t total = 0;
    for (std::size_t b : branching) {
      if (b == 0) throw std::invalid_argument("branching factors must be >= 1");
      level *= b;
      total += level;
    }
    if (total > *budget) throw std::invalid_argument("static_tree branching exceeds the budget");
  }
  if (structure == Structure::kKChains && (k_chains == 0 || *budget < k_chains)) {
    throw std::invalid_argument("k_chains needs 1 <= k <= budget");
  }
  costs.validate();
}

void RunMetrics::finalize() {
  if (steps.empty()) {
    mean_accepted = tokens_per_modeled_second = mean_tree_size = 0.0;
    return;
  }
  double accepted = 0.0;
  double size = 0.0;
  double cost = 0.0;
  for (const StepMetrics& s : steps) {
    accepted += static_cast<double>(s.accepted);
    size += static_cast<double>(s.tree_size);
    cost += s.modeled_latency * static_cast<double>(s.accepted);
  }
  const double n = static_cast<double>(steps.size());
  mean_accepted = accepted / n;
  mean_tree_size = size / n;
  tokens_per_modeled_second = cost > 0.0 ? accepted / cost : 0.0;
}

TokenTree build_baseline_tree(Structure structure, const LanguageModel& draft, std::span<const TokenId> prefix,
                              std::size_t budget, std::span<const std::size_t> branching, std::size_t k_chains,
                              std::uint64_t seed) {
  if (budget == 0) throw std::invalid_argument("build_baseline_tree: budget must be >= 1");
  TokenTree tree(prefix.size());
  switch (structure) {
    case Structure::kDynamic:
      throw std::invalid_argument("build_baseline_tree: dynamic is not a baseline structure");
    case Structure::kChain:
      extend_chain(tree, draft, prefix, kRootId, budget, seed);
      break;
    case Structure::kKChains: {
      if (k_chains == 0 || k_chains > budget) throw std::invalid_argument("build_baseline_tree: need 1 <= k <= budget");
      const std::size_t length = budget / k_chains;
      std::vector<NodeId> heads;
      for (std::size_t i = 0; i < k_chains; ++i) {
        const NodeId head = sample_at(tree, draft, prefix, kRootId, seed);
        if (head == kRootId) break;
        heads.push_back(head);
      }
      for (NodeId head : heads) extend_chain(tree, draft, prefix, head, length - 1, seed);
      break;
    }
    case Structure::kStaticTree: {
      std::size_t level_size = 1;
      std::size_t total = 0;
      for (std::size_t b : branching) {
        if (b == 0) throw std::invalid_argument("build_baseline_tree: branching factors must be >= 1");
        level_size *= b;
        total += level_size;
      }
      if (branching.empty() || total > budget) {
        throw std::invalid_argument("build_baseline_tree: static branching exceeds the budget");
      }
      std::vector<NodeId> level{kRootId};
      for (std::size_t b : branching) {
        std::vector<NodeId> next;
        for (NodeId owner : level) {
          for (std::size_t i = 0; i < b; ++i) {
            const NodeId id = sample_at(tree, draft, prefix, owner, seed);
            if (id == kRootId) break;
            next.push_back(id);
          }
        }
        level = std::move(next);
      }
      break;
    }
  }
  return tree;
}

TokenTree build_step_tree(const LanguageModel& draft, std::span<const TokenId> context, const GenConfig& config,
                          std::uint64_t seed) {
  if (config.structure == Structure::kDynamic) {
    if (config.threshold) return build_tree_threshold(draft, context, *config.threshold, config.size_cap, seed);
    return build_tree_fixed(draft, context, *config.budget, seed);
  }
  return build_baseline_tree(config.structure, draft, context, *config.budget, config.branching, config.k_chains,
                             seed);
}

GenerationResult generate(const LanguageModel& target_model, const LanguageModel& draft_model,
                          std::span<const TokenId> prompt, const GenConfig& config) {
  config.validate();
  if (prompt.size() != config.prefix_len) throw std::invalid_argument("generate: prompt length != prefix_len");
  if (target_model.vocab_size() != draft_model.vocab_size()) {
    throw std::invalid_argument("generate: draft and target vocabularies differ");
  }
  const LanguageModel target = target_model.with_temperature(config.target_temp);
  const LanguageModel draft = draft_model.with_temperature(config.draft_temp);
  const LatencyMode mode = config.structure == Structure::kDynamic && !config.threshold ? LatencyMode::kGreedy
                                                                                          : LatencyMode::kLayered;

  GenerationResult out;
  std::vector<TokenId> context(prompt.begin(), prompt.end());
  for (std::uint64_t step = 0; out.tokens.size() < config.gen_len; ++step) {
    const std::uint64_t step_key = hash_combine(config.seed, step);
    const TokenTree tree = build_step_tree(draft, context, config, hash_combine(step_key, kBuildStream));
    const PositionDists targets = target_distributions_for_tree(target, context, tree);
    const VerifyResult verdict = verify_tree(tree, targets, hash_combine(step_key, kVerifyStream));

    StepMetrics m;
    m.tree_size = tree.size();
    m.tree_depth = static_cast<std::size_t>(tree.depth());
    m.accepted = verdict.accepted.size();
    m.modeled_latency = estimate_latency(std::max<std::size_t>(m.tree_size, 1),
                                         std::clamp<std::size_t>(m.tree_depth, 1, std::max<std::size_t>(m.tree_size, 1)),
                                         static_cast<double>(m.accepted), config.costs, mode);
    out.metrics.steps.push_back(m);

    if (config.collect_trace) {
      for (const BranchTrial& t : verdict.trace) out.branch_events.push_back({t.draft_prob, t.accepted});
    }
    context.insert(context.end(), verdict.accepted.begin(), verdict.accepted.end());
    out.tokens.insert(out.tokens.end(), verdict.accepted.begin(), verdict.accepted.end());
  }
  out.tokens.resize(config.gen_len);
  out.metrics.finalize();
  return out;
}

std::vector<AcceptanceBin> acceptance_vs_draft_bins(std::span<const BranchEvent> events, std::size_t bin_count) {
  if (events.empty()) throw std::invalid_argument("acceptance_vs_draft_bins: no branch events");
  if (bin_count == 0) throw std::invalid_argument("acceptance_vs_draft_bins: bin_count must be >= 1");
  std::vector<AcceptanceBin> bins(bin_count);
  std::vector<std::size_t> accepted(bin_count, 0);
  for (std::size_t i = 0; i < bin_count; ++i) {
    bins[i].lo = static_cast<double>(i) / static_cast<double>(bin_count);
    bins[i].hi = static_cast<double>(i + 1) / static_cast<double>(bin_count);
  }
  for (const BranchEvent& e : events) {
    const double p = std::clamp(e.draft_prob, 0.0, 1.0);
    std::size_t b = std::min(bin_count - 1, static_cast<std::size_t>(p * static_cast<double>(bin_count)));
    // Guard against floating point placing p just outside [lo, hi).
    while (b > 0 && p < bins[b].lo) --b;
    while (b + 1 < bin_count && p >= bins[b + 1].lo) ++b;
    ++bins[b].count;
    if (e.accepted) ++accepted[b];
  }
  for (std::size_t i = 0; i < bin_count; ++i) {
    bins[i].acceptance_rate = bins[i].count == 0
                                  ? std::numeric_limits<double>::quiet_NaN()
                                  : static_cast<double>(accepted[i]) / static_cast<double>(bins[i].count);
  }
  return bins;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double bin_trend_spearman(std::span<const AcceptanceBin> bins) {
  std::vector<double> xs;
  std::vector<double> ys;
  for (std::size_t i = 0; i < bins.size(); ++i) {
    if (bins[i].count == 0) continue;
    xs.push_back(static_cast<double>(i));
    ys.push_back(bins[i].acceptance_rate);
  }
  if (xs.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const auto rx = average_ranks(xs);
  const auto ry = average_ranks(ys);
  const double n = static_cast<double>(rx.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace spectree
