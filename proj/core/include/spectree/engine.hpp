#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spectree/construct.hpp"
#include "spectree/lm.hpp"
#include "spectree/token_tree.hpp"
#include "spectree/verify.hpp"

namespace spectree {

enum class Structure { kDynamic, kChain, kStaticTree, kKChains };

std::string to_string(Structure s);
/// Accepts "dynamic", "chain", "static_tree", "k_chains".
std::optional<Structure> parse_structure(std::string_view name);

struct GenConfig {
  std::size_t prefix_len = 128;
  std::size_t gen_len = 128;
  std::optional<std::size_t> budget = 64;
  std::optional<double> threshold;
  std::size_t size_cap = 768;
  double draft_temp = 0.6;
  double target_temp = 0.6;
  std::uint64_t seed = 0;
  Structure structure = Structure::kDynamic;
  std::vector<std::size_t> branching{4, 2, 2, 2};  // static_tree level fan-outs
  std::size_t k_chains = 4;
  CostParams costs;
  bool collect_trace = false;

  /// Throws std::invalid_argument describing the first violated constraint.
  void validate() const;
};

struct StepMetrics {
  std::size_t tree_size = 0;
  std::size_t tree_depth = 0;
  std::size_t accepted = 0;  // includes the bonus token
  double modeled_latency = 0.0;  // per generated token, see estimate_latency
};

/// (draft probability at test time, accepted?) for one branch test.
struct BranchEvent {
  double draft_prob = 0.0;
  bool accepted = false;
};

struct RunMetrics {
  std::vector<StepMetrics> steps;
  double mean_accepted = 0.0;
  double tokens_per_modeled_second = 0.0;
  double mean_tree_size = 0.0;

  /// Recomputes the aggregates from `steps`.
  void finalize();
};

struct GenerationResult {
  std::vector<TokenId> tokens;  // exactly gen_len generated tokens
  RunMetrics metrics;
  std::vector<BranchEvent> branch_events;  // filled when collect_trace is set
};

/// Speculative generation loop: build a tree from the current context, fetch
/// target distributions for every tree position in one logical batch, verify,
/// append the accepted tokens (plus bonus). Repeats until gen_len tokens exist
/// and truncates to gen_len. Deterministic in (models, prompt, config).
GenerationResult generate(const LanguageModel& target, const LanguageModel& draft, std::span<const TokenId> prompt,
                          const GenConfig& config);

/// Builds the tree for one step according to config.structure.
TokenTree build_step_tree(const LanguageModel& draft, std::span<const TokenId> context, const GenConfig& config,
                          std::uint64_t seed);

/// Fixed-shape baselines at `budget` nodes:
///   chain      one sampling per position, `budget` deep;
///   k_chains   k sibling samplings at the root, each continued as a chain,
///              budget / k nodes per chain;
///   static_tree  level i gets branching[i] samplings (without replacement)
///              at every position of level i - 1.
/// Throws when the static tree needs more than `budget` nodes or for kDynamic.
TokenTree build_baseline_tree(Structure structure, const LanguageModel& draft, std::span<const TokenId> prefix,
                              std::size_t budget, std::span<const std::size_t> branching, std::size_t k_chains,
                              std::uint64_t seed);

struct AcceptanceBin {
  double lo = 0.0;
  double hi = 0.0;
  double acceptance_rate = 0.0;  // NaN when count == 0
  std::size_t count = 0;
};

/// Buckets branch events into equal-width bins over [0, 1] (last bin closed).
/// Throws on an empty event list or bin_count == 0.
std::vector<AcceptanceBin> acceptance_vs_draft_bins(std::span<const BranchEvent> events, std::size_t bin_count);

/// Spearman rank correlation between bin index and acceptance rate over the
/// non-empty bins (average ranks for ties). NaN with fewer than two bins.
double bin_trend_spearman(std::span<const AcceptanceBin> bins);

}  // namespace spectree
