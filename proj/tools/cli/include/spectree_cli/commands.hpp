#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "spectree_cli/config.hpp"
#include "spectree_cli/suites.hpp"

namespace spectree::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitUsage = 2;

/// Prompt used for a run: prefix_len tokens sampled from the target at
/// temperature 1, keyed by `seed`.
std::vector<TokenId> make_prompt(const LanguageModel& target, std::size_t length, std::uint64_t seed);

/// Writes metrics.json and steps.csv to config.output.dir (when set) and a
/// summary to `out` in config.output.format.
int cmd_generate(const RunConfig& config, std::ostream& out);

struct BenchSweep {
  std::vector<std::string> structures{"dynamic", "chain"};
  std::vector<std::size_t> budgets{64};
  std::vector<double> thresholds;
  std::vector<double> temps;   // empty: the config's target temperature
  std::vector<double> sigmas;  // empty: the config's noise_sigma
  std::size_t seeds = 3;
};

/// One CSV/JSON row per (noise_sigma, temp, structure, budget or threshold)
/// cell, averaged over `seeds` model seeds. Throws ConfigError on an empty
/// sweep.
int cmd_bench(const RunConfig& config, const BenchSweep& sweep, std::ostream& out);

/// Runs one oracle suite and prints its JSON report; exit 1 on failure.
int cmd_oracle(const std::string& suite, const SuiteOptions& options, const OutputSpec& output, std::ostream& out);

struct MaskParams {
  std::vector<std::size_t> sizes{256};
  std::vector<std::size_t> prefixes{0};
  std::size_t block = 32;
  std::vector<std::string> orders{"original", "dfs", "hpd"};
  std::string shape = "random";  // random, chain or star
  std::size_t seeds = 20;
  std::uint64_t seed = 0;
  bool dump_grids = false;  // writes mask_<n>_<prefix>_<order>.txt for the first seed
};

int cmd_mask(const MaskParams& params, const OutputSpec& output, std::ostream& out);

struct HypothesisParams {
  std::size_t bins = 10;
  std::size_t min_events = 100000;
};

/// Generates until at least min_events branch tests were traced, then bins
/// acceptance by draft probability. The Spearman trend statistic goes to
/// `info` (and into the JSON output).
int cmd_hypothesis(const RunConfig& config, const HypothesisParams& params, std::ostream& out, std::ostream& info);

}  // namespace spectree::cli
