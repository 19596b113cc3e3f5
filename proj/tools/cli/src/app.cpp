#include "spectree_cli/app.hpp"

#include <ostream>

#include <CLI11.hpp>

#include "spectree_cli/commands.hpp"

namespace spectree::cli {

namespace {

struct CommonFlags {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> format;
};

struct GenerationFlags {
  std::optional<double> target_temp;
  std::optional<double> draft_temp;
  std::optional<std::size_t> budget;
  std::optional<double> threshold;
  std::optional<std::size_t> size_cap;
  std::optional<std::size_t> gen_len;
  std::optional<std::size_t> prefix_len;
  std::optional<std::string> structure;
  std::optional<double> noise_sigma;
  std::optional<std::size_t> vocab_size;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_config) {
  if (with_config) cmd->add_option("--config", f.config, "Run config JSON file");
  cmd->add_option("--seed", f.seed, "Base seed");
  cmd->add_option("--out", f.out, "Output directory (default: stdout)");
  cmd->add_option("--format", f.format, "Output format")->check(CLI::IsMember({"csv", "json"}));
}

void add_generation(CLI::App* cmd, GenerationFlags& g) {
  cmd->add_option("--target-temp", g.target_temp, "Target sampling temperature");
  cmd->add_option("--draft-temp", g.draft_temp, "Draft sampling temperature");
  cmd->add_option("--budget", g.budget, "Node budget (fixed-size construction)");
  cmd->add_option("--threshold", g.threshold, "Value threshold C in (0, 1] (threshold construction)");
  cmd->add_option("--size-cap", g.size_cap, "Maximum tree size in threshold mode");
  cmd->add_option("--gen-len", g.gen_len, "Tokens to generate");
  cmd->add_option("--prefix-len", g.prefix_len, "Prompt length");
  cmd->add_option("--structure", g.structure, "dynamic, chain, static_tree or k_chains");
  cmd->add_option("--noise-sigma", g.noise_sigma, "Draft logit noise");
  cmd->add_option("--vocab", g.vocab_size, "Vocabulary size");
}

OutputSpec output_of(const CommonFlags& f, OutputSpec base = {}) {
  if (f.out) base.dir = *f.out;
  if (f.format) base.format = parse_format(*f.format);
  return base;
}

// Flags > config file > defaults.
RunConfig resolve(const CommonFlags& f, const GenerationFlags& g) {
  RunConfig c = f.config ? load_run_config(*f.config) : default_run_config();
  c.output = output_of(f, c.output);
  if (f.seed) c.generation.seed = *f.seed;
  if (g.target_temp) c.models.target_temp = c.generation.target_temp = *g.target_temp;
  if (g.draft_temp) c.models.draft_temp = c.generation.draft_temp = *g.draft_temp;
  if (g.threshold) {
    c.generation.threshold = *g.threshold;
    c.generation.budget.reset();
  }
  if (g.budget) {
    if (g.threshold) throw ConfigError("--budget and --threshold are mutually exclusive");
    c.generation.budget = *g.budget;
    c.generation.threshold.reset();
  }
  if (g.size_cap) c.generation.size_cap = *g.size_cap;
  if (g.gen_len) c.generation.gen_len = *g.gen_len;
  if (g.prefix_len) c.generation.prefix_len = *g.prefix_len;
  if (g.structure) {
    const auto s = parse_structure(*g.structure);
    if (!s) throw ConfigError("--structure must be dynamic, chain, static_tree or k_chains");
    c.generation.structure = *s;
  }
  if (g.noise_sigma) c.models.noise_sigma = *g.noise_sigma;
  if (g.vocab_size) c.models.vocab_size = *g.vocab_size;
  validate_run_config(c);
  return c;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{
      "Speculative decoding simulator with dynamic token trees.\n"
      "Settings resolve as: command-line flags > --config file > built-in defaults.\n"
      "Exit codes: 0 success, 1 failed check, 2 usage or config error.\n"
      "DYSPEC_THREADS caps the number of worker threads.",
      "spectree"};
  app.require_subcommand(1);

  CommonFlags gen_common;
  GenerationFlags gen_flags;
  auto* generate_cmd = app.add_subcommand("generate", "Run speculative generation; writes metrics.json and steps.csv");
  add_common(generate_cmd, gen_common, true);
  add_generation(generate_cmd, gen_flags);

  CommonFlags bench_common;
  GenerationFlags bench_flags;
  BenchSweep sweep;
  auto* bench_cmd = app.add_subcommand("bench", "Sweep structures, budgets, thresholds and temperatures");
  add_common(bench_cmd, bench_common, true);
  add_generation(bench_cmd, bench_flags);
  bench_cmd->add_option("--structures", sweep.structures, "Structures to compare")->delimiter(',');
  bench_cmd->add_option("--budgets", sweep.budgets, "Budgets for every structure")->delimiter(',');
  bench_cmd->add_option("--thresholds", sweep.thresholds, "Thresholds for the dynamic structure")->delimiter(',');
  bench_cmd->add_option("--temps", sweep.temps, "Target temperatures; the draft keeps --draft-temp")->delimiter(',');
  bench_cmd->add_option("--sigmas", sweep.sigmas, "Draft noise levels")->delimiter(',');
  bench_cmd->add_option("--seeds", sweep.seeds, "Model seeds averaged per cell");

  CommonFlags oracle_common;
  std::string suite;
  std::optional<std::size_t> instances;
  std::optional<std::size_t> trials;
  auto* oracle_cmd = app.add_subcommand("oracle", "Run an oracle suite; exit 1 when it fails");
  add_common(oracle_cmd, oracle_common, false);
  oracle_cmd->add_option("suite", suite, "unbiasedness, optimality, expectation or threshold-equivalence")
      ->required();
  oracle_cmd->add_option("--instances", instances, "Random instances");
  oracle_cmd->add_option("--trials", trials, "Monte Carlo trials");

  CommonFlags mask_common;
  MaskParams mask;
  auto* mask_cmd = app.add_subcommand("mask", "Count non-zero attention-mask blocks under node orders");
  add_common(mask_cmd, mask_common, false);
  mask_cmd->add_option("--n", mask.sizes, "Tree sizes")->delimiter(',');
  mask_cmd->add_option("--prefix", mask.prefixes, "Prefix lengths")->delimiter(',');
  mask_cmd->add_option("--block", mask.block, "Block size");
  mask_cmd->add_option("--orders", mask.orders, "original, dfs, hpd")->delimiter(',');
  mask_cmd->add_option("--shape", mask.shape, "random, chain or star");
  mask_cmd->add_option("--seeds", mask.seeds, "Random trees per size");
  mask_cmd->add_flag("--dump-grids", mask.dump_grids, "Write 0/1 mask grids for the first tree (needs --out)");

  CommonFlags hyp_common;
  GenerationFlags hyp_flags;
  HypothesisParams hyp;
  auto* hyp_cmd = app.add_subcommand("hypothesis", "Bin acceptance rate by draft probability");
  add_common(hyp_cmd, hyp_common, true);
  add_generation(hyp_cmd, hyp_flags);
  hyp_cmd->add_option("--bins", hyp.bins, "Number of equal-width bins");
  hyp_cmd->add_option("--min-events", hyp.min_events, "Minimum branch tests to collect");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*generate_cmd) return cmd_generate(resolve(gen_common, gen_flags), out);
    if (*bench_cmd) return cmd_bench(resolve(bench_common, bench_flags), sweep, out);
    if (*oracle_cmd) {
      SuiteOptions options{instances, trials, oracle_common.seed.value_or(0)};
      return cmd_oracle(suite, options, output_of(oracle_common), out);
    }
    if (*mask_cmd) {
      mask.seed = mask_common.seed.value_or(0);
      return cmd_mask(mask, output_of(mask_common), out);
    }
    if (*hyp_cmd) return cmd_hypothesis(resolve(hyp_common, hyp_flags), hyp, out, err);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitCheckFailed;
  }
  return kExitUsage;
}

}  // namespace spectree::cli
