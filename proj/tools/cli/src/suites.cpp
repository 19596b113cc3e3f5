#include "spectree_cli/suites.hpp"

#include <algorithm>
#include <cmath>

#include "spectree/construct.hpp"
#include "spectree/oracle.hpp"
#include "spectree/parallel.hpp"
#include "spectree/serialize.hpp"
#include "spectree_cli/config.hpp"

namespace spectree::cli {

namespace {

using nlohmann::json;

std::size_t pick(CounterEngine& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(to_unit_interval(rng()) * static_cast<double>(hi - lo + 1));
}

// Random distribution over v tokens; about a fifth of the entries are zero.
Categorical random_categorical(CounterEngine& rng, std::size_t v) {
  std::vector<double> w(v);
  double total = 0.0;
  for (double& x : w) {
    x = to_unit_interval(rng()) < 0.2 ? 0.0 : -std::log1p(-to_unit_interval(rng()));
    total += x;
  }
  if (total == 0.0) w[pick(rng, 0, v - 1)] = 1.0;
  return Categorical::from_weights(std::move(w));
}

SuiteReport unbiasedness(const SuiteOptions& opt) {
  const std::size_t instances = opt.instances.value_or(1000);
  const std::size_t trials = opt.trials.value_or(200000);
  std::vector<double> errors(instances);
  parallel_for(instances, [&](std::size_t i) {
    CounterEngine rng(hash_combine(opt.seed, i));
    const std::size_t v = pick(rng, 2, 8);
    const Categorical d = random_categorical(rng, v);
    const Categorical t = random_categorical(rng, v);
    const std::size_t branches = pick(rng, 1, 6);
    const auto law = exact_verify_distribution(d, t, branches);
    double err = 0.0;
    for (std::size_t x = 0; x < v; ++x) err = std::max(err, std::abs(law[x] - t.probs()[x]));
    errors[i] = err;
  });
  const double worst = errors.empty() ? 0.0 : *std::max_element(errors.begin(), errors.end());
  const bool exact_ok = worst <= 1e-9;

  json mc = json::array();
  bool mc_ok = true;
  if (trials > 0) {
    for (double temp : {0.0, 0.6}) {
      ModelPairSpec spec;
      spec.vocab_size = 16;
      spec.target_seed = hash_combine(opt.seed, 11);
      spec.draft_seed = hash_combine(opt.seed, 12);
      spec.noise_sigma = 1.0;
      spec.draft_temp = spec.target_temp = temp;
      const ModelPair pair = make_model_pair(spec);
      const auto prompt = sample_sequence(pair.target.with_temperature(1.0), 8, opt.seed);
      GenConfig config;
      config.budget = 8;
      config.draft_temp = config.target_temp = temp;
      config.seed = opt.seed;
      const OutputLawEstimate est = monte_carlo_output_distribution(pair.target, pair.draft, prompt, config, trials);
      const bool ok = est.total_variation < 0.01;
      mc_ok = mc_ok && ok;
      mc.push_back({{"vocab_size", 16},
                    {"budget", 8},
                    {"temp", temp},
                    {"trials", trials},
                    {"total_variation", est.total_variation},
                    {"tolerance", 0.01},
                    {"pass", ok}});
    }
  }
  SuiteReport r{"unbiasedness", exact_ok && mc_ok, {}};
  r.details = {{"exact", {{"instances", instances}, {"max_abs_error", worst}, {"tolerance", 1e-9}, {"pass", exact_ok}}},
               {"monte_carlo", mc}};
  return r;
}

SuiteReport optimality(const SuiteOptions& opt) {
  const std::size_t instances = opt.instances.value_or(1000);
  std::vector<int> match(instances, 0);
  std::vector<json> failures(instances);
  parallel_for(instances, [&](std::size_t i) {
    CounterEngine rng(hash_combine(opt.seed, i));
    const std::size_t k = pick(rng, 1, 3);
    const std::size_t depth = pick(rng, 1, 4);
    const std::size_t n = pick(rng, 1, 8);
    const WeightedTree tree = random_weighted_tree(k, depth, hash_combine(opt.seed, i));
    const auto greedy = greedy_subtree(tree, n);
    const auto brute = brute_force_optimal_subtree(tree, n);
    match[i] = greedy.best_weight == brute.best_weight ? 1 : 0;
    if (!match[i]) {
      failures[i] = {{"instance", i}, {"k", k}, {"depth", depth}, {"n", n},
                     {"greedy", greedy.best_weight}, {"brute_force", brute.best_weight}};
    }
  });
  json failed = json::array();
  for (const json& f : failures) {
    if (!f.is_null() && failed.size() < 10) failed.push_back(f);
  }
  const auto matched = static_cast<std::size_t>(std::count(match.begin(), match.end(), 1));
  SuiteReport r{"optimality", matched == instances, {}};
  r.details = {{"instances", instances}, {"exact_matches", matched}, {"failures", failed}};
  return r;
}

ModelPair random_pair(CounterEngine& rng, std::size_t vocab) {
  ModelPairSpec spec;
  spec.vocab_size = vocab;
  spec.target_seed = rng();
  spec.draft_seed = rng();
  spec.noise_sigma = to_unit_interval(rng()) < 0.5 ? 0.5 : 1.0;
  spec.draft_temp = spec.target_temp = to_unit_interval(rng()) < 0.5 ? 0.6 : 1.0;
  return make_model_pair(spec);
}

SuiteReport expectation(const SuiteOptions& opt) {
  const std::size_t instances = opt.instances.value_or(100);
  const std::size_t trials = std::max<std::size_t>(opt.trials.value_or(10000), 2);
  std::vector<int> within(instances, 0);
  std::vector<double> gaps(instances);
  for (std::size_t i = 0; i < instances; ++i) {
    CounterEngine rng(hash_combine(opt.seed, i));
    const ModelPair pair = random_pair(rng, 8);
    const auto prefix = sample_sequence(pair.target.with_temperature(1.0), 4, rng());
    const TokenTree tree = build_tree_fixed(pair.draft, prefix, 6, rng());
    const auto targets = target_distributions_for_tree(pair.target, prefix, tree);
    const double expected = expected_accepted(tree, true_acceptance_probs(tree, targets));
    const MeanEstimate mc = monte_carlo_expected_accepted(pair.target, prefix, tree, trials, rng());
    gaps[i] = std::abs(mc.mean - expected) / std::max(mc.std_error, 1e-300);
    within[i] = std::abs(mc.mean - expected) <= 3.0 * mc.std_error + 1e-12 ? 1 : 0;
  }
  const auto inside = static_cast<std::size_t>(std::count(within.begin(), within.end(), 1));
  const bool ok = instances == 0 || static_cast<double>(inside) >= 0.99 * static_cast<double>(instances);
  SuiteReport r{"expectation", ok, {}};
  r.details = {{"instances", instances},
               {"trials", trials},
               {"within_3_stderr", inside},
               {"required_fraction", 0.99},
               {"max_gap_in_stderr", gaps.empty() ? 0.0 : *std::max_element(gaps.begin(), gaps.end())}};
  return r;
}

std::vector<std::vector<TokenId>> node_paths(const TokenTree& tree) {
  std::vector<std::vector<TokenId>> paths;
  for (const TreeNode& n : tree.nodes()) paths.push_back(tree.path_tokens(n.id));
  std::sort(paths.begin(), paths.end());
  return paths;
}

SuiteReport threshold_equivalence(const SuiteOptions& opt) {
  const std::size_t instances = opt.instances.value_or(100);
  std::vector<int> same(instances, 0);
  std::vector<json> failures(instances);
  parallel_for(instances, [&](std::size_t i) {
    CounterEngine rng(hash_combine(opt.seed, i));
    const ModelPair pair = random_pair(rng, pick(rng, 2, 16));
    const auto prefix = sample_sequence(pair.target.with_temperature(1.0), 4, rng());
    const std::size_t m = pick(rng, 1, 32);
    const std::uint64_t seed = rng();
    const FixedBuild fixed = build_tree_fixed_traced(pair.draft, prefix, m, seed);
    const double c = fixed.popped_values.back();
    const TokenTree thr = build_tree_threshold(pair.draft, prefix, c, fixed.tree.size(), seed);
    same[i] = node_paths(fixed.tree) == node_paths(thr) ? 1 : 0;
    if (!same[i]) {
      failures[i] = {{"instance", i},
                     {"budget", m},
                     {"threshold", c},
                     {"fixed_size", fixed.tree.size()},
                     {"threshold_size", thr.size()},
                     {"fixed_tree", tree_to_json(fixed.tree)},
                     {"threshold_tree", tree_to_json(thr)}};
    }
  });
  json failed = json::array();
  for (const json& f : failures) {
    if (!f.is_null() && failed.size() < 10) failed.push_back(f);
  }
  const auto matched = static_cast<std::size_t>(std::count(same.begin(), same.end(), 1));
  SuiteReport r{"threshold-equivalence", matched == instances, {}};
  r.details = {{"instances", instances}, {"identical_node_sets", matched}, {"failures", failed}};
  return r;
}

}  // namespace

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"unbiasedness", "optimality", "expectation", "threshold-equivalence"};
  return names;
}

SuiteReport run_suite(const std::string& name, const SuiteOptions& options) {
  if (name == "unbiasedness") return unbiasedness(options);
  if (name == "optimality") return optimality(options);
  if (name == "expectation") return expectation(options);
  if (name == "threshold-equivalence") return threshold_equivalence(options);
  throw ConfigError("unknown oracle suite '" + name + "'");
}

}  // namespace spectree::cli
