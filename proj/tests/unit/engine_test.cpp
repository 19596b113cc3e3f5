#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "spectree/engine.hpp"
#include "spectree/lm.hpp"
#include "test_support.hpp"

namespace spectree {
namespace {

using testing::Gen;
using testing::successor_model;

GenConfig small_config(std::size_t prefix_len = 4) {
  GenConfig c;
  c.prefix_len = prefix_len;
  c.gen_len = 32;
  c.budget = 16;
  return c;
}

std::vector<TokenId> prompt_of(std::size_t len, std::size_t vocab, std::uint64_t seed) {
  Gen gen(seed);
  std::vector<TokenId> p(len);
  for (TokenId& t : p) t = static_cast<TokenId>(gen.index(vocab));
  return p;
}

TEST(Structure, NamesRoundTrip) {
  for (auto s : {Structure::kDynamic, Structure::kChain, Structure::kStaticTree, Structure::kKChains}) {
    EXPECT_EQ(parse_structure(to_string(s)), s);
  }
  EXPECT_FALSE(parse_structure("tree").has_value());
}

TEST(GenConfig, Validation) {
  EXPECT_NO_THROW(GenConfig{}.validate());
  GenConfig c;
  c.gen_len = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = GenConfig{};
  c.threshold = 0.1;
  EXPECT_THROW(c.validate(), std::invalid_argument);  // both budget and threshold
  c.budget.reset();
  EXPECT_NO_THROW(c.validate());
  c.threshold = 1.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = GenConfig{};
  c.budget = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = GenConfig{};
  c.structure = Structure::kStaticTree;
  c.branching = {8, 8};
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = GenConfig{};
  c.structure = Structure::kKChains;
  c.k_chains = 65;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = GenConfig{};
  c.draft_temp = -1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Generate, PointMassDraftAndTargetAcceptTheWholeChain) {
  const auto model = successor_model(10);
  GenConfig c = small_config(3);
  c.budget = 8;
  c.gen_len = 90;
  const auto result = generate(model, model, std::vector<TokenId>{0, 1, 2}, c);
  ASSERT_EQ(result.metrics.steps.size(), 10u);
  EXPECT_DOUBLE_EQ(result.metrics.mean_accepted, 9.0);
  for (std::size_t i = 0; i < result.tokens.size(); ++i) {
    EXPECT_EQ(result.tokens[i], static_cast<TokenId>((3 + i) % 10));
  }
}

TEST(Generate, BudgetOneAcceptsOneOrTwoPerStep) {
  ModelPairSpec spec;
  spec.noise_sigma = 0.7;
  const auto pair = make_model_pair(spec);
  GenConfig c = small_config();
  c.budget = 1;
  c.gen_len = 64;
  const auto result = generate(pair.target, pair.draft, prompt_of(4, 64, 1), c);
  for (const auto& s : result.metrics.steps) {
    EXPECT_GE(s.accepted, 1u);
    EXPECT_LE(s.accepted, 2u);
    EXPECT_EQ(s.tree_size, 1u);
  }
}

TEST(Generate, ProducesExactlyGenLenTokens) {
  ModelPairSpec spec;
  const auto pair = make_model_pair(spec);
  for (std::size_t len : {1u, 7u, 33u}) {
    GenConfig c = small_config();
    c.gen_len = len;
    EXPECT_EQ(generate(pair.target, pair.draft, prompt_of(4, 64, 2), c).tokens.size(), len);
  }
}

TEST(Generate, IsDeterministic) {
  ModelPairSpec spec;
  spec.noise_sigma = 0.5;
  const auto pair = make_model_pair(spec);
  GenConfig c = small_config();
  c.collect_trace = true;
  const auto prompt = prompt_of(4, 64, 3);
  const auto a = generate(pair.target, pair.draft, prompt, c);
  const auto b = generate(pair.target, pair.draft, prompt, c);
  EXPECT_EQ(a.tokens, b.tokens);
  EXPECT_EQ(a.branch_events.size(), b.branch_events.size());
  EXPECT_EQ(a.metrics.mean_accepted, b.metrics.mean_accepted);
  c.seed = 1;
  EXPECT_NE(generate(pair.target, pair.draft, prompt, c).tokens, a.tokens);
}

TEST(Generate, IdenticalModelsAcceptEveryTestedBranch) {
  ModelPairSpec spec;
  spec.noise_sigma = 0.0;
  const auto pair = make_model_pair(spec);
  GenConfig c = small_config();
  c.draft_temp = c.target_temp = 0.6;
  c.collect_trace = true;
  c.gen_len = 64;
  const auto result = generate(pair.target, pair.draft, prompt_of(4, 64, 4), c);
  ASSERT_FALSE(result.branch_events.empty());
  for (const auto& e : result.branch_events) EXPECT_TRUE(e.accepted);
}

TEST(Generate, RejectsMismatchedInputs) {
  ModelPairSpec spec;
  const auto pair = make_model_pair(spec);
  GenConfig c = small_config();
  EXPECT_THROW(generate(pair.target, pair.draft, prompt_of(3, 64, 0), c), std::invalid_argument);
  spec.vocab_size = 8;
  const auto other = make_model_pair(spec);
  EXPECT_THROW(generate(pair.target, other.draft, prompt_of(4, 8, 0), c), std::invalid_argument);
}

TEST(Generate, ThresholdModeRuns) {
  ModelPairSpec spec;
  spec.noise_sigma = 0.5;
  const auto pair = make_model_pair(spec);
  GenConfig c = small_config();
  c.budget.reset();
  c.threshold = 0.05;
  c.size_cap = 32;
  const auto result = generate(pair.target, pair.draft, prompt_of(4, 64, 5), c);
  EXPECT_EQ(result.tokens.size(), c.gen_len);
  for (const auto& s : result.metrics.steps) EXPECT_LE(s.tree_size, 32u);
}

TEST(BaselineTree, Shapes) {
  ModelPairSpec spec;
  const auto pair = make_model_pair(spec);
  const std::vector<TokenId> prefix{1, 2};
  const std::vector<std::size_t> branching{2, 2};

  const auto chain = build_baseline_tree(Structure::kChain, pair.draft, prefix, 4, branching, 1, 7);
  EXPECT_EQ(chain.size(), 4u);
  EXPECT_EQ(chain.depth(), 4);

  const auto stat = build_baseline_tree(Structure::kStaticTree, pair.draft, prefix, 6, branching, 1, 7);
  EXPECT_EQ(stat.size(), 6u);
  EXPECT_EQ(stat.depth(), 2);
  EXPECT_EQ(stat.children(kRootId).size(), 2u);
  for (NodeId c : stat.children(kRootId)) EXPECT_EQ(stat.children(c).size(), 2u);

  const auto chains = build_baseline_tree(Structure::kKChains, pair.draft, prefix, 6, branching, 2, 7);
  EXPECT_EQ(chains.size(), 6u);
  EXPECT_EQ(chains.depth(), 3);
  EXPECT_EQ(chains.children(kRootId).size(), 2u);
}

TEST(BaselineTree, DefaultStaticBranchingUsesSixtyNodes) {
  ModelPairSpec spec;
  const auto pair = make_model_pair(spec);
  const GenConfig c;
  const auto tree = build_baseline_tree(Structure::kStaticTree, pair.draft, std::vector<TokenId>{0}, 64, c.branching,
                                        c.k_chains, 3);
  EXPECT_EQ(tree.size(), 60u);
}

TEST(BaselineTree, Errors) {
  ModelPairSpec spec;
  const auto pair = make_model_pair(spec);
  const std::vector<TokenId> prefix{0};
  const std::vector<std::size_t> branching{4, 4};
  EXPECT_THROW(build_baseline_tree(Structure::kDynamic, pair.draft, prefix, 4, branching, 1, 0),
               std::invalid_argument);
  EXPECT_THROW(build_baseline_tree(Structure::kStaticTree, pair.draft, prefix, 10, branching, 1, 0),
               std::invalid_argument);
  EXPECT_THROW(build_baseline_tree(Structure::kKChains, pair.draft, prefix, 2, branching, 3, 0),
               std::invalid_argument);
  EXPECT_THROW(build_baseline_tree(Structure::kChain, pair.draft, prefix, 0, branching, 1, 0), std::invalid_argument);
}

TEST(AcceptanceBins, BucketsByDraftProbability) {
  const std::vector<BranchEvent> events{{0.05, true}, {0.1, false}, {0.95, false}, {1.0, true}, {0.5, true}};
  const auto bins = acceptance_vs_draft_bins(events, 10);
  ASSERT_EQ(bins.size(), 10u);
  EXPECT_EQ(bins[0].count, 1u);
  EXPECT_EQ(bins[1].count, 1u);  // 0.1 opens the second bin
  EXPECT_EQ(bins[5].count, 1u);
  EXPECT_EQ(bins[9].count, 2u);  // the last bin is closed
  EXPECT_DOUBLE_EQ(bins[9].acceptance_rate, 0.5);
  EXPECT_TRUE(std::isnan(bins[3].acceptance_rate));
  EXPECT_DOUBLE_EQ(bins[3].lo, 0.3);
  EXPECT_DOUBLE_EQ(bins[9].hi, 1.0);
}

TEST(AcceptanceBins, Errors) {
  EXPECT_THROW(acceptance_vs_draft_bins(std::vector<BranchEvent>{}, 10), std::invalid_argument);
  EXPECT_THROW(acceptance_vs_draft_bins(std::vector<BranchEvent>{{0.5, true}}, 0), std::invalid_argument);
}

std::vector<AcceptanceBin> bins_with_rates(const std::vector<double>& rates) {
  std::vector<AcceptanceBin> bins(rates.size());
  for (std::size_t i = 0; i < rates.size(); ++i) {
    bins[i].acceptance_rate = rates[i];
    bins[i].count = std::isnan(rates[i]) ? 0 : 10;
  }
  return bins;
}

TEST(BinTrend, Spearman) {
  EXPECT_DOUBLE_EQ(bin_trend_spearman(bins_with_rates({0.1, 0.2, 0.5, 0.9})), 1.0);
  EXPECT_DOUBLE_EQ(bin_trend_spearman(bins_with_rates({0.9, 0.5, 0.2})), -1.0);
  EXPECT_DOUBLE_EQ(bin_trend_spearman(bins_with_rates({0.1, NAN, 0.5, NAN, 0.9})), 1.0);
  EXPECT_TRUE(std::isnan(bin_trend_spearman(bins_with_rates({0.3, NAN}))));
  // Ties take average ranks: x = 1,2,3 and y ranks 1.5,1.5,3 give sqrt(3)/2.
  EXPECT_NEAR(bin_trend_spearman(bins_with_rates({0.2, 0.2, 0.7})), std::sqrt(3.0) / 2.0, 1e-12);
}

TEST(RunMetrics, FinalizeAggregates) {
  RunMetrics m;
  m.steps = {{4, 2, 3, 10.0}, {8, 3, 1, 20.0}};
  m.finalize();
  EXPECT_DOUBLE_EQ(m.mean_accepted, 2.0);
  EXPECT_DOUBLE_EQ(m.mean_tree_size, 6.0);
  // Total cost 3 * 10 + 1 * 20 = 50 for 4 tokens.
  EXPECT_DOUBLE_EQ(m.tokens_per_modeled_second, 4.0 / 50.0);
}

}  // namespace
}  // namespace spectree
