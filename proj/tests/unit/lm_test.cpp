#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "spectree/lm.hpp"
#include "spectree/token_tree.hpp"
#include "test_support.hpp"

namespace spectree {
namespace {

using testing::Gen;

ModelPairSpec spec_with(std::size_t vocab, std::uint64_t seed) {
  ModelPairSpec s;
  s.vocab_size = vocab;
  s.target_seed = seed;
  s.target_temp = 1.0;
  s.draft_temp = 1.0;
  return s;
}

std::vector<TokenId> random_context(Gen& gen, std::size_t vocab, std::size_t len) {
  std::vector<TokenId> ctx(len);
  for (TokenId& t : ctx) t = static_cast<TokenId>(gen.index(vocab));
  return ctx;
}

TEST(MarkovLm, QueriesAreDeterministic) {
  const auto lm = make_markov_lm(spec_with(4, 7));
  const std::vector<TokenId> ctx{1, 3, 2};
  EXPECT_EQ(lm.next_logits(ctx), lm.next_logits(ctx));
  const auto again = make_markov_lm(spec_with(4, 7));
  EXPECT_EQ(lm.next_logits(ctx), again.next_logits(ctx));
}

TEST(MarkovLm, RowsDependOnlyOnTheLastNTokens) {
  auto s = spec_with(8, 3);
  s.markov_order = 2;
  const auto lm = make_markov_lm(s);
  EXPECT_EQ(lm.next_logits(std::vector<TokenId>{5, 1, 2}), lm.next_logits(std::vector<TokenId>{7, 1, 2}));
  EXPECT_NE(lm.next_logits(std::vector<TokenId>{5, 1, 2}), lm.next_logits(std::vector<TokenId>{5, 2, 2}));
}

TEST(MarkovLm, ShortContextsArePaddedWithTokenZero) {
  auto s = spec_with(8, 3);
  s.markov_order = 3;
  const auto lm = make_markov_lm(s);
  EXPECT_EQ(lm.next_logits(std::vector<TokenId>{}), lm.next_logits(std::vector<TokenId>{0, 0, 0}));
  EXPECT_EQ(lm.next_logits(std::vector<TokenId>{4}), lm.next_logits(std::vector<TokenId>{0, 0, 4}));
}

TEST(MarkovLm, SeedsGiveDifferentTables) {
  const std::vector<TokenId> ctx{1};
  EXPECT_NE(make_markov_lm(spec_with(8, 1)).next_logits(ctx), make_markov_lm(spec_with(8, 2)).next_logits(ctx));
}

TEST(MarkovLm, RowsSumToOne) {
  const auto lm = make_markov_lm(spec_with(64, 5));
  for (TokenId t = 0; t < 64; ++t) {
    const auto d = lm.next_distribution(std::vector<TokenId>{t});
    double total = 0.0;
    for (double p : d.probs()) total += p;
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(MarkovLm, LargeConcentrationApproachesUniform) {
  auto s = spec_with(2, 9);
  s.concentration = 1e6;
  const auto lm = make_markov_lm(s);
  Gen gen(1);
  for (int row = 0; row < 100; ++row) {
    const auto d = lm.next_distribution(random_context(gen, 1000, 1));
    EXPECT_NEAR(d.probs()[0], 0.5, 1e-2);
  }
}

TEST(MarkovLm, SmallerConcentrationConcentratesMass) {
  const auto mean_top = [](double concentration) {
    auto s = spec_with(64, 4);
    s.concentration = concentration;
    const auto lm = make_markov_lm(s);
    double top = 0.0;
    for (TokenId t = 0; t < 64; ++t) {
      const auto p = lm.next_distribution(std::vector<TokenId>{t}).probs();
      top += *std::max_element(p.begin(), p.end());
    }
    return top / 64;
  };
  const double peaky = mean_top(0.05);
  const double medium = mean_top(0.5);
  const double flat = mean_top(5.0);
  EXPECT_GT(peaky, medium);
  EXPECT_GT(medium, flat);
  EXPECT_GT(peaky, 10.0 / 64);
}

TEST(ModelPairSpec, Validation) {
  ModelPairSpec s;
  EXPECT_NO_THROW(s.validate());
  s.vocab_size = 1;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = ModelPairSpec{};
  s.markov_order = 0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = ModelPairSpec{};
  s.noise_sigma = -1;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = ModelPairSpec{};
  s.concentration = 0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = ModelPairSpec{};
  s.target_temp = -0.5;
  EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(DeriveDraft, ZeroSigmaReproducesTheTarget) {
  const auto target = make_markov_lm(spec_with(16, 2));
  const auto draft = derive_draft(target, 0.0, 5);
  Gen gen(2);
  for (int i = 0; i < 50; ++i) {
    const auto ctx = random_context(gen, 16, 4);
    EXPECT_EQ(draft.next_logits(ctx), target.next_logits(ctx));
    EXPECT_EQ(kl_divergence(draft.next_distribution(ctx), target.next_distribution(ctx)), 0.0);
  }
}

TEST(DeriveDraft, NoiseIsDeterministicPerContext) {
  const auto target = make_markov_lm(spec_with(16, 2));
  const auto a = derive_draft(target, 0.5, 5);
  const auto b = derive_draft(target, 0.5, 5);
  const auto c = derive_draft(target, 0.5, 6);
  const std::vector<TokenId> ctx{3};
  EXPECT_EQ(a.next_logits(ctx), b.next_logits(ctx));
  EXPECT_NE(a.next_logits(ctx), c.next_logits(ctx));
}

TEST(DeriveDraft, NoiseHasTheRequestedScale) {
  const auto target = make_markov_lm(spec_with(64, 2));
  const auto draft = derive_draft(target, 0.5, 5);
  double sum = 0.0;
  double sum_sq = 0.0;
  std::size_t n = 0;
  for (TokenId t = 0; t < 64; ++t) {
    const std::vector<TokenId> ctx{t};
    const auto lt = target.next_logits(ctx);
    const auto ld = draft.next_logits(ctx);
    for (std::size_t i = 0; i < lt.size(); ++i) {
      const double z = ld[i] - lt[i];
      sum += z;
      sum_sq += z * z;
      ++n;
    }
  }
  const double mean = sum / static_cast<double>(n);
  const double sd = std::sqrt(sum_sq / static_cast<double>(n) - mean * mean);
  EXPECT_NEAR(mean, 0.0, 0.05);
  EXPECT_NEAR(sd, 0.5, 0.03);
}

TEST(DeriveDraft, PositiveSigmaGivesPositiveMeanKl) {
  const auto target = make_markov_lm(spec_with(64, 3));
  const auto draft = derive_draft(target, 0.5, 4);
  double kl = 0.0;
  for (TokenId t = 0; t < 64; ++t) {
    const std::vector<TokenId> ctx{t};
    kl += kl_divergence(draft.next_distribution(ctx), target.next_distribution(ctx));
  }
  EXPECT_GT(kl / 64, 0.0);
}

TEST(DeriveDraft, MeanKlIsMonotoneInSigma) {
  auto s = spec_with(64, 11);
  s.markov_order = 2;
  const auto target = make_markov_lm(s);
  Gen gen(17);
  std::vector<std::vector<TokenId>> contexts;
  for (int i = 0; i < 1000; ++i) contexts.push_back(random_context(gen, 64, 2));
  double previous = 0.0;
  for (double sigma : {0.25, 0.5, 1.0}) {
    const auto draft = derive_draft(target, sigma, 23);
    double kl = 0.0;
    for (const auto& ctx : contexts) kl += kl_divergence(draft.next_distribution(ctx), target.next_distribution(ctx));
    kl /= static_cast<double>(contexts.size());
    EXPECT_GE(kl, previous) << "sigma " << sigma;
    previous = kl;
  }
}

TEST(DeriveDraft, RejectsNegativeSigma) {
  const auto target = make_markov_lm(spec_with(4, 1));
  EXPECT_THROW(derive_draft(target, -0.1, 0), std::invalid_argument);
}

TEST(ModelPair, CarriesTheConfiguredTemperatures) {
  ModelPairSpec s;
  s.draft_temp = 0.6;
  s.target_temp = 0.0;
  const auto pair = make_model_pair(s);
  EXPECT_EQ(pair.draft.temperature(), 0.6);
  EXPECT_EQ(pair.target.temperature(), 0.0);
  EXPECT_EQ(pair.target.next_distribution(std::vector<TokenId>{1}).support_size(), 1u);
}

TEST(KlDivergence, Examples) {
  EXPECT_EQ(kl_divergence(Categorical({0.3, 0.7}), Categorical({0.3, 0.7})), 0.0);
  EXPECT_NEAR(kl_divergence(Categorical({1, 0}), Categorical({0.5, 0.5})), std::log(2.0), 1e-15);
  EXPECT_EQ(kl_divergence(Categorical({0.5, 0.5}), Categorical({1, 0})), std::numeric_limits<double>::infinity());
}

TEST(TargetDistributions, EmptyTreeGivesOnlyTheRoot) {
  const auto lm = make_markov_lm(spec_with(8, 1));
  const std::vector<TokenId> prefix{1, 2};
  const TokenTree tree(prefix.size());
  const auto dists = target_distributions_for_tree(lm, prefix, tree);
  ASSERT_EQ(dists.size(), 1u);
  EXPECT_EQ(dists[0], lm.next_distribution(prefix));
}

TEST(TargetDistributions, ChainAndSiblingsUseTheirPathContexts) {
  auto s = spec_with(8, 1);
  s.markov_order = 3;
  const auto lm = make_markov_lm(s);
  const std::vector<TokenId> prefix{4, 4};
  TokenTree tree(prefix.size());
  tree.set_position(kRootId, Categorical::uniform(8));
  const NodeId a = tree.add_node(kRootId, 1, 1.0);
  const NodeId sib = tree.add_node(kRootId, 6, 1.0);
  tree.set_position(a, Categorical::uniform(8));
  const NodeId b = tree.add_node(a, 2, 1.0);

  const auto dists = target_distributions_for_tree(lm, prefix, tree);
  ASSERT_EQ(dists.size(), tree.size() + 1);
  EXPECT_EQ(dists[slot_of(kRootId)], lm.next_distribution(std::vector<TokenId>{4, 4}));
  EXPECT_EQ(dists[slot_of(a)], lm.next_distribution(std::vector<TokenId>{4, 4, 1}));
  EXPECT_EQ(dists[slot_of(b)], lm.next_distribution(std::vector<TokenId>{4, 4, 1, 2}));
  EXPECT_EQ(dists[slot_of(sib)], lm.next_distribution(std::vector<TokenId>{4, 4, 6}));
}

TEST(SampleSequence, DeterministicAndInVocabulary) {
  const auto lm = make_markov_lm(spec_with(16, 1));
  const auto a = sample_sequence(lm, 128, 3);
  EXPECT_EQ(a, sample_sequence(lm, 128, 3));
  EXPECT_NE(a, sample_sequence(lm, 128, 4));
  ASSERT_EQ(a.size(), 128u);
  for (TokenId t : a) EXPECT_TRUE(t >= 0 && t < 16);
}

TEST(FunctionModel, WrongSizeIsALogicError) {
  const LanguageModel bad(make_function_model(3, 1, [](std::span<const TokenId>) { return std::vector<double>{0, 0}; }),
                          1.0);
  EXPECT_THROW(bad.next_distribution(std::vector<TokenId>{}), std::logic_error);
}

}  // namespace
}  // namespace spectree
