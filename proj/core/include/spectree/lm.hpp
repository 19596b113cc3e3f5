#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "spectree/categorical.hpp"

namespace spectree {

class TokenTree;

/// Per-position distributions indexed by position slot: entry 0 is the root
/// position, entry i + 1 the position following node i.
using PositionDists = std::vector<Categorical>;

/// Source of next-token logits. Implementations must be pure functions of the
/// context and safe to query concurrently.
class LogitModel {
 public:
  virtual ~LogitModel() = default;

  virtual std::size_t vocab_size() const = 0;

  /// Number of trailing context tokens the logits depend on; 0 means the full
  /// context.
  virtual std::size_t context_window() const = 0;

  virtual std::vector<double> next_logits(std::span<const TokenId> context) const = 0;
};

/// A logit source plus the temperature applied when it is queried.
class LanguageModel {
 public:
  LanguageModel(std::shared_ptr<const LogitModel> source, double temperature);

  std::size_t vocab_size() const { return source_->vocab_size(); }
  double temperature() const noexcept { return temperature_; }
  const std::shared_ptr<const LogitModel>& source() const noexcept { return source_; }

  std::vector<double> next_logits(std::span<const TokenId> context) const { return source_->next_logits(context); }
  Categorical next_distribution(std::span<const TokenId> context) const;

  LanguageModel with_temperature(double temperature) const { return {source_, temperature}; }

 private:
  std::shared_ptr<const LogitModel> source_;
  double temperature_;
};

struct ModelPairSpec {
  std::size_t vocab_size = 64;
  std::size_t markov_order = 1;
  std::uint64_t target_seed = 1;
  std::uint64_t draft_seed = 2;
  double noise_sigma = 0.5;
  double concentration = 0.1;
  double draft_temp = 0.6;
  double target_temp = 0.6;

  /// Throws std::invalid_argument describing the first violated constraint.
  void validate() const;
};

struct ModelPair {
  LanguageModel target;
  LanguageModel draft;
};

/// Order-n table model. Each context's row is a symmetric Dirichlet sample with
/// the given concentration, expressed as logits (log of Gamma variates), so a
/// temperature-1 softmax reproduces the Dirichlet row. Rows are keyed by the
/// last n context tokens; shorter contexts are left-padded with token 0.
LanguageModel make_markov_lm(const ModelPairSpec& spec);

/// Draft logits = target logits + sigma * z, where z is a deterministic
/// standard normal per (context window, token). sigma == 0 reproduces the
/// target exactly. The draft inherits the target's temperature.
LanguageModel derive_draft(const LanguageModel& target, double noise_sigma, std::uint64_t seed);

/// Target from make_markov_lm, draft from derive_draft, each carrying the
/// spec's query temperature.
ModelPair make_model_pair(const ModelPairSpec& spec);

/// Logit source backed by a caller-supplied function (tests, hand-built models).
std::shared_ptr<const LogitModel> make_function_model(
    std::size_t vocab_size, std::size_t context_window,
    std::function<std::vector<double>(std::span<const TokenId>)> fn);

/// sum D[x] log(D[x] / T[x]) with 0 log 0 = 0; +infinity when D puts mass
/// where T has none.
double kl_divergence(const Categorical& draft, const Categorical& target);

/// Emulates one batched target pass over a speculative tree: the next-token
/// distribution for the root position and after every node, each conditioned
/// on prefix + the node's ancestor token path. Returns size() + 1 entries.
PositionDists target_distributions_for_tree(const LanguageModel& target, std::span<const TokenId> prefix,
                                            const TokenTree& tree);

/// Samples `length` tokens auto-regressively from `model` (used for prompts).
std::vector<TokenId> sample_sequence(const LanguageModel& model, std::size_t length, std::uint64_t seed);

}  // namespace spectree
