#include "spectree/lm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

#include "spectree/token_tree.hpp"

namespace spectree {

namespace {

// Hash of the trailing `window` tokens, left-padded with token 0.
std::uint64_t window_key(std::span<const TokenId> context, std::size_t window) {
  std::uint64_t key = 0x6c6d'6374'7800'0000ULL;
  if (window == 0) {
    for (TokenId t : context) key = hash_combine(key, static_cast<std::uint32_t>(t));
    return hash_combine(key, context.size());
  }
  for (std::size_t i = 0; i < window; ++i) {
    const std::size_t back = window - i;
    const TokenId t = back <= context.size() ? context[context.size() - back] : 0;
    key = hash_combine(key, static_cast<std::uint32_t>(t));
  }
  return key;
}

class MarkovModel final : public LogitModel {
 public:
  MarkovModel(std::size_t vocab, std::size_t order, std::uint64_t seed, double concentration)
      : vocab_(vocab), order_(order), seed_(seed), concentration_(concentration) {}

  std::size_t vocab_size() const override { return vocab_; }
  std::size_t context_window() const override { return order_; }

  std::vector<double> next_logits(std::span<const TokenId> context) const override {
    CounterEngine engine(hash_combine(mix64(seed_), window_key(context, order_)));
    std::gamma_distribution<double> gamma(concentration_, 1.0);
    std::vector<double> logits(vocab_);
    for (double& l : logits) {
      // Floor keeps the log finite when a tiny concentration underflows.
      l = std::log(std::max(gamma(engine), std::numeric_limits<double>::min()));
    }
    return logits;
  }

 private:
  std::size_t vocab_;
  std::size_t order_;
  std::uint64_t seed_;
  double concentration_;
};

class NoisyModel final : public LogitModel {
 public:
  NoisyModel(std::shared_ptr<const LogitModel> base, double sigma, std::uint64_t seed)
      : base_(std::move(base)), sigma_(sigma), seed_(seed) {}

  std::size_t vocab_size() const override { return base_->vocab_size(); }
  std::size_t context_window() const override { return base_->context_window(); }

  std::vector<double> next_logits(std::span<const TokenId> context) const override {
    std::vector<double> logits = base_->next_logits(context);
    if (sigma_ == 0.0) return logits;
    const std::uint64_t key = hash_combine(mix64(seed_ ^ 0xd1f7ULL), window_key(context, context_window()));
    for (std::size_t i = 0; i < logits.size(); ++i) {
      // Box-Muller on two keyed uniforms.
      const std::uint64_t k = hash_combine(key, i);
      const double u1 = 1.0 - to_unit_interval(mix64(k));
      const double u2 = to_unit_interval(mix64(k + 1));
      const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
      logits[i] += sigma_ * z;
    }
    return logits;
  }

 private:
  std::shared_ptr<const LogitModel> base_;
  double sigma_;
  std::uint64_t seed_;
};

class FunctionModel final : public LogitModel {
 public:
  FunctionModel(std::size_t vocab, std::size_t window,
                std::function<std::vector<double>(std::span<const TokenId>)> fn)
      : vocab_(vocab), window_(window), fn_(std::move(fn)) {}

  std::size_t vocab_size() const override { return vocab_; }
  std::size_t context_window() const override { return window_; }

  std::vector<double> next_logits(std::span<const TokenId> context) const override {
    auto logits = fn_(context);
    if (logits.size() != vocab_) throw std::logic_error("function model returned wrong vocabulary size");
    return logits;
  }

 private:
  std::size_t vocab_;
  std::size_t window_;
  std::function<std::vector<double>(std::span<const TokenId>)> fn_;
};

}  // namespace

LanguageModel::LanguageModel(std::shared_ptr<const LogitModel> source, double temperature)
    : source_(std::move(source)), temperature_(temperature) {
  if (!source_) throw std::invalid_argument("LanguageModel: null logit source");
  if (!(temperature_ >= 0.0) || !std::isfinite(temperature_)) {
    throw std::invalid_argument("LanguageModel: temperature must be >= 0");
  }
}

Categorical LanguageModel::next_distribution(std::span<const TokenId> context) const {
  const auto logits = source_->next_logits(context);
  return softmax_with_temperature(logits, temperature_);
}

void ModelPairSpec::validate() const {
  if (vocab_size < 2) throw std::invalid_argument("vocab_size must be >= 2");
  if (markov_order < 1) throw std::invalid_argument("markov_order must be >= 1");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw std::invalid_argument("noise_sigma must be >= 0");
  if (!(concentration > 0.0) || !std::isfinite(concentration)) throw std::invalid_argument("concentration must be > 0");
  if (!(draft_temp >= 0.0) || !std::isfinite(draft_temp)) throw std::invalid_argument("draft_temp must be >= 0");
  if (!(target_temp >= 0.0) || !std::isfinite(target_temp)) throw std::invalid_argument("target_temp must be >= 0");
}

LanguageModel make_markov_lm(const ModelPairSpec& spec) {
  spec.validate();
  return {std::make_shared<MarkovModel>(spec.vocab_size, spec.markov_order, spec.target_seed, spec.concentration),
          spec.target_temp};
}

LanguageModel derive_draft(const LanguageModel& target, double noise_sigma, std::uint64_t seed) {
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw std::invalid_argument("derive_draft: noise_sigma must be >= 0");
  }
  return {std::make_shared<NoisyModel>(target.source(), noise_sigma, seed), target.temperature()};
}

ModelPair make_model_pair(const ModelPairSpec& spec) {
  LanguageModel target = make_markov_lm(spec);
  LanguageModel draft = derive_draft(target, spec.noise_sigma, spec.draft_seed).with_temperature(spec.draft_temp);
  return {std::move(target), std::move(draft)};
}

std::shared_ptr<const LogitModel> make_function_model(
    std::size_t vocab_size, std::size_t context_window,
    std::function<std::vector<double>(std::span<const TokenId>)> fn) {
  return std::make_shared<FunctionModel>(vocab_size, context_window, std::move(fn));
}

double kl_divergence(const Categorical& draft, const Categorical& target) {
  if (draft.size() != target.size()) throw std::invalid_argument("kl_divergence: vocabulary size mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < draft.size(); ++i) {
    const double d = draft.probs()[i];
    const double t = target.probs()[i];
    if (d <= 0.0) continue;
    if (t <= 0.0) return std::numeric_limits<double>::infinity();
    kl += d * std::log(d / t);
  }
  return std::max(kl, 0.0);
}

PositionDists target_distributions_for_tree(const LanguageModel& target, std::span<const TokenId> prefix,
                                            const TokenTree& tree) {
  PositionDists out;
  out.reserve(tree.size() + 1);
  std::vector<TokenId> context(prefix.begin(), prefix.end());
  out.push_back(target.next_distribution(context));
  for (const TreeNode& node : tree.nodes()) {
    context.assign(prefix.begin(), prefix.end());
    const auto path = tree.path_tokens(node.id);
    context.insert(context.end(), path.begin(), path.end());
    out.push_back(target.next_distribution(context));
  }
  return out;
}

std::vector<TokenId> sample_sequence(const LanguageModel& model, std::size_t length, std::uint64_t seed) {
  std::vector<TokenId> out;
  out.reserve(length);
  UniformStream stream(hash_combine(seed, 0x70726f6dULL));
  for (std::size_t i = 0; i < length; ++i) out.push_back(sample(model.next_distribution(out), stream.next()));
  return out;
}

}  // namespace spectree
