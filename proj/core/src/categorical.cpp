#include "spectree/categorical.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace spectree {

namespace {

void check_same_vocab(const Categorical& a, const Categorical& b, const char* what) {
  if (a.size() != b.size()) {
    throw std::invalid_argument(std::string(what) + ": vocabulary size mismatch (" +
                                std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  }
}

}  // namespace

Categorical::Categorical(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) throw std::invalid_argument("Categorical: empty vocabulary");
  double total = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw std::invalid_argument("Categorical: entries must be finite and non-negative");
    }
    total += p;
  }
  if (std::abs(total - 1.0) > kNormalizationTolerance) {
    throw std::invalid_argument("Categorical: mass " + std::to_string(total) + " is not 1");
  }
  for (double& p : probs_) p /= total;
}

Categorical Categorical::from_weights(std::vector<double> weights, Flag zero_flag) {
  if (weights.empty()) throw std::invalid_argument("Categorical: empty vocabulary");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw std::invalid_argument("Categorical: weights must be finite and non-negative");
    }
    total += w;
  }
  if (total <= 0.0) return zero(weights.size(), zero_flag == Flag::kValid ? Flag::kExhausted : zero_flag);
  Categorical out;
  out.probs_ = std::move(weights);
  for (double& p : out.probs_) p /= total;
  return out;
}

Categorical Categorical::zero(std::size_t vocab_size, Flag flag) {
  if (flag == Flag::kValid) throw std::invalid_argument("Categorical::zero needs a zero flag");
  Categorical out;
  out.probs_.assign(vocab_size, 0.0);
  out.flag_ = flag;
  return out;
}

Categorical Categorical::point_mass(std::size_t vocab_size, TokenId token) {
  if (token < 0 || static_cast<std::size_t>(token) >= vocab_size) {
    throw std::out_of_range("Categorical::point_mass: token outside vocabulary");
  }
  Categorical out;
  out.probs_.assign(vocab_size, 0.0);
  out.probs_[static_cast<std::size_t>(token)] = 1.0;
  return out;
}

Categorical Categorical::uniform(std::size_t vocab_size) {
  if (vocab_size == 0) throw std::invalid_argument("Categorical: empty vocabulary");
  Categorical out;
  out.probs_.assign(vocab_size, 1.0 / static_cast<double>(vocab_size));
  return out;
}

std::size_t Categorical::support_size() const noexcept {
  return static_cast<std::size_t>(std::count_if(probs_.begin(), probs_.end(), [](double p) { return p > 0.0; }));
}

Categorical softmax_with_temperature(std::span<const double> logits, double temp) {
  if (logits.empty()) throw std::invalid_argument("softmax: empty logits");
  if (!(temp >= 0.0) || !std::isfinite(temp)) throw std::invalid_argument("softmax: temperature must be >= 0");
  for (double l : logits) {
    if (!std::isfinite(l)) throw std::invalid_argument("softmax: non-finite logit");
  }
  const auto argmax = std::max_element(logits.begin(), logits.end());
  if (temp == 0.0) {
    return Categorical::point_mass(logits.size(), static_cast<TokenId>(argmax - logits.begin()));
  }
  const double peak = *argmax;
  std::vector<double> weights(logits.size());
  std::transform(logits.begin(), logits.end(), weights.begin(),
                 [&](double l) { return std::exp((l - peak) / temp); });
  return Categorical::from_weights(std::move(weights));
}

TokenId sample(const Categorical& dist, double uniform) {
  if (dist.empty() || dist.is_zero()) throw std::logic_error("sample: distribution has no mass");
  const auto probs = dist.probs();
  double cdf = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    cdf += probs[i];
    last_positive = i;
    if (uniform < cdf) return static_cast<TokenId>(i);
  }
  // Rounding left the cdf a hair below 1.
  return static_cast<TokenId>(last_positive);
}

Categorical residual_target(const Categorical& target, const Categorical& draft) {
  check_same_vocab(target, draft, "residual_target");
  std::vector<double> relu(target.size());
  const auto t = target.probs();
  const auto d = draft.probs();
  for (std::size_t i = 0; i < relu.size(); ++i) relu[i] = std::max(t[i] - d[i], 0.0);
  return Categorical::from_weights(std::move(relu), Categorical::Flag::kNoResidual);
}

Categorical remove_and_renorm(const Categorical& dist, TokenId token) {
  if (dist.is_zero()) throw std::logic_error("remove_and_renorm: distribution has no mass");
  std::vector<double> rest(dist.probs().begin(), dist.probs().end());
  rest.at(static_cast<std::size_t>(token)) = 0.0;
  return Categorical::from_weights(std::move(rest), Categorical::Flag::kExhausted);
}

double total_variation(const Categorical& a, const Categorical& b) {
  check_same_vocab(a, b, "total_variation");
  double l1 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) l1 += std::abs(a.probs()[i] - b.probs()[i]);
  return 0.5 * l1;
}

}  // namespace spectree
