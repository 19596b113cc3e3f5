#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "spectree/random.hpp"

namespace spectree {

/// Tolerance on the total mass of a constructed distribution.
inline constexpr double kNormalizationTolerance = 1e-9;

/// A normalized probability vector over a vocabulary of size V.
///
/// The zero vector is a legitimate value: it signals that a residual or a
/// sibling chain has no mass left. It carries a flag saying why, and it can
/// never be sampled.
class Categorical {
 public:
  enum class Flag {
    kValid,
    kNoResidual,  // relu(T - D) vanished: T == D
    kExhausted,   // every token with mass has been removed
  };

  /// Empty distribution over a zero-size vocabulary (used as "missing").
  Categorical() = default;

  /// Validates non-negativity and unit mass (within kNormalizationTolerance),
  /// then renormalizes exactly. Throws std::invalid_argument otherwise.
  explicit Categorical(std::vector<double> probs);

  /// Normalizes arbitrary non-negative weights. A zero total yields the zero
  /// vector carrying `zero_flag`.
  static Categorical from_weights(std::vector<double> weights, Flag zero_flag = Flag::kExhausted);

  static Categorical zero(std::size_t vocab_size, Flag flag);
  static Categorical point_mass(std::size_t vocab_size, TokenId token);
  static Categorical uniform(std::size_t vocab_size);

  std::size_t size() const noexcept { return probs_.size(); }
  bool empty() const noexcept { return probs_.empty(); }
  bool is_zero() const noexcept { return flag_ != Flag::kValid; }
  Flag flag() const noexcept { return flag_; }
  std::size_t support_size() const noexcept;

  double operator[](TokenId token) const { return probs_.at(static_cast<std::size_t>(token)); }
  std::span<const double> probs() const noexcept { return probs_; }

  friend bool operator==(const Categorical&, const Categorical&) = default;

 private:
  std::vector<double> probs_;
  Flag flag_ = Flag::kValid;
};

/// probs[i] proportional to exp(logits[i] / temp); temp == 0 gives a one-hot at
/// the argmax with ties going to the lowest index. Throws on empty input,
/// negative temperature or non-finite logits.
Categorical softmax_with_temperature(std::span<const double> logits, double temp);

/// Inverse-CDF sampling over the stored order: the first i with u < cdf[i].
/// `uniform` must lie in [0, 1). Throws std::logic_error on the zero vector.
TokenId sample(const Categorical& dist, double uniform);

/// normalize(max(target - draft, 0)). Returns the zero vector flagged
/// kNoResidual when the positive part vanishes.
Categorical residual_target(const Categorical& target, const Categorical& draft);

/// Zeroes `token` and renormalizes the remaining mass. Returns the zero vector
/// flagged kExhausted when no mass remains.
Categorical remove_and_renorm(const Categorical& dist, TokenId token);

/// Half the L1 distance.
double total_variation(const Categorical& a, const Categorical& b);

}  // namespace spectree
