#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ace/error.hpp"
#include "ace/history.hpp"
#include "ace/mask.hpp"
#include "ace/rng.hpp"

namespace ace {

inline constexpr double kDefaultLearningRate = 0.1;
inline constexpr double kDefaultGamma = 0.5;
inline constexpr int kSampleRetryCap = 1000;

inline double sigmoid(double x) {
  // Branching keeps exp() from overflowing for large |x|.
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

struct ControllerConfig {
  double learning_rate = kDefaultLearningRate;
  double gamma = kDefaultGamma;
};

inline void validate(const ControllerConfig& config) {
  if (!(config.learning_rate > 0.0) || !std::isfinite(config.learning_rate)) {
    throw Error(ErrorCode::InvalidLearningRate, "learning rate must be positive, got " +
                                                    std::to_string(config.learning_rate));
  }
  if (!(config.gamma > 0.0 && config.gamma < 1.0)) {
    throw Error(ErrorCode::InvalidGamma, "gamma must lie in (0, 1), got " + std::to_string(config.gamma));
  }
}

/// Per-candidate reward r^t.
struct RewardVector {
  std::vector<double> values;

  std::size_t size() const noexcept { return values.size(); }
  double operator[](std::size_t l) const { return values[l]; }
};

/// Parameters of the independent-Bernoulli controller: one logit per
/// candidate, initialized to zero so every candidate starts at p = 0.5.
class ControllerState {
 public:
  ControllerState(std::size_t num_candidates, ControllerConfig config = {})
      : theta_(num_candidates, 0.0), config_(config) {
    if (num_candidates == 0) throw Error(ErrorCode::EmptyMask, "controller needs L >= 1");
    validate(config_);
  }

  std::size_t size() const noexcept { return theta_.size(); }
  const std::vector<double>& theta() const noexcept { return theta_; }
  std::vector<double>& theta() noexcept { return theta_; }
  double learning_rate() const noexcept { return config_.learning_rate; }
  double gamma() const noexcept { return config_.gamma; }
  const ControllerConfig& config() const noexcept { return config_; }

  /// Running maximum of recorded development scores; 0 before any.
  double baseline() const noexcept { return baseline_; }
  void record_score(double score) noexcept {
    if (score > baseline_) baseline_ = score;
  }

  /// sigma(theta_l) for every l.
  std::vector<double> probabilities() const {
    std::vector<double> p(theta_.size());
    for (std::size_t l = 0; l < theta_.size(); ++l) p[l] = sigmoid(theta_[l]);
    return p;
  }

 private:
  std::vector<double> theta_;
  ControllerConfig config_;
  double baseline_ = 0.0;
};

/// P(a_l | theta_l): sigma(theta_l) when selected, its complement otherwise.
inline double select_prob(const ControllerState& state, std::size_t l, bool selected) {
  if (l >= state.size()) {
    throw Error(ErrorCode::IndexOutOfRange,
                "candidate " + std::to_string(l) + " of " + std::to_string(state.size()));
  }
  const double p = sigmoid(state.theta()[l]);
  return selected ? p : 1.0 - p;
}

/// Draws a mask bit-by-bit from the controller, rejecting the all-zero mask
/// and anything in `forbidden`. After kSampleRetryCap rejected draws the last
/// draw is repaired deterministically: its most probable unselected bit is
/// switched on, or, if every bit is already on, its least probable bit is
/// switched off.
inline Mask sample(const ControllerState& state, Rng& rng, std::span<const Mask> forbidden = {}) {
  const std::size_t n = state.size();
  const auto probs = state.probabilities();
  auto is_forbidden = [&](const Mask& m) {
    for (const auto& f : forbidden) {
      if (f == m) return true;
    }
    return false;
  };

  std::vector<int> bits(n);
  for (int attempt = 0; attempt < kSampleRetryCap; ++attempt) {
    for (std::size_t l = 0; l < n; ++l) bits[l] = rng.bernoulli(probs[l]) ? 1 : 0;
    auto m = Mask::from_bits(bits);
    if (m.any() && !is_forbidden(m)) return m;
  }

  auto last = Mask::from_bits(bits);
  std::size_t pick = n;
  for (std::size_t l = 0; l < n; ++l) {
    if (!last[l] && (pick == n || probs[l] > probs[pick])) pick = l;
  }
  if (pick == n) {
    pick = 0;
    for (std::size_t l = 1; l < n; ++l) {
      if (probs[l] < probs[pick]) pick = l;
    }
  }
  auto repaired = last.flipped(pick);
  if (!repaired.any() || is_forbidden(repaired)) {
    throw Error(ErrorCode::RetryExhausted, "no admissible mask found after " +
                                               std::to_string(kSampleRetryCap) + " draws and repair");
  }
  return repaired;
}

/// Baseline-subtracted scalar reward broadcast to every candidate.
inline RewardVector reward_simple(double score, const ControllerState& state) {
  return RewardVector{std::vector<double>(state.size(), score - state.baseline())};
}

namespace detail {
inline RewardVector accumulate_reward(const SearchHistory& history, const Mask& current, double score,
                                      const double* gamma) {
  if (history.empty()) throw Error(ErrorCode::EmptyLog, "reward requires a non-empty history");
  RewardVector r{std::vector<double>(current.size(), 0.0)};
  for (const auto& e : history) {
    const std::size_t dist = hamming(current, e.mask);
    if (dist == 0) continue;
    double weight = score - e.score;
    if (gamma) weight *= std::pow(*gamma, static_cast<double>(dist - 1));
    for (std::size_t l = 0; l < current.size(); ++l) {
      if (current[l] != e.mask[l]) r.values[l] += weight;
    }
  }
  return r;
}
}  // namespace detail

/// Sum over history of (R_t - R_i) |a_t - a_i|.
inline RewardVector reward_undiscounted(const SearchHistory& history, const Mask& current, double score) {
  return detail::accumulate_reward(history, current, score, nullptr);
}

/// Sum over history of (R_t - R_i) gamma^(Hamm(a_t, a_i) - 1) |a_t - a_i|.
/// Entries equal to `current` have a zero change vector and are skipped.
inline RewardVector reward_discounted(const SearchHistory& history, const Mask& current, double score,
                                      double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw Error(ErrorCode::InvalidGamma, "gamma must lie in (0, 1), got " + std::to_string(gamma));
  }
  return detail::accumulate_reward(history, current, score, &gamma);
}

/// d/dtheta_l log P(a_l; theta_l) = a_l - sigma(theta_l).
inline std::vector<double> grad_log_prob(const ControllerState& state, const Mask& mask) {
  if (mask.size() != state.size()) {
    throw Error(ErrorCode::LengthMismatch, "mask length " + std::to_string(mask.size()) +
                                               " vs controller " + std::to_string(state.size()));
  }
  std::vector<double> g(state.size());
  for (std::size_t l = 0; l < state.size(); ++l) {
    g[l] = (mask[l] ? 1.0 : 0.0) - sigmoid(state.theta()[l]);
  }
  return g;
}

/// One SGD step of gradient ascent: theta_l += lr * (a_l - sigma(theta_l)) * r_l.
/// The baseline is not touched; callers feed scores through record_score.
inline ControllerState update(ControllerState state, const Mask& mask, const RewardVector& reward) {
  if (reward.size() != state.size()) {
    throw Error(ErrorCode::LengthMismatch, "reward length " + std::to_string(reward.size()) +
                                               " vs controller " + std::to_string(state.size()));
  }
  const auto grad = grad_log_prob(state, mask);
  for (std::size_t l = 0; l < state.size(); ++l) {
    state.theta()[l] += state.learning_rate() * grad[l] * reward[l];
  }
  return state;
}

enum class RewardVariant { Discounted, Undiscounted, Simple };

constexpr std::string_view to_string(RewardVariant v) {
  switch (v) {
    case RewardVariant::Discounted: return "discounted";
    case RewardVariant::Undiscounted: return "undiscounted";
    case RewardVariant::Simple: return "simple";
  }
  return "unknown";
}

inline RewardVariant parse_reward_variant(std::string_view name) {
  if (name == "discounted") return RewardVariant::Discounted;
  if (name == "undiscounted") return RewardVariant::Undiscounted;
  if (name == "simple") return RewardVariant::Simple;
  throw Error(ErrorCode::ConfigInvalid, "unknown reward variant '" + std::string(name) + "'");
}

inline RewardVector compute_reward(RewardVariant variant, const SearchHistory& history, const Mask& current,
                                   double score, const ControllerState& state) {
  switch (variant) {
    case RewardVariant::Discounted: return reward_discounted(history, current, score, state.gamma());
    case RewardVariant::Undiscounted: return reward_undiscounted(history, current, score);
    case RewardVariant::Simple: return reward_simple(score, state);
  }
  throw Error(ErrorCode::ConfigInvalid, "unknown reward variant");
}

}  // namespace ace
