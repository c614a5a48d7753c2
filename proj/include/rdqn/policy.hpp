#ifndef RDQN_POLICY_HPP
#define RDQN_POLICY_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "rdqn/error.hpp"

namespace rdqn {

/// Tolerance on the total mass of a probability vector.
inline constexpr double kProbabilitySumTolerance = 1e-9;

/// Index of the largest entry; ties go to the lowest index.
inline std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw InvalidInput("argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

/// A probability vector over n >= 2 discrete actions.
///
/// Construction validates the invariants (non-negative, finite, unit mass),
/// so every instance in circulation is a proper distribution.
class PolicyDistribution {
 public:
  explicit PolicyDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.size() < 2) {
      throw InvalidInput("policy distribution needs at least 2 actions, got " +
                         std::to_string(probs_.size()));
    }
    double total = 0.0;
    for (double p : probs_) {
      if (!std::isfinite(p) || p < 0.0) {
        throw InvalidInput("policy distribution has a negative or non-finite entry");
      }
      total += p;
    }
    if (std::abs(total - 1.0) > kProbabilitySumTolerance) {
      throw InvalidInput("policy distribution sums to " + std::to_string(total) + ", not 1");
    }
  }

  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](std::size_t a) const { return probs_[a]; }
  double at(std::size_t a) const {
    if (a >= probs_.size()) throw InvalidInput("action index out of range");
    return probs_[a];
  }
  std::span<const double> probs() const noexcept { return probs_; }

  /// Most probable action, lowest index on ties.
  std::size_t greedy_action() const { return argmax(probs_); }

  friend bool operator==(const PolicyDistribution&, const PolicyDistribution&) = default;

 private:
  std::vector<double> probs_;
};

/// Epsilon-greedy distribution over `q_values`: the greedy action (lowest
/// index on ties) gets 1 - eps + eps/n, every other action eps/n.
/// Requires 0 < eps <= 1/2, the range under which the discrepancy bounds hold.
inline PolicyDistribution epsilon_greedy(std::span<const double> q_values, double epsilon) {
  if (!(epsilon > 0.0 && epsilon <= 0.5)) {
    throw DomainError("epsilon must lie in (0, 1/2], got " + std::to_string(epsilon));
  }
  if (q_values.size() < 2) throw InvalidInput("epsilon_greedy needs at least 2 actions");
  for (double q : q_values) {
    if (!std::isfinite(q)) throw InvalidInput("epsilon_greedy: non-finite action value");
  }
  const auto n = static_cast<double>(q_values.size());
  const double other = epsilon / n;
  std::vector<double> probs(q_values.size(), other);
  probs[argmax(q_values)] = 1.0 - epsilon + other;
  return PolicyDistribution(std::move(probs));
}

/// Expectation of `q_values` under `dist`.
inline double expected_q(const PolicyDistribution& dist, std::span<const double> q_values) {
  if (dist.size() != q_values.size()) {
    throw InvalidInput("expected_q: distribution has " + std::to_string(dist.size()) +
                       " actions but q has " + std::to_string(q_values.size()));
  }
  double sum = 0.0;
  for (std::size_t a = 0; a < q_values.size(); ++a) sum += dist[a] * q_values[a];
  return sum;
}

enum class MeasurementKind { Beta, Eta };

enum class PolicyCase { NearOnPolicy, NearOffPolicy };

inline const char* to_string(MeasurementKind kind) {
  return kind == MeasurementKind::Beta ? "beta" : "eta";
}

inline const char* to_string(PolicyCase c) {
  return c == PolicyCase::NearOnPolicy ? "near-on-policy" : "near-off-policy";
}

/// Classification threshold for each measurement: 1 for the L1 distance
/// between full distributions, 1/2 for the gap at the sampled action.
constexpr double measurement_bound(MeasurementKind kind) noexcept {
  return kind == MeasurementKind::Beta ? 1.0 : 0.5;
}

/// A value of one of the two discrepancy measurements between a target
/// policy and a behavior policy.
struct DiscrepancyMeasurement {
  MeasurementKind kind;
  double value;

  double bound() const noexcept { return measurement_bound(kind); }
};

/// L1 distance between the two distributions. Lies in [0, 2].
inline DiscrepancyMeasurement beta_measure(const PolicyDistribution& pi,
                                           const PolicyDistribution& mu) {
  if (pi.size() != mu.size()) throw InvalidInput("beta_measure: action counts differ");
  double sum = 0.0;
  for (std::size_t a = 0; a < pi.size(); ++a) sum += std::abs(pi[a] - mu[a]);
  return {MeasurementKind::Beta, sum};
}

/// Absolute probability gap at the sampled action. Lies in [0, 1].
inline DiscrepancyMeasurement eta_measure(const PolicyDistribution& pi,
                                          const PolicyDistribution& mu, std::size_t action) {
  if (pi.size() != mu.size()) throw InvalidInput("eta_measure: action counts differ");
  if (action >= pi.size()) throw InvalidInput("eta_measure: action index out of range");
  return {MeasurementKind::Eta, std::abs(pi[action] - mu[action])};
}

inline DiscrepancyMeasurement measure(MeasurementKind kind, const PolicyDistribution& pi,
                                      const PolicyDistribution& mu, std::size_t action) {
  return kind == MeasurementKind::Beta ? beta_measure(pi, mu) : eta_measure(pi, mu, action);
}

/// Values at or above the bound are near off-policy.
inline PolicyCase classify_case(const DiscrepancyMeasurement& m) noexcept {
  return m.value < m.bound() ? PolicyCase::NearOnPolicy : PolicyCase::NearOffPolicy;
}

}  // namespace rdqn

#endif  // RDQN_POLICY_HPP
