#ifndef RDQN_RETURNS_HPP
#define RDQN_RETURNS_HPP

#include <algorithm>
#include <cmath>
#include <concepts>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include "rdqn/error.hpp"
#include "rdqn/policy.hpp"
#include "rdqn/replay.hpp"

namespace rdqn {

/// The return-based algorithms that fit the unified multi-step target.
enum class StrategyKind { WatkinsQ, PengWilliamsQ, GeneralQ, IS, TB, QPi, Retrace, QM };

inline constexpr StrategyKind kAllBaseKinds[] = {
    StrategyKind::WatkinsQ, StrategyKind::PengWilliamsQ, StrategyKind::GeneralQ,
    StrategyKind::IS,       StrategyKind::TB,            StrategyKind::QPi,
    StrategyKind::Retrace};

inline const char* to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::WatkinsQ: return "watkins";
    case StrategyKind::PengWilliamsQ: return "pw";
    case StrategyKind::GeneralQ: return "general";
    case StrategyKind::IS: return "is";
    case StrategyKind::TB: return "tb";
    case StrategyKind::QPi: return "qpi";
    case StrategyKind::Retrace: return "retrace";
    case StrategyKind::QM: return "qm";
  }
  return "?";
}

inline std::optional<StrategyKind> strategy_from_string(std::string_view name) {
  for (auto kind : kAllBaseKinds) {
    if (name == to_string(kind)) return kind;
  }
  if (name == "qm") return StrategyKind::QM;
  return std::nullopt;
}

/// How the trace coefficient C_s is computed, plus lambda.
///
/// QM picks the truncated-ratio coefficient in near on-policy steps and the
/// target-probability coefficient in near off-policy steps; its bootstrap and
/// TD error follow `base`.
class TraceStrategy {
 public:
  static TraceStrategy make(StrategyKind kind, double lambda) {
    if (kind == StrategyKind::QM) {
      throw InvalidInput("QM needs a base strategy and a measurement; use TraceStrategy::qm");
    }
    return TraceStrategy(kind, lambda, kind, MeasurementKind::Beta);
  }

  static TraceStrategy qm(StrategyKind base, MeasurementKind measurement, double lambda) {
    if (base == StrategyKind::QM) throw InvalidInput("QM cannot use QM as its base");
    return TraceStrategy(StrategyKind::QM, lambda, base, measurement);
  }

  /// Caps the importance ratio of IS at `max_ratio`. Off by default.
  TraceStrategy& with_ratio_clip(double max_ratio) {
    if (!(max_ratio > 0.0) || !std::isfinite(max_ratio)) {
      throw InvalidInput("ratio clip must be positive and finite");
    }
    ratio_clip_ = max_ratio;
    return *this;
  }

  StrategyKind kind() const noexcept { return kind_; }
  double lambda() const noexcept { return lambda_; }
  /// The strategy's own kind unless it is QM.
  StrategyKind base() const noexcept { return base_; }
  MeasurementKind measurement() const noexcept { return measurement_; }
  std::optional<double> ratio_clip() const noexcept { return ratio_clip_; }
  bool is_qm() const noexcept { return kind_ == StrategyKind::QM; }

  std::string name() const {
    std::string out = to_string(kind_);
    if (is_qm()) out += std::string("-") + to_string(base_) + "-" + to_string(measurement_);
    return out;
  }

 private:
  TraceStrategy(StrategyKind kind, double lambda, StrategyKind base, MeasurementKind m)
      : kind_(kind), lambda_(lambda), base_(base), measurement_(m) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
      throw InvalidInput("lambda must lie in [0, 1], got " + std::to_string(lambda));
    }
  }

  StrategyKind kind_;
  double lambda_;
  StrategyKind base_;
  MeasurementKind measurement_;
  std::optional<double> ratio_clip_;
};

/// Z(x'): greedy value or expectation under the target policy.
enum class BootstrapKind { MaxQ, ExpectedPiQ };

/// Which next-state and current-state terms form delta_t.
enum class TdErrorKind { MaxNextMinusSampled, MaxNextMinusMax, ExpNextMinusExp, ExpNextMinusSampled };

inline BootstrapKind bootstrap_kind(const TraceStrategy& s) noexcept {
  switch (s.base()) {
    case StrategyKind::WatkinsQ:
    case StrategyKind::PengWilliamsQ: return BootstrapKind::MaxQ;
    default: return BootstrapKind::ExpectedPiQ;
  }
}

inline TdErrorKind td_error_kind(const TraceStrategy& s) noexcept {
  switch (s.base()) {
    case StrategyKind::WatkinsQ: return TdErrorKind::MaxNextMinusSampled;
    case StrategyKind::PengWilliamsQ: return TdErrorKind::MaxNextMinusMax;
    case StrategyKind::GeneralQ: return TdErrorKind::ExpNextMinusExp;
    default: return TdErrorKind::ExpNextMinusSampled;
  }
}

namespace detail {

inline double importance_ratio(const PolicyDistribution& pi, const PolicyDistribution& mu,
                               std::size_t action) {
  const double m = mu[action];
  if (!(m > 0.0)) throw DomainError("behavior probability of the sampled action is zero");
  return pi[action] / m;
}

}  // namespace detail

/// Trace coefficient C_s for the sampled `action`. `policy_case` must be
/// present exactly when the strategy is QM.
///
/// Watkins cuts the trace (0) when the action is not greedy under `pi`.
/// IS is lambda * pi/mu; lambda = 1 gives the plain ratio.
inline double trace_coefficient(const TraceStrategy& strategy, const PolicyDistribution& pi,
                                const PolicyDistribution& mu, std::size_t action,
                                std::optional<PolicyCase> policy_case = std::nullopt) {
  if (pi.size() != mu.size()) throw InvalidInput("trace_coefficient: action counts differ");
  if (action >= pi.size()) throw InvalidInput("trace_coefficient: action index out of range");
  if (strategy.is_qm() != policy_case.has_value()) {
    throw InvalidInput(strategy.is_qm() ? "QM trace coefficient needs a policy case"
                                        : "policy case given to a non-QM strategy");
  }
  const double lambda = strategy.lambda();
  switch (strategy.kind()) {
    case StrategyKind::WatkinsQ:
      return action == pi.greedy_action() ? lambda : 0.0;
    case StrategyKind::PengWilliamsQ:
    case StrategyKind::GeneralQ:
    case StrategyKind::QPi:
      return lambda;
    case StrategyKind::IS: {
      double ratio = detail::importance_ratio(pi, mu, action);
      if (auto clip = strategy.ratio_clip()) ratio = std::min(ratio, *clip);
      return lambda * ratio;
    }
    case StrategyKind::TB:
      return lambda * pi[action];
    case StrategyKind::Retrace:
      return lambda * std::min(1.0, detail::importance_ratio(pi, mu, action));
    case StrategyKind::QM: {
      const double ratio = detail::importance_ratio(pi, mu, action);
      return *policy_case == PolicyCase::NearOnPolicy ? lambda * std::min(1.0, ratio)
                                                      : lambda * pi[action];
    }
  }
  return 0.0;
}

inline double max_value(std::span<const double> q) { return q[argmax(q)]; }

/// Z(x'). Zero at a terminal next state.
inline double bootstrap_value(BootstrapKind kind, std::span<const double> q_next,
                              const PolicyDistribution& pi_next, bool terminal) {
  if (q_next.size() != pi_next.size()) throw InvalidInput("bootstrap_value: length mismatch");
  if (terminal) return 0.0;
  return kind == BootstrapKind::MaxQ ? max_value(q_next) : expected_q(pi_next, q_next);
}

/// delta_t for one transition. The next-state term vanishes when `terminal`.
inline double td_error(TdErrorKind kind, double reward, double gamma, std::span<const double> q_t,
                       std::span<const double> q_next, const PolicyDistribution& pi_t,
                       const PolicyDistribution& pi_next, std::size_t action, bool terminal) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw InvalidInput("gamma must lie in [0, 1]");
  if (q_t.size() != q_next.size() || q_t.size() != pi_t.size() || q_t.size() != pi_next.size()) {
    throw InvalidInput("td_error: length mismatch");
  }
  if (action >= q_t.size()) throw InvalidInput("td_error: action index out of range");

  double next = 0.0;
  if (!terminal) {
    const bool greedy_next =
        kind == TdErrorKind::MaxNextMinusSampled || kind == TdErrorKind::MaxNextMinusMax;
    next = greedy_next ? max_value(q_next) : expected_q(pi_next, q_next);
  }
  double current = 0.0;
  switch (kind) {
    case TdErrorKind::MaxNextMinusSampled:
    case TdErrorKind::ExpNextMinusSampled: current = q_t[action]; break;
    case TdErrorKind::MaxNextMinusMax: current = max_value(q_t); break;
    case TdErrorKind::ExpNextMinusExp: current = expected_q(pi_t, q_t); break;
  }
  return reward + gamma * next - current;
}

/// Anything that maps a state to a vector of action values.
template <typename Q, typename State>
concept ActionValueView = requires(const Q& q, const State& s) {
  { q.predict(s) } -> std::convertible_to<std::vector<double>>;
};

/// Random-access run of transitions (SegmentView, std::vector<Transition>, ...).
template <typename Seg>
concept TransitionSegment = requires(const Seg& seg, std::size_t i) {
  { seg.size() } -> std::convertible_to<std::size_t>;
  seg[i].state;
  seg[i].behavior;
};

template <TransitionSegment Seg>
using segment_state_t = std::remove_cvref_t<decltype(std::declval<const Seg&>()[0].state)>;

/// The multi-step target for the head of a segment together with the terms
/// that produced it. Index j of the per-step vectors is segment step j + 1.
struct ReturnTarget {
  double y = 0.0;
  std::vector<double> per_step_traces;  // prod_{i=1..s} C_i
  std::vector<double> per_step_deltas;  // delta_s
  std::vector<double> per_step_coefficients;
  std::vector<DiscrepancyMeasurement> per_step_measurements;  // QM only
  std::vector<PolicyCase> per_step_cases;                     // QM only
};

/// Settings of the target computation that are not part of the strategy.
struct TargetSettings {
  double gamma = 0.99;
  double epsilon_pi = 0.01;  // target policy is epsilon-greedy w.r.t. the online Q
};

/// Y(x_0, a_0) = r_0 + gamma Z(x_1) + sum_{s=1}^{k-1} gamma^s (prod_{i=1}^{s} C_i) delta_s.
///
/// Action values in Z and delta come from `q_target`; the target policy (and so
/// greedy actions, expectations and measurements) comes from `q_online`. The
/// sum stops after the first terminal transition.
template <TransitionSegment Segment, typename QOnline, typename QTarget>
  requires ActionValueView<QOnline, segment_state_t<Segment>> &&
           ActionValueView<QTarget, segment_state_t<Segment>>
ReturnTarget compute_target(const Segment& segment, const TraceStrategy& strategy,
                            const QOnline& q_online, const QTarget& q_target,
                            const TargetSettings& settings) {
  using State = segment_state_t<Segment>;
  if (segment.size() == 0) throw InvalidInput("compute_target: empty segment");
  const double gamma = settings.gamma;
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw InvalidInput("gamma must lie in [0, 1]");

  const BootstrapKind bk = bootstrap_kind(strategy);
  const TdErrorKind tk = td_error_kind(strategy);

  // Values at a state, reused when x_s equals the previous transition's x'.
  struct Evaluated {
    std::vector<double> target_q;
    PolicyDistribution pi;
  };
  auto evaluate = [&](const State& s) {
    return Evaluated{q_target.predict(s), epsilon_greedy(q_online.predict(s), settings.epsilon_pi)};
  };
  auto check_behavior = [](const Transition<State>& t, std::size_t n) {
    if (t.behavior.size() != n) {
      throw InvalidInput("stored behavior distribution does not match the action count");
    }
  };

  const Transition<State>& head = segment[0];
  Evaluated next = evaluate(head.next_state);
  check_behavior(head, next.pi.size());

  ReturnTarget out;
  out.y = head.reward + gamma * bootstrap_value(bk, next.target_q, next.pi, head.terminal);
  if (head.terminal) return out;

  double trace = 1.0;
  double discount = 1.0;
  for (std::size_t s = 1; s < segment.size(); ++s) {
    const Transition<State>& tr = segment[s];
    const State& prev_next = segment[s - 1].next_state;
    Evaluated here = tr.state == prev_next ? std::move(next) : evaluate(tr.state);
    check_behavior(tr, here.pi.size());

    std::optional<PolicyCase> policy_case;
    if (strategy.is_qm()) {
      const auto m = measure(strategy.measurement(), here.pi, tr.behavior, tr.action);
      policy_case = classify_case(m);
      out.per_step_measurements.push_back(m);
      out.per_step_cases.push_back(*policy_case);
    }
    const double c = trace_coefficient(strategy, here.pi, tr.behavior, tr.action, policy_case);

    next = evaluate(tr.next_state);
    const double delta = td_error(tk, tr.reward, gamma, here.target_q, next.target_q, here.pi,
                                  next.pi, tr.action, tr.terminal);
    trace *= c;
    discount *= gamma;
    out.y += discount * trace * delta;
    out.per_step_coefficients.push_back(c);
    out.per_step_traces.push_back(trace);
    out.per_step_deltas.push_back(delta);
    if (tr.terminal) break;
  }
  if (!std::isfinite(out.y)) throw DomainError("compute_target produced a non-finite target");
  return out;
}

}  // namespace rdqn

#endif  // RDQN_RETURNS_HPP
