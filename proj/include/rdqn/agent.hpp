#ifndef RDQN_AGENT_HPP
#define RDQN_AGENT_HPP

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "rdqn/envs.hpp"
#include "rdqn/error.hpp"
#include "rdqn/policy.hpp"
#include "rdqn/qfunc.hpp"
#include "rdqn/replay.hpp"
#include "rdqn/returns.hpp"

namespace rdqn {

/// Behavior exploration rate over the course of a trial.
class EpsilonSchedule {
 public:
  struct LinearDecay {
    double start = 0.5;
    double end = 0.01;
    std::uint64_t decay_steps = 10000;
  };
  /// Redraws epsilon from `values` with `probs` at the start of every
  /// `switch_period`-th episode.
  struct SwitchingRandom {
    std::vector<double> values{0.5, 0.1, 0.01};
    std::vector<double> probs{0.3, 0.4, 0.3};
    std::uint64_t switch_period = 1;
  };

  EpsilonSchedule() : EpsilonSchedule(SwitchingRandom{}) {}

  explicit EpsilonSchedule(LinearDecay d) : kind_(d) {
    check_epsilon(d.start);
    check_epsilon(d.end);
  }

  explicit EpsilonSchedule(SwitchingRandom s) : kind_(std::move(s)) {
    const auto& sw = std::get<SwitchingRandom>(kind_);
    if (sw.values.empty() || sw.values.size() != sw.probs.size()) {
      throw InvalidInput("switching schedule needs matching, nonempty values and probs");
    }
    if (sw.switch_period == 0) throw InvalidInput("switch period must be positive");
    double total = 0.0;
    for (double p : sw.probs) {
      if (!(p >= 0.0)) throw InvalidInput("switching probabilities must be non-negative");
      total += p;
    }
    if (std::abs(total - 1.0) > kProbabilitySumTolerance) {
      throw InvalidInput("switching probabilities must sum to 1");
    }
    for (double v : sw.values) check_epsilon(v);
    current_ = sw.values.front();
  }

  bool is_switching() const noexcept { return std::holds_alternative<SwitchingRandom>(kind_); }

  /// Called before episode `episode` (0-based) starts.
  template <typename Rng>
  void begin_episode(std::uint64_t episode, Rng& rng) {
    auto* sw = std::get_if<SwitchingRandom>(&kind_);
    if (!sw || episode % sw->switch_period != 0) return;
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    double cumulative = 0.0;
    current_ = sw->values.back();
    for (std::size_t i = 0; i < sw->values.size(); ++i) {
      cumulative += sw->probs[i];
      if (u < cumulative) {
        current_ = sw->values[i];
        break;
      }
    }
  }

  double current(std::uint64_t global_step) const {
    if (const auto* d = std::get_if<LinearDecay>(&kind_)) {
      if (global_step >= d->decay_steps) return d->end;
      const double t = static_cast<double>(global_step) / static_cast<double>(d->decay_steps);
      return d->start + t * (d->end - d->start);
    }
    return current_;
  }

 private:
  static void check_epsilon(double e) {
    if (!(e > 0.0 && e <= 0.5)) throw InvalidInput("behavior epsilon must lie in (0, 1/2]");
  }

  std::variant<LinearDecay, SwitchingRandom> kind_;
  double current_ = 0.5;
};

enum class Representation { Tabular, Mlp };

struct AgentConfig {
  double gamma = 0.99;
  std::size_t segment_length = 10;  // k
  std::size_t batch_size = 32;
  std::optional<double> learning_rate;  // default: 0.1 tabular, 1e-3 MLP
  std::uint64_t sync_period = 500;      // F, in environment steps
  std::uint64_t episodes = 0;           // M; 0 = no episode cap
  std::uint64_t total_steps = 0;        // 0 = no step cap
  std::uint64_t steps_per_epoch = 2000;
  std::size_t max_episode_steps = 0;  // T; 0 = environment default
  double epsilon_pi = 0.01;
  TraceStrategy strategy = TraceStrategy::make(StrategyKind::Retrace, 0.9);
  std::uint64_t warmup_steps = 1000;
  std::size_t replay_capacity = 50000;
  std::size_t hidden_units = 64;
  Representation representation = Representation::Mlp;
  std::size_t grid_bins = 40;  // per dimension, tabular Mountain Car
  EpsilonSchedule behavior;
  std::size_t eval_episodes = 1;  // greedy evaluation episodes per epoch
  bool record_acting = false;     // keep the acting-time Q rows for auditing

  double effective_learning_rate() const {
    return learning_rate.value_or(representation == Representation::Tabular ? 0.1 : 1e-3);
  }

  void validate() const {
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw InvalidInput("gamma must lie in [0, 1]");
    if (segment_length == 0) throw InvalidInput("segment_length must be positive");
    if (batch_size == 0) throw InvalidInput("batch_size must be positive");
    if (sync_period == 0) throw InvalidInput("sync_period must be positive");
    if (steps_per_epoch == 0) throw InvalidInput("steps_per_epoch must be positive");
    if (replay_capacity == 0) throw InvalidInput("replay_capacity must be positive");
    if (hidden_units == 0) throw InvalidInput("hidden_units must be positive");
    if (grid_bins == 0) throw InvalidInput("grid_bins must be positive");
    if (episodes == 0 && total_steps == 0) {
      throw InvalidInput("set episodes or total_steps; a trial needs a budget");
    }
    if (!(epsilon_pi > 0.0 && epsilon_pi <= 0.5)) {
      throw InvalidInput("epsilon_pi must lie in (0, 1/2]");
    }
    const double lr = effective_learning_rate();
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw InvalidInput("learning_rate must be >= 0");
  }
};

struct EpochRecord {
  std::uint64_t epoch = 0;     // 1-based
  std::uint64_t steps = 0;     // environment steps in this epoch
  double mean_return = 0.0;    // over episodes completed in this epoch; NaN if none
  double mean_loss = 0.0;      // over learner updates; NaN if none
  double frac_near_on_policy = 0.0;  // QM only; NaN otherwise
  double eval_return = 0.0;          // greedy evaluation; NaN if disabled
};

struct TrialLog {
  std::uint64_t seed = 0;
  std::vector<EpochRecord> epochs;
  std::vector<double> episode_returns;
  std::vector<double> update_losses;
  std::vector<double> update_measurements;  // mean measurement per update (QM), else NaN
  std::uint64_t near_on_policy = 0;
  std::uint64_t near_off_policy = 0;
};

/// Mean of the last `window` epochs' mean returns, skipping epochs without a
/// completed episode. NaN when nothing qualifies.
inline double final_score(const TrialLog& log, std::size_t window = 5) {
  double sum = 0.0;
  std::size_t count = 0;
  const std::size_t n = log.epochs.size();
  for (std::size_t i = n > window ? n - window : 0; i < n; ++i) {
    if (std::isnan(log.epochs[i].mean_return)) continue;
    sum += log.epochs[i].mean_return;
    ++count;
  }
  return count ? sum / static_cast<double>(count) : std::numeric_limits<double>::quiet_NaN();
}

struct ActionChoice {
  std::size_t action;
  PolicyDistribution behavior;
};

/// Samples an action from the epsilon-greedy distribution of `q` at `state`
/// and returns it together with that distribution.
template <QFunction Q, typename Rng>
ActionChoice select_action(const Q& q, const typename Q::state_type& state, double epsilon,
                           Rng& rng) {
  PolicyDistribution dist = epsilon_greedy(q.predict(state), epsilon);
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double cumulative = 0.0;
  std::size_t action = dist.size() - 1;
  for (std::size_t a = 0; a < dist.size(); ++a) {
    cumulative += dist[a];
    if (u < cumulative) {
      action = a;
      break;
    }
  }
  return {action, std::move(dist)};
}

struct UpdateStats {
  double mean_loss = 0.0;
  double measurement_sum = 0.0;
  std::uint64_t near_on = 0;
  std::uint64_t near_off = 0;
};

/// What the actor saw when it chose the transition with the same insertion index.
struct ActingRecord {
  std::vector<double> q_row;
  double epsilon;
  PolicyDistribution behavior;
};

/// One learning trial: an environment, an online/target approximator pair,
/// a replay memory, and the acting/learning loop around them.
template <QFunction Q>
class Trainer {
 public:
  using State = typename Q::state_type;
  using Encoder = std::function<State(const Observation&)>;

  Trainer(AgentConfig config, std::unique_ptr<Environment> env, std::unique_ptr<Environment> eval_env,
          Q initial, Encoder encoder, std::uint64_t seed)
      : config_(std::move(config)), env_(std::move(env)), eval_env_(std::move(eval_env)),
        pair_(std::move(initial), config_.sync_period), memory_(config_.replay_capacity),
        encoder_(std::move(encoder)), seed_(seed) {
    config_.validate();
    if (!env_) throw InvalidInput("trainer needs an environment");
    if (env_->spec().num_actions != pair_.online().num_actions()) {
      throw InvalidInput("approximator action count does not match the environment");
    }
    // Independent streams: methods compared under one seed see the same
    // exploration-rate draws and episode starts even once their actions differ.
    act_rng_ = stream(seed, 1);
    eval_rng_ = stream(seed, 2);
    schedule_rng_ = stream(seed, 3);
    reset_rng_ = stream(seed, 4);
    replay_rng_ = stream(seed, 5);
  }

  const TargetPair<Q>& pair() const noexcept { return pair_; }
  const ReplayMemory<State>& memory() const noexcept { return memory_; }
  const std::vector<ActingRecord>& acting_log() const noexcept { return acting_log_; }
  const AgentConfig& config() const noexcept { return config_; }

  TargetSettings target_settings() const { return {config_.gamma, config_.epsilon_pi}; }

  /// Targets for every segment are computed against the current networks
  /// first, then one train_step per segment head is applied.
  template <typename SegmentRange>
  UpdateStats learner_update(const SegmentRange& segments) {
    UpdateStats stats;
    if (segments.empty()) return stats;
    const auto settings = target_settings();
    std::vector<double> targets;
    targets.reserve(segments.size());
    for (const auto& seg : segments) {
      ReturnTarget rt = compute_target(seg, config_.strategy, pair_.online(), pair_.target(), settings);
      for (const auto& m : rt.per_step_measurements) stats.measurement_sum += m.value;
      for (auto c : rt.per_step_cases) {
        (c == PolicyCase::NearOnPolicy ? stats.near_on : stats.near_off) += 1;
      }
      targets.push_back(rt.y);
    }
    double loss = 0.0;
    std::size_t i = 0;
    for (const auto& seg : segments) {
      const auto& head = seg[0];
      loss += pair_.train_step(head.state, head.action, targets[i++]);
    }
    stats.mean_loss = loss / static_cast<double>(segments.size());
    return stats;
  }

  TrialLog run() {
    TrialLog log;
    log.seed = seed_;
    Epoch epoch;
    std::uint64_t global_step = 0;
    const bool qm = config_.strategy.is_qm();

    for (std::uint64_t episode = 0;; ++episode) {
      if (config_.episodes && episode >= config_.episodes) break;
      if (config_.total_steps && global_step >= config_.total_steps) break;

      config_.behavior.begin_episode(episode, schedule_rng_);
      State state = encoder_(env_->reset(reset_rng_));
      double episode_return = 0.0;
      while (true) {
        const double epsilon = config_.behavior.current(global_step);
        ActionChoice choice = select_action(pair_.online(), state, epsilon, act_rng_);
        if (config_.record_acting) {
          acting_log_.push_back({pair_.online().predict(state), epsilon, choice.behavior});
        }
        StepResult sr = env_->step(choice.action);
        State next = encoder_(sr.next_state);
        episode_return += sr.reward;
        memory_.push({state, choice.action, sr.reward, next, sr.terminal, std::move(choice.behavior),
                      static_cast<std::int64_t>(episode)});
        ++global_step;
        ++epoch.steps;

        if (global_step > config_.warmup_steps) {
          auto segments =
              memory_.sample_segments(config_.batch_size, config_.segment_length, replay_rng_);
          UpdateStats us = learner_update(segments);
          log.update_losses.push_back(us.mean_loss);
          const auto classified = us.near_on + us.near_off;
          log.update_measurements.push_back(
              qm && classified ? us.measurement_sum / static_cast<double>(classified)
                               : std::numeric_limits<double>::quiet_NaN());
          log.near_on_policy += us.near_on;
          log.near_off_policy += us.near_off;
          epoch.loss_sum += us.mean_loss;
          ++epoch.updates;
          epoch.near_on += us.near_on;
          epoch.near_off += us.near_off;
        }
        pair_.maybe_sync(global_step);
        state = std::move(next);

        const bool episode_over = sr.terminal || sr.truncated;
        if (episode_over) {
          log.episode_returns.push_back(episode_return);
          epoch.return_sum += episode_return;
          ++epoch.episodes;
        }
        if (epoch.steps == config_.steps_per_epoch) close_epoch(epoch, log, qm);
        if (episode_over) break;
        if (config_.total_steps && global_step >= config_.total_steps) break;
      }
    }
    if (epoch.steps > 0) close_epoch(epoch, log, qm);
    return log;
  }

  /// Mean undiscounted return of greedy episodes on the evaluation environment.
  double evaluate_greedy(std::size_t episodes) {
    if (!eval_env_ || episodes == 0) return std::numeric_limits<double>::quiet_NaN();
    double total = 0.0;
    for (std::size_t e = 0; e < episodes; ++e) {
      State s = encoder_(eval_env_->reset(eval_rng_));
      while (true) {
        const auto q = pair_.online().predict(s);
        StepResult sr = eval_env_->step(argmax(q));
        total += sr.reward;
        if (sr.terminal || sr.truncated) break;
        s = encoder_(sr.next_state);
      }
    }
    return total / static_cast<double>(episodes);
  }

 private:
  struct Epoch {
    std::uint64_t steps = 0;
    std::uint64_t episodes = 0;
    double return_sum = 0.0;
    std::uint64_t updates = 0;
    double loss_sum = 0.0;
    std::uint64_t near_on = 0;
    std::uint64_t near_off = 0;
  };

  void close_epoch(Epoch& e, TrialLog& log, bool qm) {
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();
    EpochRecord r;
    r.epoch = log.epochs.size() + 1;
    r.steps = e.steps;
    r.mean_return = e.episodes ? e.return_sum / static_cast<double>(e.episodes) : nan;
    r.mean_loss = e.updates ? e.loss_sum / static_cast<double>(e.updates) : nan;
    const auto classified = e.near_on + e.near_off;
    r.frac_near_on_policy =
        qm && classified ? static_cast<double>(e.near_on) / static_cast<double>(classified) : nan;
    r.eval_return = evaluate_greedy(config_.eval_episodes);
    log.epochs.push_back(r);
    e = Epoch{};
  }

  AgentConfig config_;
  std::unique_ptr<Environment> env_;
  std::unique_ptr<Environment> eval_env_;
  TargetPair<Q> pair_;
  ReplayMemory<State> memory_;
  Encoder encoder_;
  std::uint64_t seed_;
  static std::mt19937_64 stream(std::uint64_t seed, std::uint64_t id) {
    std::seed_seq seq{seed, id};
    return std::mt19937_64(seq);
  }

  std::mt19937_64 act_rng_;
  std::mt19937_64 eval_rng_;
  std::mt19937_64 schedule_rng_;
  std::mt19937_64 reset_rng_;
  std::mt19937_64 replay_rng_;
  std::vector<ActingRecord> acting_log_;
};

/// One-hot encoding of a discrete observation {index}.
inline std::vector<double> one_hot(const Observation& obs, std::size_t num_states) {
  std::vector<double> v(num_states, 0.0);
  v.at(static_cast<std::size_t>(obs.at(0))) = 1.0;
  return v;
}

/// Builds the approximator and feature map that suit `env_name` under the
/// configured representation and runs one trial.
///
/// Tabular: Cliff Walking uses the cell index, Mountain Car a uniform
/// grid_bins x grid_bins grid; CartPole has no tabular form.
/// MLP: CartPole raw state, Mountain Car scaled to [-1, 1], Cliff Walking one-hot.
inline TrialLog run_trial(const AgentConfig& config, const std::string& env_name,
                          std::uint64_t seed) {
  config.validate();
  auto env = make_environment(env_name, config.max_episode_steps);
  auto eval_env = make_environment(env_name, config.max_episode_steps);
  const EnvSpec spec = env->spec();
  const double lr = config.effective_learning_rate();

  if (config.representation == Representation::Tabular) {
    if (spec.observation_kind == ObservationKind::Discrete) {
      TabularQ q(spec.num_states, spec.num_actions, lr);
      auto enc = [](const Observation& o) { return static_cast<std::size_t>(o.at(0)); };
      return Trainer<TabularQ>(config, std::move(env), std::move(eval_env), std::move(q), enc, seed)
          .run();
    }
    if (spec.name == "mountaincar") {
      auto grid = GridDiscretizer::mountain_car(config.grid_bins, config.grid_bins);
      TabularQ q(grid.num_cells(), spec.num_actions, lr);
      return Trainer<TabularQ>(config, std::move(env), std::move(eval_env), std::move(q), grid, seed)
          .run();
    }
    throw InvalidInput("environment '" + env_name + "' has no tabular representation");
  }

  std::seed_seq init_seq{seed, std::uint64_t{0}};
  std::mt19937_64 init_rng(init_seq);
  typename Trainer<MlpQ>::Encoder enc;
  std::size_t input_dim = spec.observation_dim;
  if (spec.name == "mountaincar") {
    enc = normalize_mountain_car;
  } else if (spec.observation_kind == ObservationKind::Discrete) {
    input_dim = spec.num_states;
    enc = [n = spec.num_states](const Observation& o) { return one_hot(o, n); };
  } else {
    enc = [](const Observation& o) { return o; };
  }
  MlpQ q(input_dim, config.hidden_units, spec.num_actions, lr, init_rng);
  return Trainer<MlpQ>(config, std::move(env), std::move(eval_env), std::move(q), std::move(enc), seed)
      .run();
}

}  // namespace rdqn

#endif  // RDQN_AGENT_HPP
