#ifndef RDQN_VERIFY_HPP
#define RDQN_VERIFY_HPP

// Self-check suites exposed through `rdqn verify`. Each one compares the
// library against an independent route (brute-force expansion, exhaustive
// enumeration, finite differences, shortest-path search).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "rdqn/envs.hpp"
#include "rdqn/policy.hpp"
#include "rdqn/qfunc.hpp"
#include "rdqn/replay.hpp"
#include "rdqn/returns.hpp"
#include "rdqn/testing/oracle.hpp"

namespace rdqn {

struct VerifyReport {
  std::string suite;
  bool passed = true;
  std::uint64_t checks = 0;
  std::uint64_t failures = 0;
  double max_error = 0.0;
  std::string detail;
};

// ---------------------------------------------------------------------------
// Random tabular segments shared by the oracle comparisons.

struct RandomSegmentCase {
  testing::Table online;
  testing::Table target;
  std::vector<Transition<std::size_t>> segment;
  std::vector<testing::OracleStep> oracle_segment;
  double gamma;
  double epsilon_pi;
};

/// Random tables in [-1, 1], 1..max_k steps over n in [2, max_n] actions.
/// Behavior distributions are epsilon-greedy over perturbed online values or
/// random strictly positive vectors. Consecutive steps usually chain
/// (x_s == x'_{s-1}); terminals may appear anywhere.
inline RandomSegmentCase random_segment_case(std::mt19937_64& rng, std::size_t max_k = 6,
                                             std::size_t max_n = 4) {
  std::uniform_int_distribution<std::size_t> pick_n(2, max_n), pick_k(1, max_k);
  std::uniform_real_distribution<double> unit(-1.0, 1.0), prob(0.0, 1.0);
  const std::size_t n = pick_n(rng);
  const std::size_t k = pick_k(rng);
  const std::size_t num_states = 5;
  std::uniform_int_distribution<std::size_t> pick_state(0, num_states - 1), pick_action(0, n - 1);

  RandomSegmentCase c;
  c.online.assign(num_states, std::vector<double>(n));
  c.target.assign(num_states, std::vector<double>(n));
  for (std::size_t s = 0; s < num_states; ++s) {
    for (std::size_t a = 0; a < n; ++a) {
      c.online[s][a] = unit(rng);
      // Target shares the online greedy structure half the time.
      c.target[s][a] = prob(rng) < 0.5 ? c.online[s][a] + 0.1 * unit(rng) : unit(rng);
    }
  }
  static constexpr double kEps[] = {0.5, 0.1, 0.01};
  c.gamma = 0.5 + 0.5 * prob(rng);
  c.epsilon_pi = kEps[std::uniform_int_distribution<int>(0, 2)(rng)];

  std::size_t state = pick_state(rng);
  for (std::size_t j = 0; j < k; ++j) {
    if (j > 0 && prob(rng) < 0.1) state = pick_state(rng);  // break the chain now and then
    std::vector<double> mu(n);
    if (prob(rng) < 0.6) {
      std::vector<double> q = c.online[state];
      for (auto& v : q) v += 0.5 * unit(rng);
      const double eps = kEps[std::uniform_int_distribution<int>(0, 2)(rng)];
      const auto d = epsilon_greedy(q, eps);
      mu.assign(d.probs().begin(), d.probs().end());
    } else {
      double total = 0.0;
      for (auto& p : mu) total += (p = 0.05 + prob(rng));
      for (auto& p : mu) p /= total;
    }
    const std::size_t action = pick_action(rng);
    const double reward = unit(rng);
    const std::size_t next = pick_state(rng);
    const bool terminal = prob(rng) < 0.12;
    c.segment.push_back({state, action, reward, next, terminal, PolicyDistribution(mu), 0});
    c.oracle_segment.push_back({state, action, reward, next, terminal, mu});
    state = next;
  }
  return c;
}

/// Tabular view over a plain table, for feeding random tables to the engine.
struct TableView {
  const testing::Table* table;
  std::vector<double> predict(std::size_t s) const { return table->at(s); }
};

inline testing::OracleStrategy to_oracle(const TraceStrategy& s) {
  return {s.kind(), s.lambda(), s.base(), s.measurement()};
}

/// Every plain strategy plus QM over every base with both measurements.
inline std::vector<TraceStrategy> all_strategies(double lambda) {
  std::vector<TraceStrategy> out;
  for (auto k : kAllBaseKinds) out.push_back(TraceStrategy::make(k, lambda));
  for (auto k : kAllBaseKinds) {
    out.push_back(TraceStrategy::qm(k, MeasurementKind::Beta, lambda));
    out.push_back(TraceStrategy::qm(k, MeasurementKind::Eta, lambda));
  }
  return out;
}

inline VerifyReport verify_oracle(std::size_t cases = 1000, std::uint64_t seed = 12345,
                                  double tolerance = 1e-10) {
  VerifyReport rep;
  rep.suite = "oracle";
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> lam(0.0, 1.0);
  for (std::size_t i = 0; i < cases; ++i) {
    const auto c = random_segment_case(rng);
    const double lambda = lam(rng);
    for (const auto& strategy : all_strategies(lambda)) {
      const double engine =
          compute_target(c.segment, strategy, TableView{&c.online}, TableView{&c.target},
                         TargetSettings{c.gamma, c.epsilon_pi})
              .y;
      const double oracle = testing::oracle_target(c.oracle_segment, to_oracle(strategy), c.online,
                                                   c.target, c.gamma, c.epsilon_pi);
      const double err = std::abs(engine - oracle);
      rep.max_error = std::max(rep.max_error, err);
      ++rep.checks;
      if (!(err < tolerance)) ++rep.failures;
    }
  }
  rep.passed = rep.failures == 0;
  std::ostringstream os;
  os << rep.checks << " targets, max |engine - oracle| = " << rep.max_error;
  rep.detail = os.str();
  return rep;
}

// ---------------------------------------------------------------------------
// Bound soundness: enumerate epsilon-greedy pairs on a grid and compare the
// measurement-based classification against the greedy-action definitions.

inline VerifyReport verify_bounds(std::size_t max_n = 10, int grid_steps = 50) {
  VerifyReport rep;
  rep.suite = "bounds";
  double worst_same_beta_identity = 0.0;
  for (std::size_t n = 2; n <= max_n; ++n) {
    for (int i = 1; i <= grid_steps; ++i) {
      for (int j = 1; j <= grid_steps; ++j) {
        const double eps_pi = i / 100.0;
        const double eps_mu = j / 100.0;
        // Values whose argmax is action g.
        auto q_with_greedy = [n](std::size_t g) {
          std::vector<double> q(n, 0.0);
          q[g] = 1.0;
          return q;
        };
        const auto mu = epsilon_greedy(q_with_greedy(0), eps_mu);
        for (std::size_t g_pi = 0; g_pi < 2; ++g_pi) {
          const auto pi = epsilon_greedy(q_with_greedy(g_pi), eps_pi);
          const bool same_greedy = g_pi == 0;

          // Definition 1: the greedy actions agree.
          const auto beta = beta_measure(pi, mu);
          const auto beta_case = classify_case(beta);
          ++rep.checks;
          if ((beta_case == PolicyCase::NearOnPolicy) != same_greedy) ++rep.failures;
          if (same_greedy) {
            const double expected = std::abs(eps_mu - eps_pi) * (2.0 * n - 2.0) / n;
            worst_same_beta_identity = std::max(worst_same_beta_identity, std::abs(beta.value - expected));
          }

          // Definition 2: the sampled action is greedy under both or neither.
          for (std::size_t a = 0; a < n; ++a) {
            const bool greedy_pi = a == g_pi;
            const bool greedy_mu = a == 0;
            const auto eta_case = classify_case(eta_measure(pi, mu, a));
            ++rep.checks;
            if ((eta_case == PolicyCase::NearOnPolicy) != (greedy_pi == greedy_mu)) ++rep.failures;
          }
        }
      }
    }
  }
  if (worst_same_beta_identity > 1e-12) ++rep.failures;
  rep.max_error = worst_same_beta_identity;
  rep.passed = rep.failures == 0;
  std::ostringstream os;
  os << rep.checks << " classifications, " << rep.failures
     << " misclassified; same-greedy beta identity error " << worst_same_beta_identity;
  rep.detail = os.str();
  return rep;
}

// ---------------------------------------------------------------------------
// MLP gradients against central differences of (1/2)(y - Q)^2.

inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-10});
  return std::abs(analytic - numeric) / denom;
}

/// Largest relative error over all parameters of one network.
inline double gradient_check(const MlpQ& net, const std::vector<double>& x, std::size_t action,
                             double y, double h = 1e-5) {
  const auto analytic = net.loss_gradient(x, action, y);
  MlpQ probe = net;
  auto params = probe.mutable_parameters();
  auto loss = [&] {
    const double d = y - probe.predict(x)[action];
    return 0.5 * d * d;
  };
  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    const double saved = params[p];
    params[p] = saved + h;
    const double up = loss();
    params[p] = saved - h;
    const double down = loss();
    params[p] = saved;
    worst = std::max(worst, relative_error(analytic[p], (up - down) / (2.0 * h)));
  }
  return worst;
}

inline VerifyReport verify_gradients(std::size_t networks = 20, std::uint64_t seed = 777,
                                     double tolerance = 1e-5) {
  VerifyReport rep;
  rep.suite = "gradients";
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick_in(1, 6), pick_actions(2, 4);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (std::size_t i = 0; i < networks; ++i) {
    const std::size_t in = pick_in(rng), actions = pick_actions(rng);
    MlpQ net(in, 64, actions, 1e-3, rng);
    std::vector<double> x(in);
    for (auto& v : x) v = 2.0 * unit(rng);
    const std::size_t a = std::uniform_int_distribution<std::size_t>(0, actions - 1)(rng);
    const double y = net.predict(x)[a] + 2.0 * unit(rng);
    const double err = gradient_check(net, x, a, y);
    rep.max_error = std::max(rep.max_error, err);
    ++rep.checks;
    if (!(err < tolerance)) ++rep.failures;
  }
  rep.passed = rep.failures == 0;
  std::ostringstream os;
  os << rep.checks << " networks, max relative error " << rep.max_error;
  rep.detail = os.str();
  return rep;
}

// ---------------------------------------------------------------------------
// Environment invariants.

/// Best undiscounted Cliff Walking return from the start, by breadth-first
/// search over the deterministic grid (every step costs 1 unless it falls).
inline double cliff_walking_optimal_return() {
  constexpr std::size_t cells = CliffWalking::kRows * CliffWalking::kCols;
  std::vector<int> dist(cells, -1);
  std::deque<std::size_t> frontier{CliffWalking::kStart};
  dist[CliffWalking::kStart] = 0;
  while (!frontier.empty()) {
    const std::size_t c = frontier.front();
    frontier.pop_front();
    if (c == CliffWalking::kGoal) break;
    for (std::size_t a = 0; a < 4; ++a) {
      const auto m = CliffWalking::transition(c, a);
      if (m.reward < -1.0) continue;  // falling never shortens a path
      if (dist[m.cell] < 0) {
        dist[m.cell] = dist[c] + 1;
        frontier.push_back(m.cell);
      }
    }
  }
  return -static_cast<double>(dist[CliffWalking::kGoal]);
}

inline VerifyReport verify_envs(std::uint64_t seed = 99, std::size_t episodes = 50) {
  VerifyReport rep;
  rep.suite = "envs";
  std::ostringstream notes;
  auto check = [&](bool ok, const std::string& what) {
    ++rep.checks;
    if (!ok) {
      ++rep.failures;
      notes << "FAILED: " << what << "; ";
    }
  };

  check(cliff_walking_optimal_return() == -13.0, "cliff walking optimal return is -13");
  {
    CliffWalking env(100);
    EnvRng rng(seed);
    env.reset(rng);
    bool all_falls = true;
    bool ended_early = false;
    for (int i = 0; i < 100; ++i) {
      const auto r = env.step(CliffWalking::Right);
      all_falls = all_falls && r.reward == -100.0 && !r.terminal;
      if ((r.terminal || r.truncated) && i < 99) ended_early = true;
    }
    check(all_falls && !ended_early, "always-right from start falls every step and never terminates");
  }

  std::mt19937_64 rng(seed);
  for (std::size_t version = 1; version <= 2; ++version) {
    CartPole env = version == 1 ? CartPole::v1() : CartPole::v2();
    EnvRng env_rng(seed + version);
    std::size_t longest = 0;
    for (std::size_t e = 0; e < episodes; ++e) {
      auto s = env.reset(env_rng);
      std::size_t len = 0;
      while (true) {
        // Balancing heuristic so that some episodes reach the cap.
        const std::size_t a = s[2] + 0.5 * s[3] > 0.0 ? 1 : 0;
        const auto r = env.step(a);
        ++len;
        s = r.next_state;
        if (r.terminal || r.truncated) break;
      }
      longest = std::max(longest, len);
    }
    check(longest <= env.spec().max_episode_steps, env.spec().name + " episode length within cap");
  }

  {
    MountainCar env;
    EnvRng env_rng(seed);
    std::uniform_int_distribution<std::size_t> act(0, 2);
    bool bounded = true;
    for (std::size_t e = 0; e < episodes; ++e) {
      env.reset(env_rng);
      while (true) {
        const auto r = env.step(act(rng));
        bounded = bounded && std::abs(r.next_state[1]) <= MountainCar::kMaxSpeed &&
                  r.next_state[0] >= MountainCar::kMinPosition &&
                  r.next_state[0] <= MountainCar::kMaxPosition;
        if (r.terminal || r.truncated) break;
      }
    }
    check(bounded, "mountain car position and velocity stay in range");
  }

  {
    // Same (state, action) gives the same outcome.
    CartPole a = CartPole::v1(), b = CartPole::v1();
    EnvRng ra(seed), rb(seed);
    check(a.reset(ra) == b.reset(rb), "cart-pole reset reproducible for a fixed seed");
    bool same = true;
    for (int i = 0; i < 20 && !a.done(); ++i) same = same && a.step(i % 2).next_state == b.step(i % 2).next_state;
    check(same, "cart-pole dynamics deterministic");
  }

  rep.passed = rep.failures == 0;
  notes << rep.checks << " checks";
  rep.detail = notes.str();
  return rep;
}

}  // namespace rdqn

#endif  // RDQN_VERIFY_HPP
