#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "rdqn/agent.hpp"

using namespace rdqn;

namespace {

AgentConfig cliff_config() {
  AgentConfig c;
  c.representation = Representation::Tabular;
  c.steps_per_epoch = 1000;
  c.episodes = 50;
  c.eval_episodes = 0;
  c.warmup_steps = 100;
  return c;
}

Trainer<TabularQ> cliff_trainer(const AgentConfig& c, TabularQ q, std::uint64_t seed = 1) {
  auto enc = [](const Observation& o) { return static_cast<std::size_t>(o.at(0)); };
  return Trainer<TabularQ>(c, make_environment("cliffwalking", c.max_episode_steps),
                           make_environment("cliffwalking", c.max_episode_steps), std::move(q), enc,
                           seed);
}

bool same_bits(double a, double b) { return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b); }

void expect_identical(const TrialLog& a, const TrialLog& b) {
  ASSERT_EQ(a.epochs.size(), b.epochs.size());
  for (std::size_t i = 0; i < a.epochs.size(); ++i) {
    const auto &x = a.epochs[i], &y = b.epochs[i];
    EXPECT_EQ(x.steps, y.steps);
    EXPECT_TRUE(same_bits(x.mean_return, y.mean_return));
    EXPECT_TRUE(same_bits(x.mean_loss, y.mean_loss));
    EXPECT_TRUE(same_bits(x.frac_near_on_policy, y.frac_near_on_policy));
    EXPECT_TRUE(same_bits(x.eval_return, y.eval_return));
  }
  ASSERT_EQ(a.update_losses.size(), b.update_losses.size());
  for (std::size_t i = 0; i < a.update_losses.size(); ++i) {
    EXPECT_TRUE(same_bits(a.update_losses[i], b.update_losses[i]));
  }
  EXPECT_EQ(a.episode_returns, b.episode_returns);
}

// A small random table and a replay memory filled by acting on it with a
// fixed epsilon.
struct Fixture {
  TabularQ q{8, 4, 0.5};  // four actions, matching the grid task
  ReplayMemory<std::size_t> memory{1000};
};

Fixture make_fixture(double acting_epsilon, std::uint64_t seed) {
  Fixture f;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  for (std::size_t s = 0; s < 8; ++s) {
    for (std::size_t a = 0; a < 4; ++a) f.q.set(s, a, u(rng));
  }
  std::uniform_int_distribution<std::size_t> st(0, 7);
  std::size_t state = st(rng);
  std::int64_t episode = 0;
  for (int i = 0; i < 200; ++i) {
    auto choice = select_action(f.q, state, acting_epsilon, rng);
    const std::size_t next = st(rng);
    const bool terminal = u(rng) > 0.8;
    f.memory.push({state, choice.action, u(rng), next, terminal, choice.behavior, episode});
    if (terminal) {
      ++episode;
      state = st(rng);
    } else {
      state = next;
    }
  }
  return f;
}

}  // namespace

TEST(SelectAction, GreedyFrequency) {
  TabularQ q(1, 4);
  q.set(0, 2, 10.0);
  std::mt19937_64 rng(10);
  const int n = 100000;
  int greedy = 0;
  for (int i = 0; i < n; ++i) {
    const auto c = select_action(q, 0, 0.01, rng);
    greedy += c.action == 2;
    if (i < 10) {
      double sum = 0;
      for (double p : c.behavior.probs()) sum += p;
      EXPECT_NEAR(sum, 1.0, 1e-15);
    }
  }
  const double p = 1 - 0.01 + 0.01 / 4;
  EXPECT_LT(std::abs(greedy - n * p), 3 * std::sqrt(n * p * (1 - p)));
}

TEST(SelectAction, Deterministic) {
  TabularQ q(1, 3);
  q.set(0, 1, 1.0);
  std::mt19937_64 a(5), b(5);
  for (int i = 0; i < 100; ++i) {
    const auto x = select_action(q, 0, 0.5, a);
    const auto y = select_action(q, 0, 0.5, b);
    EXPECT_EQ(x.action, y.action);
    EXPECT_EQ(x.behavior, y.behavior);
  }
}

TEST(EpsilonSchedule, SwitchingFrequencies) {
  EpsilonSchedule sched;
  std::mt19937_64 rng(12);
  const int n = 100000;
  int counts[3] = {0, 0, 0};
  for (int ep = 0; ep < n; ++ep) {
    sched.begin_episode(ep, rng);
    const double e = sched.current(0);
    if (e == 0.5) {
      ++counts[0];
    } else if (e == 0.1) {
      ++counts[1];
    } else if (e == 0.01) {
      ++counts[2];
    } else {
      ADD_FAILURE() << "unexpected epsilon " << e;
    }
  }
  const double probs[] = {0.3, 0.4, 0.3};
  for (int i = 0; i < 3; ++i) {
    EXPECT_LT(std::abs(counts[i] - n * probs[i]), 3 * std::sqrt(n * probs[i] * (1 - probs[i])));
  }
}

TEST(EpsilonSchedule, SwitchPeriodAndLinearDecay) {
  EpsilonSchedule::SwitchingRandom sw;
  sw.switch_period = 3;
  EpsilonSchedule sched(sw);
  std::mt19937_64 rng(1);
  sched.begin_episode(0, rng);
  const double first = sched.current(0);
  sched.begin_episode(1, rng);
  sched.begin_episode(2, rng);
  EXPECT_EQ(sched.current(0), first);

  EpsilonSchedule lin(EpsilonSchedule::LinearDecay{0.5, 0.1, 100});
  EXPECT_EQ(lin.current(0), 0.5);
  EXPECT_NEAR(lin.current(50), 0.3, 1e-15);
  EXPECT_EQ(lin.current(100), 0.1);
  EXPECT_EQ(lin.current(1000), 0.1);
  EXPECT_THROW(EpsilonSchedule(EpsilonSchedule::LinearDecay{0.6, 0.1, 10}), InvalidInput);
  EXPECT_THROW(EpsilonSchedule(EpsilonSchedule::SwitchingRandom{{0.5, 0.1}, {0.5, 0.4}, 1}), InvalidInput);
}

TEST(AgentConfig, Validation) {
  AgentConfig c;
  EXPECT_THROW(c.validate(), InvalidInput);  // no budget
  c.episodes = 1;
  EXPECT_NO_THROW(c.validate());
  c.gamma = 1.5;
  EXPECT_THROW(c.validate(), InvalidInput);
  c.gamma = 0.9;
  c.epsilon_pi = 0.0;
  EXPECT_THROW(c.validate(), InvalidInput);
  c.epsilon_pi = 0.01;
  c.segment_length = 0;
  EXPECT_THROW(c.validate(), InvalidInput);
  EXPECT_THROW(run_trial(c, "cliffwalking", 0), InvalidInput);
}

TEST(LearnerUpdate, ZeroLambdaIsOneStepDqn) {
  auto f = make_fixture(0.1, 3);
  AgentConfig c = cliff_config();
  c.strategy = TraceStrategy::make(StrategyKind::WatkinsQ, 0.0);
  c.gamma = 0.9;
  auto trainer = cliff_trainer(c, f.q);
  std::mt19937_64 rng(4);
  const auto segments = f.memory.sample_segments(32, 6, rng);

  TabularQ expected = f.q;
  std::vector<double> ys;
  for (const auto& seg : segments) {
    const auto& h = seg[0];
    const auto next = f.q.predict(h.next_state);
    ys.push_back(h.reward + 0.9 * (h.terminal ? 0.0 : *std::max_element(next.begin(), next.end())));
  }
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& h = segments[i][0];
    expected.train_step(h.state, h.action, ys[i]);
  }
  trainer.learner_update(segments);
  EXPECT_TRUE(std::ranges::equal(trainer.pair().online().parameters(), expected.parameters()));
}

TEST(LearnerUpdate, UnitRateHitsTarget) {
  auto f = make_fixture(0.1, 5);
  AgentConfig c = cliff_config();
  TabularQ start(8, 4, 1.0);
  for (std::size_t s = 0; s < 8; ++s) {
    for (std::size_t a = 0; a < 4; ++a) start.set(s, a, f.q.value(s, a));
  }
  auto trainer = cliff_trainer(c, start);
  const auto seg = f.memory.segment_at(10, 10);
  const double y = compute_target(seg, c.strategy, start, start, trainer.target_settings()).y;
  trainer.learner_update(std::vector{seg});
  EXPECT_EQ(trainer.pair().online().value(seg[0].state, seg[0].action), y);
}

TEST(LearnerUpdate, OnPolicyQmMatchesRetrace) {
  // Behavior distributions came from the same table with epsilon 0.01, and the
  // learner's target policy uses epsilon 0.01 on that table: pi equals mu.
  auto f = make_fixture(0.01, 6);
  AgentConfig retrace = cliff_config();
  retrace.epsilon_pi = 0.01;
  retrace.strategy = TraceStrategy::make(StrategyKind::Retrace, 0.9);
  AgentConfig qm = retrace;
  std::mt19937_64 rng(7);
  const auto segments = f.memory.sample_segments(64, 8, rng);
  auto t1 = cliff_trainer(retrace, f.q);
  t1.learner_update(segments);
  for (auto mk : {MeasurementKind::Beta, MeasurementKind::Eta}) {
    qm.strategy = TraceStrategy::qm(StrategyKind::Retrace, mk, 0.9);
    auto t2 = cliff_trainer(qm, f.q);
    const auto stats = t2.learner_update(segments);
    EXPECT_EQ(stats.near_off, 0u);
    EXPECT_GT(stats.near_on, 0u);
    EXPECT_TRUE(std::ranges::equal(t1.pair().online().parameters(), t2.pair().online().parameters()));
  }
}

TEST(Trainer, StoredBehaviorMatchesActingDistribution) {
  AgentConfig c = cliff_config();
  c.episodes = 30;
  c.record_acting = true;
  auto trainer = cliff_trainer(c, TabularQ(48, 4, 0.1));
  trainer.run();
  const auto& mem = trainer.memory();
  const auto& log = trainer.acting_log();
  ASSERT_EQ(log.size(), mem.total_pushed());
  const std::size_t offset = mem.total_pushed() - mem.size();
  for (std::size_t i = 0; i < mem.size(); ++i) {
    const auto& rec = log[offset + i];
    EXPECT_EQ(mem.at(i).behavior, epsilon_greedy(rec.q_row, rec.epsilon));
    EXPECT_EQ(mem.at(i).behavior, rec.behavior);
  }
}

TEST(Trainer, TargetChangesOnlyAtSyncSteps) {
  AgentConfig c = cliff_config();
  c.episodes = 0;
  c.sync_period = 500;
  auto online_after = [&](std::uint64_t steps) {
    c.total_steps = steps;
    auto t = cliff_trainer(c, TabularQ(48, 4, 0.1), 3);
    t.run();
    return std::make_pair(std::vector<double>(t.pair().online().parameters().begin(),
                                              t.pair().online().parameters().end()),
                          std::vector<double>(t.pair().target().parameters().begin(),
                                              t.pair().target().parameters().end()));
  };
  const auto at1000 = online_after(1000);
  EXPECT_EQ(at1000.first, at1000.second);
  for (std::uint64_t steps : {1001u, 1250u, 1499u}) {
    const auto later = online_after(steps);
    EXPECT_EQ(later.second, at1000.first) << steps;
    EXPECT_NE(later.first, at1000.first) << steps;
  }
  const auto at1500 = online_after(1500);
  EXPECT_EQ(at1500.first, at1500.second);
}

TEST(Trainer, ForcedOnPolicyQmIsAlwaysNearOn) {
  AgentConfig c = cliff_config();
  c.learning_rate = 0.0;  // Q never changes, so pi recomputed at update time equals stored mu
  c.behavior = EpsilonSchedule(EpsilonSchedule::LinearDecay{0.01, 0.01, 1});
  c.epsilon_pi = 0.01;
  c.episodes = 3;
  c.max_episode_steps = 300;
  for (auto mk : {MeasurementKind::Beta, MeasurementKind::Eta}) {
    c.strategy = TraceStrategy::qm(StrategyKind::Retrace, mk, 0.9);
    const auto log = cliff_trainer(c, TabularQ(48, 4, 0.0)).run();
    EXPECT_EQ(log.near_off_policy, 0u);
    EXPECT_GT(log.near_on_policy, 0u);
  }
}

TEST(Trainer, EpochAccounting) {
  AgentConfig c = cliff_config();
  c.episodes = 0;
  c.total_steps = 3500;
  const auto log = cliff_trainer(c, TabularQ(48, 4)).run();
  ASSERT_EQ(log.epochs.size(), 4u);
  EXPECT_EQ(log.epochs[0].steps, 1000u);
  EXPECT_EQ(log.epochs[3].steps, 500u);
  EXPECT_EQ(log.update_losses.size(), 3500u - c.warmup_steps);
  EXPECT_TRUE(std::isnan(log.epochs[0].frac_near_on_policy));
}

TEST(RunTrial, Deterministic) {
  AgentConfig c = cliff_config();
  c.episodes = 40;
  c.eval_episodes = 1;
  c.strategy = TraceStrategy::qm(StrategyKind::Retrace, MeasurementKind::Eta, 0.9);
  expect_identical(run_trial(c, "cliffwalking", 8), run_trial(c, "cliffwalking", 8));

  AgentConfig m;
  m.total_steps = 3000;
  m.steps_per_epoch = 1000;
  m.warmup_steps = 200;
  m.hidden_units = 16;
  expect_identical(run_trial(m, "cartpole-v1", 2), run_trial(m, "cartpole-v1", 2));
}

TEST(RunTrial, ZeroLearningRateDoesNotLearn) {
  AgentConfig c = cliff_config();
  c.learning_rate = 0.0;
  c.episodes = 200;
  c.max_episode_steps = 200;
  const auto log = run_trial(c, "cliffwalking", 4);
  const auto& r = log.episode_returns;
  ASSERT_EQ(r.size(), 200u);
  auto mean = [](auto b, auto e) { return std::accumulate(b, e, 0.0) / static_cast<double>(e - b); };
  const double first = mean(r.begin(), r.begin() + 100);
  const double second = mean(r.begin() + 100, r.end());
  double var = 0;
  const double all = mean(r.begin(), r.end());
  for (double x : r) var += (x - all) * (x - all);
  const double se = std::sqrt(var / 199.0) * std::sqrt(2.0 / 100.0);
  EXPECT_LT(std::abs(first - second), 4 * se);
}

TEST(RunTrial, CliffRetraceEscapesTheCliff) {
  AgentConfig c = cliff_config();
  c.episodes = 200;
  const auto log = run_trial(c, "cliffwalking", 0);
  const auto& r = log.episode_returns;
  ASSERT_EQ(r.size(), 200u);
  const double last20 = std::accumulate(r.end() - 20, r.end(), 0.0) / 20.0;
  EXPECT_GT(last20, -100.0);
}

TEST(RunTrial, TabularCartPoleIsRejected) {
  AgentConfig c = cliff_config();
  EXPECT_THROW(run_trial(c, "cartpole-v1", 0), InvalidInput);
}

TEST(FinalScore, SkipsEmptyEpochs) {
  TrialLog log;
  for (double r : std::vector<double>{1.0, 2.0, NAN, 4.0, 6.0, NAN, 8.0}) log.epochs.push_back({0, 0, r, 0, 0, 0});
  EXPECT_EQ(final_score(log, 5), (4.0 + 6.0 + 8.0) / 3.0);
  EXPECT_EQ(final_score(log, 100), (1.0 + 2.0 + 4.0 + 6.0 + 8.0) / 5.0);
  EXPECT_TRUE(std::isnan(final_score(TrialLog{}, 5)));
}
