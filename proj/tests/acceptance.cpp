// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails. Directional comparisons load the sample
// configs under configs/ and run every seed listed there.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "rdqn/experiment.hpp"
#include "rdqn/verify.hpp"

#ifndef RDQN_CONFIG_DIR
#define RDQN_CONFIG_DIR "configs"
#endif

using namespace rdqn;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool passed;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

ExperimentConfig config(const std::string& file) {
  return load_config_file(std::string(RDQN_CONFIG_DIR) + "/" + file);
}

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Final scores, one per seed, in the config's seed order.
std::vector<double> finals(const ExperimentConfig& cfg) {
  std::vector<double> out;
  for (const auto& log : run_trials(cfg)) out.push_back(final_score(log, cfg.final_window));
  return out;
}

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

Outcome oracle_equivalence() {
  const auto t0 = Clock::now();
  const auto rep = verify_oracle(1000);
  const double dt = seconds_since(t0);
  return {rep.passed && rep.checks == 1000 * all_strategies(0.5).size() && dt < 10.0,
          fmt("%llu targets over %zu strategy variants, max |engine - oracle| = %.3g, %.2f s",
              static_cast<unsigned long long>(rep.checks), all_strategies(0.5).size(), rep.max_error, dt)};
}

Outcome zero_lambda_reduction() {
  std::mt19937_64 rng(4242);
  std::size_t checks = 0, mismatches = 0;
  for (int i = 0; i < 100; ++i) {
    const auto c = random_segment_case(rng);
    const auto& head = c.segment.front();
    const auto pi_next = epsilon_greedy(c.online[head.next_state], c.epsilon_pi);
    const auto& q_next = c.target[head.next_state];
    for (const auto& s : all_strategies(0.0)) {
      double z = 0.0;
      if (!head.terminal) {
        z = bootstrap_kind(s) == BootstrapKind::MaxQ ? max_value(q_next) : expected_q(pi_next, q_next);
      }
      const double expected = head.reward + c.gamma * z;
      const double y = compute_target(c.segment, s, TableView{&c.online}, TableView{&c.target},
                                      TargetSettings{c.gamma, c.epsilon_pi})
                           .y;
      ++checks;
      if (y != expected) ++mismatches;
    }
  }
  return {mismatches == 0, fmt("%zu heads x strategies, %zu inexact", checks, mismatches)};
}

Outcome bound_soundness() {
  const auto t0 = Clock::now();
  const auto rep = verify_bounds(10, 50);
  const double dt = seconds_since(t0);
  return {rep.passed && dt < 5.0, rep.detail + fmt(", %.2f s", dt)};
}

Outcome qm_equivalence_classes() {
  std::mt19937_64 rng(777);
  std::uniform_real_distribution<double> lam(0.05, 1.0);
  const StrategyKind same[] = {StrategyKind::IS, StrategyKind::TB, StrategyKind::QPi};
  const StrategyKind other[] = {StrategyKind::WatkinsQ, StrategyKind::PengWilliamsQ,
                                StrategyKind::GeneralQ};
  std::size_t same_mismatch = 0;
  std::size_t differs[3] = {0, 0, 0};
  for (int i = 0; i < 1000; ++i) {
    const auto c = random_segment_case(rng);
    const double l = lam(rng);
    const auto mk = i % 2 ? MeasurementKind::Eta : MeasurementKind::Beta;
    auto y = [&](StrategyKind base) {
      return compute_target(c.segment, TraceStrategy::qm(base, mk, l), TableView{&c.online},
                            TableView{&c.target}, TargetSettings{c.gamma, c.epsilon_pi})
          .y;
    };
    const double ref = y(StrategyKind::Retrace);
    for (auto b : same) same_mismatch += y(b) != ref;
    for (int j = 0; j < 3; ++j) differs[j] += y(other[j]) != ref;
  }
  const bool ok = same_mismatch == 0 && differs[0] > 0 && differs[1] > 0 && differs[2] > 0;
  return {ok, fmt("IS/TB/QPi vs Retrace base: %zu mismatches; Watkins/P&W/General differ on %zu/%zu/%zu of 1000",
                  same_mismatch, differs[0], differs[1], differs[2])};
}

Outcome gradient_checks() {
  const auto rep = verify_gradients(20);
  return {rep.passed, rep.detail};
}

Outcome cliff_walking() {
  const auto t0 = Clock::now();
  const auto qm = finals(config("cliff_qm_eta.cfg"));
  const auto retrace = finals(config("cliff_retrace.cfg"));
  const auto tb = finals(config("cliff_tb.cfg"));
  const double dt = seconds_since(t0);
  const double m_qm = mean(qm), m_re = mean(retrace), m_tb = mean(tb);

  // Gap of the means with each seed left out in turn.
  double worst_gap = std::numeric_limits<double>::infinity();
  for (std::size_t out = 0; out < qm.size(); ++out) {
    double gap = 0.0;
    for (std::size_t i = 0; i < qm.size(); ++i) {
      if (i != out) gap += qm[i] - retrace[i];
    }
    worst_gap = std::min(worst_gap, gap / static_cast<double>(qm.size() - 1));
  }
  const bool ok = m_qm >= m_re && m_qm >= m_tb && worst_gap > 0.0 && dt < 300.0;
  return {ok, fmt("%zu seeds: QM(eta) %.3f, Retrace %.3f, TB %.3f; min leave-one-out gap vs Retrace %.3f; %.1f s",
                  qm.size(), m_qm, m_re, m_tb, worst_gap, dt)};
}

Outcome mountain_car() {
  const auto t0 = Clock::now();
  const char* files[] = {"mountaincar_dqn.cfg", "mountaincar_retrace.cfg", "mountaincar_tb.cfg",
                         "mountaincar_qm_beta.cfg", "mountaincar_qm_eta.cfg"};
  const char* labels[] = {"DQN", "Retrace", "TB", "QM(beta)", "QM(eta)"};
  double means[5];
  std::size_t seeds = 0;
  for (int i = 0; i < 5; ++i) {
    const auto f = finals(config(files[i]));
    seeds = f.size();
    means[i] = mean(f);
  }
  const double dt = seconds_since(t0);
  bool qm_beta_max = true;
  for (int i = 0; i < 5; ++i) qm_beta_max = qm_beta_max && means[3] >= means[i];
  std::string detail = fmt("%zu seeds:", seeds);
  for (int i = 0; i < 5; ++i) detail += fmt(" %s %.3f%s", labels[i], means[i], i < 4 ? "," : ";");
  detail += fmt(" %.1f s", dt);
  return {qm_beta_max && dt < 600.0, detail};
}

Outcome cartpole() {
  const auto t0 = Clock::now();
  const auto retrace_cfg = config("cartpole_retrace.cfg");
  const auto retrace = finals(retrace_cfg);
  const auto dqn = finals(config("cartpole_dqn.cfg"));
  const double dt = seconds_since(t0);
  const std::uint64_t epochs = retrace_cfg.agent.total_steps / retrace_cfg.agent.steps_per_epoch;
  const bool ok = mean(retrace) > mean(dqn) && dt < 1800.0;
  return {ok, fmt("%zu seeds, %llu epochs: Retrace %.3f, one-step DQN %.3f; %.1f s", retrace.size(),
                  static_cast<unsigned long long>(epochs), mean(retrace), mean(dqn), dt)};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "rdqn_acceptance_determinism";
  fs::remove_all(root);
  std::vector<ExperimentConfig> cfgs{config("cliff_qm_eta.cfg"), config("cartpole_retrace.cfg")};
  cfgs[1].agent.total_steps = 6000;  // keep the network case short
  cfgs[1].seeds = {0, 1};
  std::size_t compared = 0, differing = 0;
  for (auto& cfg : cfgs) {
    std::vector<fs::path> first;
    for (const char* run : {"a", "b"}) {
      cfg.output_dir = (root / run).string();
      const auto result = run_experiment(cfg);
      std::vector<fs::path> files = result.trial_files;
      files.push_back(result.summary_file);
      if (first.empty()) {
        first = files;
        continue;
      }
      for (std::size_t i = 0; i < files.size(); ++i) {
        ++compared;
        if (slurp(files[i]) != slurp(first[i])) ++differing;
      }
    }
  }
  fs::remove_all(root);
  return {compared > 0 && differing == 0, fmt("%zu CSV pairs compared, %zu differ", compared, differing)};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
  };
  const Criterion criteria[] = {
      {"oracle equivalence", oracle_equivalence},
      {"zero-lambda reduction", zero_lambda_reduction},
      {"bound soundness grids", bound_soundness},
      {"QM equivalence classes", qm_equivalence_classes},
      {"MLP gradient checks", gradient_checks},
      {"Cliff Walking direction", cliff_walking},
      {"Mountain Car direction", mountain_car},
      {"CartPole-v1 direction", cartpole},
      {"run determinism", determinism},
  };
  int failed = 0;
  int index = 0;
  for (const auto& c : criteria) {
    ++index;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.passed;
    std::printf("[%s] %d %s: %s\n", o.passed ? "PASS" : "FAIL", index, c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %d criteria passed\n", index - failed, index);
  return failed == 0 ? 0 : 1;
}
