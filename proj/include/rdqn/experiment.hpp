#ifndef RDQN_EXPERIMENT_HPP
#define RDQN_EXPERIMENT_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <limits>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "rdqn/agent.hpp"
#include "rdqn/error.hpp"
#include "rdqn/returns.hpp"

namespace rdqn {

/// Environment variable that relative output directories are resolved against.
inline constexpr const char* kOutputRootEnv = "RDQN_OUTPUT_ROOT";

struct ExperimentConfig {
  std::string name;  // label used for file names and summary rows
  std::string env = "cartpole-v1";
  AgentConfig agent;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::string output_dir = "results";
  std::size_t final_window = 5;  // epochs averaged into the final score
  std::size_t threads = 0;       // 0 = hardware concurrency
};

struct SummaryRow {
  std::string method;
  double mean_final_return = 0.0;
  double std_final_return = 0.0;  // sample standard deviation across trials
  std::size_t trials = 0;
};

/// I/O failure while writing results.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A trial threw; `seed()` names it.
class TrialError : public std::runtime_error {
 public:
  TrialError(std::uint64_t seed, const std::string& what)
      : std::runtime_error("trial with seed " + std::to_string(seed) + " failed: " + what),
        seed_(seed) {}
  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::uint64_t seed_;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

/// Parses `key = value` lines. '#' starts a comment; blank lines are skipped.
/// Unknown or repeated keys, malformed values and inconsistent strategy
/// settings are rejected with the offending line number.
inline ExperimentConfig parse_config(const std::string& text) {
  struct Entry {
    std::string value;
    std::size_t line;
  };
  std::map<std::string, Entry> entries;
  {
    std::stringstream ss(text);
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(ss, raw)) {
      ++line_no;
      if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
      const std::string line = detail::trim(raw);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ParseError(line_no, "expected 'key = value'");
      std::string key = detail::trim(line.substr(0, eq));
      std::string value = detail::trim(line.substr(eq + 1));
      if (key.empty()) throw ParseError(line_no, "missing key before '='");
      if (value.empty()) throw ParseError(line_no, "missing value for '" + key + "'");
      if (entries.count(key)) throw ParseError(line_no, "duplicate key '" + key + "'");
      entries.emplace(std::move(key), Entry{std::move(value), line_no});
    }
  }

  static const char* const known[] = {
      "name", "env", "representation", "strategy", "base", "measurement", "lambda", "is_clip",
      "gamma", "segment_length", "batch_size", "learning_rate", "sync_period", "episodes",
      "total_steps", "steps_per_epoch", "max_episode_steps", "epsilon_pi", "warmup_steps",
      "replay_capacity", "hidden_units", "grid_bins", "behavior", "behavior_values",
      "behavior_probs", "switch_period", "epsilon_start", "epsilon_end", "epsilon_decay_steps",
      "eval_episodes", "seeds", "output_dir", "final_window", "threads"};
  for (const auto& [key, e] : entries) {
    if (std::find(std::begin(known), std::end(known), key) == std::end(known)) {
      throw ParseError(e.line, "unknown key '" + key + "'");
    }
  }

  auto find = [&](const char* key) -> const Entry* {
    auto it = entries.find(key);
    return it == entries.end() ? nullptr : &it->second;
  };
  auto real = [&](const char* key) -> std::optional<double> {
    const Entry* e = find(key);
    if (!e) return std::nullopt;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(e->value, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != e->value.size() || !std::isfinite(v)) {
      throw ParseError(e->line, "'" + std::string(key) + "' expects a real number, got '" + e->value + "'");
    }
    return v;
  };
  auto count = [&](const char* key) -> std::optional<std::uint64_t> {
    const Entry* e = find(key);
    if (!e) return std::nullopt;
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(e->value.data(), e->value.data() + e->value.size(), v);
    if (ec != std::errc() || ptr != e->value.data() + e->value.size()) {
      throw ParseError(e->line, "'" + std::string(key) + "' expects a non-negative integer, got '" +
                                    e->value + "'");
    }
    return v;
  };
  auto real_list = [&](const char* key) -> std::optional<std::vector<double>> {
    const Entry* e = find(key);
    if (!e) return std::nullopt;
    std::vector<double> out;
    for (const auto& item : detail::split_list(e->value)) {
      try {
        out.push_back(detail::parse_real(item));
      } catch (const InvalidInput&) {
        throw ParseError(e->line, "'" + std::string(key) + "' expects a comma-separated list of reals");
      }
    }
    return out;
  };
  auto line_of = [&](const char* key) -> std::size_t {
    const Entry* e = find(key);
    return e ? e->line : 0;
  };

  ExperimentConfig cfg;
  AgentConfig& a = cfg.agent;

  if (const Entry* e = find("env")) {
    cfg.env = e->value;
    try {
      make_environment(cfg.env);
    } catch (const InvalidInput& err) {
      throw ParseError(e->line, err.what());
    }
  }
  a.representation = (cfg.env == "cliffwalking" || cfg.env == "mountaincar") ? Representation::Tabular
                                                                             : Representation::Mlp;
  if (const Entry* e = find("representation")) {
    if (e->value == "tabular") {
      a.representation = Representation::Tabular;
    } else if (e->value == "mlp") {
      a.representation = Representation::Mlp;
    } else {
      throw ParseError(e->line, "representation must be 'tabular' or 'mlp'");
    }
  }
  // Per-task budgets; each key below can override them.
  if (cfg.env == "cliffwalking") {
    a.steps_per_epoch = 1000;
    a.episodes = 500;
  } else if (cfg.env == "mountaincar") {
    a.steps_per_epoch = 5000;
    a.episodes = 300;
  } else {
    a.steps_per_epoch = 2000;
    a.total_steps = 100000;
  }

  // Strategy.
  const double lambda = real("lambda").value_or(0.9);
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw ParseError(line_of("lambda"), "lambda must lie in [0, 1], got " + find("lambda")->value);
  }
  StrategyKind kind = StrategyKind::Retrace;
  if (const Entry* e = find("strategy")) {
    auto k = strategy_from_string(e->value);
    if (!k) {
      throw ParseError(e->line, "unknown strategy '" + e->value +
                                    "' (watkins, pw, general, is, tb, qpi, retrace, qm)");
    }
    kind = *k;
  }
  if (kind == StrategyKind::QM) {
    const Entry* m = find("measurement");
    if (!m) throw ParseError(line_of("strategy"), "strategy 'qm' requires key 'measurement' (beta or eta)");
    MeasurementKind mk;
    if (m->value == "beta") {
      mk = MeasurementKind::Beta;
    } else if (m->value == "eta") {
      mk = MeasurementKind::Eta;
    } else {
      throw ParseError(m->line, "measurement must be 'beta' or 'eta'");
    }
    StrategyKind base = StrategyKind::Retrace;
    if (const Entry* b = find("base")) {
      auto k = strategy_from_string(b->value);
      if (!k || *k == StrategyKind::QM) throw ParseError(b->line, "invalid QM base '" + b->value + "'");
      base = *k;
    }
    a.strategy = TraceStrategy::qm(base, mk, lambda);
  } else {
    if (const Entry* m = find("measurement")) {
      throw ParseError(m->line, "'measurement' only applies to strategy 'qm'");
    }
    if (const Entry* b = find("base")) throw ParseError(b->line, "'base' only applies to strategy 'qm'");
    a.strategy = TraceStrategy::make(kind, lambda);
  }
  if (auto clip = real("is_clip")) {
    if (!(*clip > 0.0)) throw ParseError(line_of("is_clip"), "is_clip must be positive");
    a.strategy.with_ratio_clip(*clip);
  }

  auto positive = [&](const char* key, std::uint64_t v) {
    if (v == 0) throw ParseError(line_of(key), "'" + std::string(key) + "' must be positive");
    return v;
  };
  if (auto v = real("gamma")) {
    if (!(*v >= 0.0 && *v <= 1.0)) throw ParseError(line_of("gamma"), "gamma must lie in [0, 1]");
    a.gamma = *v;
  }
  if (auto v = count("segment_length")) a.segment_length = positive("segment_length", *v);
  if (auto v = count("batch_size")) a.batch_size = positive("batch_size", *v);
  if (auto v = real("learning_rate")) {
    if (*v < 0.0) throw ParseError(line_of("learning_rate"), "learning_rate must be >= 0");
    a.learning_rate = *v;
  }
  if (auto v = count("sync_period")) a.sync_period = positive("sync_period", *v);
  if (auto v = count("episodes")) a.episodes = *v;
  if (auto v = count("total_steps")) a.total_steps = *v;
  if (auto v = count("steps_per_epoch")) a.steps_per_epoch = positive("steps_per_epoch", *v);
  if (auto v = count("max_episode_steps")) a.max_episode_steps = *v;
  if (auto v = real("epsilon_pi")) {
    if (!(*v > 0.0 && *v <= 0.5)) throw ParseError(line_of("epsilon_pi"), "epsilon_pi must lie in (0, 1/2]");
    a.epsilon_pi = *v;
  }
  if (auto v = count("warmup_steps")) a.warmup_steps = *v;
  if (auto v = count("replay_capacity")) a.replay_capacity = positive("replay_capacity", *v);
  if (auto v = count("hidden_units")) a.hidden_units = positive("hidden_units", *v);
  if (auto v = count("grid_bins")) a.grid_bins = positive("grid_bins", *v);
  if (auto v = count("eval_episodes")) a.eval_episodes = *v;

  // Behavior schedule.
  const std::string behavior = find("behavior") ? find("behavior")->value : "switching";
  try {
    if (behavior == "switching") {
      EpsilonSchedule::SwitchingRandom sw;
      if (auto v = real_list("behavior_values")) sw.values = *v;
      if (auto v = real_list("behavior_probs")) sw.probs = *v;
      if (auto v = count("switch_period")) sw.switch_period = *v;
      a.behavior = EpsilonSchedule(sw);
    } else if (behavior == "linear") {
      EpsilonSchedule::LinearDecay d;
      if (auto v = real("epsilon_start")) d.start = *v;
      if (auto v = real("epsilon_end")) d.end = *v;
      if (auto v = count("epsilon_decay_steps")) d.decay_steps = *v;
      a.behavior = EpsilonSchedule(d);
    } else {
      throw ParseError(line_of("behavior"), "behavior must be 'switching' or 'linear'");
    }
  } catch (const InvalidInput& e) {
    std::size_t line = 0;
    for (const char* key : {"behavior", "behavior_values", "behavior_probs", "switch_period",
                            "epsilon_start", "epsilon_end", "epsilon_decay_steps"}) {
      if ((line = line_of(key))) break;
    }
    throw ParseError(line, e.what());
  }

  if (const Entry* e = find("seeds")) {
    cfg.seeds.clear();
    for (const auto& item : detail::split_list(e->value)) {
      try {
        cfg.seeds.push_back(detail::parse_integer<std::uint64_t>(item));
      } catch (const InvalidInput&) {
        throw ParseError(e->line, "seeds expects a comma-separated list of integers");
      }
    }
    if (cfg.seeds.empty()) throw ParseError(e->line, "seeds must not be empty");
  }
  if (const Entry* e = find("output_dir")) cfg.output_dir = e->value;
  if (auto v = count("final_window")) cfg.final_window = positive("final_window", *v);
  if (auto v = count("threads")) cfg.threads = *v;

  cfg.name = find("name") ? find("name")->value : cfg.env + "_" + a.strategy.name();
  try {
    a.validate();
  } catch (const InvalidInput& e) {
    throw ParseError(0, e.what());
  }
  return cfg;
}

inline ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read config file " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

/// `dir` itself when absolute or when the output-root variable is unset.
inline std::filesystem::path resolve_output_dir(const std::string& dir) {
  std::filesystem::path p(dir);
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv(kOutputRootEnv); root && *root) {
    return std::filesystem::path(root) / p;
  }
  return p;
}

/// Per-trial CSV: epoch,mean_return,mean_loss,frac_near_on_policy,eval_return.
/// Reals carry 17 significant digits; missing values are written as "nan".
inline void write_trial_csv(std::ostream& os, const TrialLog& log) {
  os << "epoch,mean_return,mean_loss,frac_near_on_policy,eval_return\n";
  for (const auto& e : log.epochs) {
    os << e.epoch << ',' << detail::format_real(e.mean_return) << ','
       << detail::format_real(e.mean_loss) << ',' << detail::format_real(e.frac_near_on_policy)
       << ',' << detail::format_real(e.eval_return) << '\n';
  }
}

/// Reads the mean_return column of a per-trial CSV.
inline std::vector<double> read_trial_returns(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw InvalidInput("empty trial CSV");
  std::vector<double> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto fields = detail::split_list(line);
    if (fields.size() < 2) throw InvalidInput("malformed trial CSV row");
    out.push_back(fields[1] == "nan" ? std::numeric_limits<double>::quiet_NaN()
                                     : detail::parse_real(fields[1]));
  }
  return out;
}

/// Final score from a column of epoch returns; same rule as final_score().
inline double final_score_from_returns(const std::vector<double>& returns, std::size_t window) {
  TrialLog log;
  for (double r : returns) log.epochs.push_back({0, 0, r, 0, 0, 0});
  return final_score(log, window);
}

inline SummaryRow summarize(const std::string& method, const std::vector<double>& finals) {
  SummaryRow row;
  row.method = method;
  row.trials = finals.size();
  if (finals.empty()) return row;
  double sum = 0.0;
  for (double f : finals) sum += f;
  row.mean_final_return = sum / static_cast<double>(finals.size());
  if (finals.size() > 1) {
    double ss = 0.0;
    for (double f : finals) ss += (f - row.mean_final_return) * (f - row.mean_final_return);
    row.std_final_return = std::sqrt(ss / static_cast<double>(finals.size() - 1));
  }
  return row;
}

inline void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows) {
  os << "method,mean_final_return,std_final_return,trials\n";
  for (const auto& r : rows) {
    os << r.method << ',' << detail::format_real(r.mean_final_return) << ','
       << detail::format_real(r.std_final_return) << ',' << r.trials << '\n';
  }
}

struct ExperimentResult {
  SummaryRow summary;
  std::vector<TrialLog> trials;  // in seed order
  std::vector<double> final_scores;
  std::vector<std::filesystem::path> trial_files;
  std::filesystem::path summary_file;
};

/// Runs one trial per seed (in parallel when threads allow); trials share no
/// mutable state. Results are identical for any thread count.
inline std::vector<TrialLog> run_trials(const ExperimentConfig& cfg) {
  std::vector<TrialLog> logs(cfg.seeds.size());
  std::vector<std::exception_ptr> errors(cfg.seeds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cfg.seeds.size(); i = next++) {
      try {
        logs[i] = run_trial(cfg.agent, cfg.env, cfg.seeds[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::size_t threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, cfg.seeds.size());
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const std::exception& e) {
      throw TrialError(cfg.seeds[i], e.what());
    }
  }
  return logs;
}

/// Runs every seed, writes `<name>_seed<seed>.csv` per trial and
/// `<name>_summary.csv` into the output directory.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  const fs::path dir = resolve_output_dir(cfg.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw IoError("cannot create output directory " + dir.string());
  }

  ExperimentResult result;
  result.trials = run_trials(cfg);
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
    const fs::path file = dir / (cfg.name + "_seed" + std::to_string(cfg.seeds[i]) + ".csv");
    std::ofstream os(file);
    if (!os) throw IoError("cannot write " + file.string());
    write_trial_csv(os, result.trials[i]);
    if (!os) throw IoError("failed writing " + file.string());
    result.trial_files.push_back(file);
    result.final_scores.push_back(final_score(result.trials[i], cfg.final_window));
  }
  result.summary = summarize(cfg.name, result.final_scores);
  result.summary_file = dir / (cfg.name + "_summary.csv");
  std::ofstream os(result.summary_file);
  if (!os) throw IoError("cannot write " + result.summary_file.string());
  write_summary_csv(os, {result.summary});
  return result;
}

}  // namespace rdqn

#endif  // RDQN_EXPERIMENT_HPP
