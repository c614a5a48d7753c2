// Command-line front end: run experiments, compare methods, run self-checks.
//
// Exit codes: 0 success, 1 validation error, 2 runtime error,
// 3 verification failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rdqn/experiment.hpp"
#include "rdqn/verify.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitVerification = 3;

void print_row(const rdqn::SummaryRow& r) {
  std::printf("%-40s %12.3f %10.3f %6zu\n", r.method.c_str(), r.mean_final_return,
              r.std_final_return, r.trials);
}

int cmd_run(const std::string& path, std::size_t threads) {
  auto cfg = rdqn::load_config_file(path);
  if (threads) cfg.threads = threads;
  const auto result = rdqn::run_experiment(cfg);
  std::printf("%-40s %12s %10s %6s\n", "method", "mean_final", "std", "trials");
  print_row(result.summary);
  std::printf("wrote %zu trial files and %s\n", result.trial_files.size(),
              result.summary_file.string().c_str());
  return kExitOk;
}

int cmd_compare(const std::vector<std::string>& paths, const std::string& out, std::size_t threads) {
  std::vector<rdqn::ExperimentConfig> configs;
  for (const auto& p : paths) {
    configs.push_back(rdqn::load_config_file(p));
    if (threads) configs.back().threads = threads;
  }
  std::vector<rdqn::SummaryRow> rows;
  for (const auto& cfg : configs) rows.push_back(rdqn::run_experiment(cfg).summary);

  const auto dir = rdqn::resolve_output_dir(out);
  std::filesystem::create_directories(dir);
  const auto file = dir / "comparison.csv";
  std::ofstream os(file);
  if (!os) throw rdqn::IoError("cannot write " + file.string());
  rdqn::write_summary_csv(os, rows);

  std::printf("%-40s %12s %10s %6s\n", "method", "mean_final", "std", "trials");
  for (const auto& r : rows) print_row(r);
  std::printf("wrote %s\n", file.string().c_str());
  return kExitOk;
}

int cmd_verify(const std::string& suite) {
  std::vector<rdqn::VerifyReport> reports;
  const bool all = suite == "all";
  if (all || suite == "oracle") reports.push_back(rdqn::verify_oracle());
  if (all || suite == "bounds") reports.push_back(rdqn::verify_bounds());
  if (all || suite == "gradients") reports.push_back(rdqn::verify_gradients());
  if (all || suite == "envs") reports.push_back(rdqn::verify_envs());
  bool ok = true;
  for (const auto& r : reports) {
    std::printf("[%s] %-10s %s\n", r.passed ? "PASS" : "FAIL", r.suite.c_str(), r.detail.c_str());
    ok = ok && r.passed;
  }
  return ok ? kExitOk : kExitVerification;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Return-based deep Q-learning experiments"};
  app.require_subcommand(1);
  std::size_t threads = 0;
  app.add_option("-j,--threads", threads, "Parallel trials (default: hardware concurrency)");

  std::string run_config;
  auto* run = app.add_subcommand("run", "Run every seed of one experiment config");
  run->add_option("config", run_config, "Experiment config file")->required();

  std::vector<std::string> compare_configs;
  std::string compare_out = "results";
  auto* compare = app.add_subcommand("compare", "Run several configs and tabulate their summaries");
  compare->add_option("configs", compare_configs, "Experiment config files")->required();
  compare->add_option("-o,--out", compare_out, "Directory for comparison.csv");

  std::string suite = "all";
  auto* verify = app.add_subcommand("verify", "Run self-check suites");
  verify->add_option("suite", suite, "oracle, bounds, gradients, envs or all")
      ->check(CLI::IsMember({"oracle", "bounds", "gradients", "envs", "all"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*run) return cmd_run(run_config, threads);
    if (*compare) return cmd_compare(compare_configs, compare_out, threads);
    if (*verify) return cmd_verify(suite);
  } catch (const rdqn::ParseError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const rdqn::InvalidInput& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}
