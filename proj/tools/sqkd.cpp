// sqkd: run protocols, sweep attack parameters, print closed-form bounds, and
// execute the exact verification battery.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "sqkd/harness.hpp"

namespace {

using KvList = std::vector<std::pair<std::string, std::string>>;

// Records every flag the user actually passed, keyed by config-file key, so
// precedence is: defaults, then config file, then command line.
void add_kv_option(CLI::App* cmd, KvList& kv, const std::string& flag, const std::string& key,
                   const std::string& desc) {
  cmd->add_option(flag, desc)->each([&kv, key](const std::string& v) { kv.emplace_back(key, v); });
}

void add_experiment_options(CLI::App* cmd, KvList& kv) {
  add_kv_option(cmd, kv, "--protocol", "protocol", "mock|p1|p1prime|p2");
  add_kv_option(cmd, kv, "--n", "n", "secret-seed length (even)");
  add_kv_option(cmd, kv, "--delta", "delta", "round-count margin");
  add_kv_option(cmd, kv, "--epsilon", "epsilon", "balanced-window halfwidth");
  add_kv_option(cmd, kv, "--delta-prime", "delta_prime", "analysis midpoint parameter");
  add_kv_option(cmd, kv, "--p-ctrl-threshold", "p_ctrl_threshold", "reflection error threshold");
  add_kv_option(cmd, kv, "--p-test-threshold", "p_test_threshold", "check-bit error threshold");
  add_kv_option(cmd, kv, "--schedule", "schedule", "parallel|sequential");
  add_kv_option(cmd, kv, "--seq-encoding", "seq_encoding", "block|per_qubit");
  add_kv_option(cmd, kv, "--bob-model", "bob_model", "immediate|register");
  add_kv_option(cmd, kv, "--engine", "engine", "auto|factored|joint|sampler");
  add_kv_option(cmd, kv, "--rounds-override", "rounds_override", "fixed round count (studies)");
  add_kv_option(cmd, kv, "--max-total-dim", "max_total_dim", "state dimension budget");
  add_kv_option(cmd, kv, "--attack", "attack", "attack name");
  add_kv_option(cmd, kv, "--theta", "theta", "rotation_probe angle");
  add_kv_option(cmd, kv, "--probe-dim", "probe_dim", "user_local probe dimension");
  add_kv_option(cmd, kv, "--forward-file", "forward_file", "user unitary JSON (outbound)");
  add_kv_option(cmd, kv, "--backward-file", "backward_file", "user unitary JSON (returning)");
  add_kv_option(cmd, kv, "--trials", "trials", "number of trials");
  add_kv_option(cmd, kv, "--seed", "seed", "master seed");
  add_kv_option(cmd, kv, "--out", "out", "output file path");
  add_kv_option(cmd, kv, "--format", "format", "csv|json");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"semi-quantum key distribution simulation and verification lab"};
  app.require_subcommand(1);

  std::string run_config, sweep_config;
  KvList run_kv, sweep_kv;

  CLI::App* run = app.add_subcommand("run", "run one experiment");
  run->add_option("--config", run_config, "key = value config file");
  add_experiment_options(run, run_kv);

  CLI::App* sweep = app.add_subcommand("sweep", "run one experiment per swept value");
  sweep->add_option("--config", sweep_config, "key = value config file");
  add_experiment_options(sweep, sweep_kv);
  add_kv_option(sweep, sweep_kv, "--parameter", "sweep_parameter", "theta|n|delta|epsilon|trials");
  add_kv_option(sweep, sweep_kv, "--values", "sweep_values", "comma-separated values");

  CLI::App* bounds = app.add_subcommand("bounds", "print closed-form bounds at a parameter point");
  std::size_t b_n = 16;
  double b_delta = 0.5, b_eps = 0.1, b_k = 4.0;
  double b_dp = -1.0;
  bounds->add_option("--n", b_n, "secret-seed length");
  bounds->add_option("--delta", b_delta, "round-count margin");
  bounds->add_option("--delta-prime", b_dp, "midpoint parameter (default (epsilon+delta)/2)");
  bounds->add_option("--epsilon", b_eps, "balanced-window halfwidth");
  bounds->add_option("--k", b_k, "rounds-per-secret-bit ratio for the weight leak");

  CLI::App* verify = app.add_subcommand("verify", "run the exact verification battery");
  std::string scope_name = "all";
  std::size_t cap = sqkd::kDefaultEnumerationCap;
  bool verify_json = false;
  verify->add_option("--scope", scope_name, "combinatorics|entropy|leakage|abort|hoeffding|all");
  verify->add_option("--cap", cap, "enumeration cap (entries)");
  verify->add_flag("--json", verify_json, "emit JSON instead of a table");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(run)) {
      sqkd::ExperimentConfig cfg;
      if (!run_config.empty())
        for (const auto& [k, v] : sqkd::parse_config_file(run_config)) sqkd::apply_option(cfg, k, v);
      for (const auto& [k, v] : run_kv) sqkd::apply_option(cfg, k, v);
      sqkd::Summary s = sqkd::run_experiment(cfg);
      std::cout << nlohmann::json({{"config", sqkd::config_to_json(cfg)},
                                   {"summary", sqkd::summary_to_json(s)}})
                       .dump(2)
                << "\n";
      return 0;
    }
    if (app.got_subcommand(sweep)) {
      sqkd::SweepConfig cfg;
      if (!sweep_config.empty())
        for (const auto& [k, v] : sqkd::parse_config_file(sweep_config))
          sqkd::apply_sweep_option(cfg, k, v);
      for (const auto& [k, v] : sweep_kv) sqkd::apply_sweep_option(cfg, k, v);
      const std::vector<sqkd::SweepRow> rows = sqkd::run_sweep(cfg);
      std::cout << sqkd::kSweepCsvHeader << "\n";
      for (const sqkd::SweepRow& r : rows) std::cout << sqkd::to_csv(r) << "\n";
      return 0;
    }
    if (app.got_subcommand(bounds)) {
      if (b_dp < 0.0) b_dp = (b_eps + b_delta) / 2.0;
      std::cout << sqkd::bounds_json(b_n, b_delta, b_dp, b_eps, b_k).dump(2) << "\n";
      return 0;
    }
    // verify
    const sqkd::VerifyResult result = sqkd::run_verify(sqkd::parse_scope(scope_name), cap);
    if (verify_json)
      std::cout << sqkd::verify_to_json(result).dump(2) << "\n";
    else
      std::cout << sqkd::format_report_table(result.reports)
                << (result.all_satisfied ? "all checks satisfied\n" : "FAILURES present\n");
    return result.all_satisfied ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
