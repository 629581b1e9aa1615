// Copyright 2026 the gaussflow authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "gaussflow/errors.hpp"
#include "gaussflow/harness/config.hpp"
#include "gaussflow/harness/experiments.hpp"
#include "gaussflow/harness/metrics.hpp"
#include "gaussflow/harness/verify.hpp"

namespace {

using gaussflow::harness::MetricRow;
using gaussflow::harness::RunConfig;

void emit_rows(const std::vector<MetricRow>& rows, const std::string& out_path) {
  if (out_path.empty()) {
    gaussflow::harness::write_csv(std::cout, rows);
    return;
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw gaussflow::ConfigError("cannot write '" + out_path + "'");
  gaussflow::harness::write_csv(out, rows);
}

int run_experiment_command(const std::string& config_path,
                           const std::optional<std::uint64_t>& seed,
                           const std::string& out_path, const std::string& expected) {
  RunConfig config = gaussflow::harness::parse_config_text(
      gaussflow::harness::internal::read_text_file(config_path));
  if (config.experiment != expected) {
    throw gaussflow::ConfigError("experiment '" + config.experiment +
                                 "' does not match this command (expected '" +
                                 expected + "')");
  }
  if (seed.has_value()) config.seed = *seed;
  emit_rows(gaussflow::harness::run_experiment(config), out_path);
  return 0;
}

int run_verify_command(const std::string& out_path) {
  const auto checks = gaussflow::harness::run_verify();
  bool all_pass = true;
  for (const auto& check : checks) {
    std::cout << (check.pass ? "PASS" : "FAIL") << ' ' << check.name << " ("
              << check.detail << ": "
              << gaussflow::harness::format_double(check.value) << ")\n";
    all_pass = all_pass && check.pass;
  }
  if (!out_path.empty()) emit_rows(gaussflow::harness::verify_rows(checks), out_path);
  std::cout << (all_pass ? "verify: all checks passed"
                         : "verify: at least one check FAILED")
            << '\n';
  return all_pass ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Particle transport sampling and particle-filter benchmarks.\n"
      "Results are CSV on stdout unless --out is given; set GAUSSFLOW_THREADS\n"
      "to bound worker threads (output is identical for any thread count)."};
  app.require_subcommand(1);
  app.failure_message([](const CLI::App*, const CLI::Error& e) {
    return std::string("error: ") + e.what() + "\n";
  });

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_path;

  const auto add_common = [&](CLI::App* sub, bool needs_config) {
    if (needs_config) {
      sub->add_option("--config", config_path, "experiment configuration (JSON)")
          ->required();
      sub->add_option("--seed", seed, "override the configuration's root seed");
    }
    sub->add_option("--out", out_path, "write CSV here instead of stdout");
  };

  CLI::App* sample = app.add_subcommand(
      "sample", "single-point importance-sampling runs (single-run config)");
  add_common(sample, true);
  CLI::App* sweep = app.add_subcommand(
      "sweep", "sampler comparison across a parameter sweep (sampler-sweep config)");
  add_common(sweep, true);
  CLI::App* filter = app.add_subcommand(
      "filter", "particle-filter benchmark over simulated datasets (filter-bench config)");
  add_common(filter, true);
  CLI::App* verify = app.add_subcommand(
      "verify", "run the built-in self-checks and report PASS/FAIL");
  add_common(verify, false);

  try {
    app.parse(argc, argv);
    if (app.got_subcommand(sample)) {
      return run_experiment_command(config_path, seed, out_path, "single-run");
    }
    if (app.got_subcommand(sweep)) {
      return run_experiment_command(config_path, seed, out_path, "sampler-sweep");
    }
    if (app.got_subcommand(filter)) {
      return run_experiment_command(config_path, seed, out_path, "filter-bench");
    }
    return run_verify_command(out_path);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
