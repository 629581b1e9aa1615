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

#ifndef GAUSSFLOW_HARNESS_EXPERIMENTS_HPP_
#define GAUSSFLOW_HARNESS_EXPERIMENTS_HPP_

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gaussflow/errors.hpp"
#include "gaussflow/filter.hpp"
#include "gaussflow/harness/config.hpp"
#include "gaussflow/harness/metrics.hpp"
#include "gaussflow/harness/reference.hpp"
#include "gaussflow/harness/samplers.hpp"
#include "gaussflow/models/altitude.hpp"
#include "gaussflow/models/linear_ssm.hpp"
#include "gaussflow/models/radial.hpp"
#include "gaussflow/models/skeletal_arm.hpp"
#include "gaussflow/models/terrain.hpp"
#include "gaussflow/state_space.hpp"

namespace gaussflow::harness {
namespace internal {

inline double elapsed_ms(std::chrono::steady_clock::time_point start) {
  const auto now = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(now - start).count();
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read file '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace internal

/// Applies one sweep point to the sampler problem. sigma_x, sigma_y and dim
/// reshape the target; kappa changes only the transport dynamics.
inline void apply_sweep_value(const std::string& parameter, double value,
                              RadialParams* radial, FlowConfig* flow) {
  if (parameter == "sigma_x") {
    radial->sigma_x = value;
  } else if (parameter == "sigma_y") {
    radial->sigma_y = value;
  } else if (parameter == "dim") {
    const long rounded = std::lround(value);
    if (rounded < 1 || std::abs(value - static_cast<double>(rounded)) > 1e-9) {
      throw ConfigError("sweep: dim values must be positive integers");
    }
    radial->dim = static_cast<int>(rounded);
  } else if (parameter == "kappa") {
    flow->kappa = value;
  } else {
    throw ConfigError("sweep: unknown parameter '" + parameter + "'");
  }
}

/// One importance-sampling pass of `method` against the norm-observation
/// target, reduced to a metric row. Weight degeneracy marks the row diverged
/// instead of aborting the sweep.
inline MetricRow sampler_row(const std::string& experiment, const std::string& method,
                             const RadialParams& params, const FlowConfig& flow,
                             int n, std::uint64_t seed, bool timing) {
  MetricRow row;
  row.experiment = experiment;
  row.method = method;
  const auto start = std::chrono::steady_clock::now();
  try {
    const NonlinearGaussianTarget target =
        models::radial_target(params.dim, params.sigma_x, params.sigma_y, params.y);
    SamplerRun run;
    if (method == "prior-is") {
      run = prior_is_run(target, n, seed);
    } else if (method == "laplace-is") {
      run = laplace_is_run(target, n, seed);
    } else if (method == "flow-is") {
      run = flow_is_run(target, n, flow, seed);
    } else {
      throw ConfigError("unknown sampler method '" + method + "'");
    }
    const Eigen::VectorXd reference =
        radial_reference_mean(params.dim, params.sigma_x, params.sigma_y, params.y);
    row.ess = run.ess;
    row.rmse = (run.mean - reference).norm();
    if (run.has_steps) {
      row.steps_mean = run.steps_mean;
      row.steps_max = run.steps_max;
    }
  } catch (const DegenerateSampleError&) {
    row.diverged = true;
  }
  if (timing) row.wall_ms = internal::elapsed_ms(start);
  return row;
}

/// Runs every (sweep value, replicate, method) cell of a sampler sweep. Each
/// cell gets its own counter-derived seed, so the output is a pure function
/// of (configuration, root seed) no matter how the cells are scheduled.
inline std::vector<MetricRow> run_sampler_sweep(const RunConfig& config) {
  if (!config.sweep.has_value()) {
    throw ConfigError("sampler-sweep: configuration has no sweep axis");
  }
  const SweepAxis& sweep = *config.sweep;
  std::vector<MetricRow> rows;
  rows.reserve(sweep.values.size() * static_cast<std::size_t>(config.replicates) *
               config.sampler_methods.size());
  for (std::size_t s = 0; s < sweep.values.size(); ++s) {
    RadialParams params = config.model.radial;
    FlowConfig flow = config.flow;
    apply_sweep_value(sweep.parameter, sweep.values[s], &params, &flow);
    for (int r = 0; r < config.replicates; ++r) {
      for (const std::string& method : config.sampler_methods) {
        const std::uint64_t seed =
            derive_seed(config.seed, {hash_label(method), static_cast<std::uint64_t>(s),
                                      static_cast<std::uint64_t>(r)});
        MetricRow row = sampler_row(config.id, method, params, flow,
                                    config.n_particles, seed, config.timing);
        row.sweep_value = sweep.values[s];
        row.replicate = r;
        rows.push_back(std::move(row));
      }
    }
  }
  sort_rows(&rows);
  return rows;
}

/// Single-point sampler runs: every method on the base problem, once per
/// replicate.
inline std::vector<MetricRow> run_single(const RunConfig& config) {
  std::vector<MetricRow> rows;
  for (int r = 0; r < config.replicates; ++r) {
    for (const std::string& method : config.sampler_methods) {
      const std::uint64_t seed =
          derive_seed(config.seed, {hash_label(method), 0, static_cast<std::uint64_t>(r)});
      MetricRow row = sampler_row(config.id, method, config.model.radial, config.flow,
                                  config.n_particles, seed, config.timing);
      row.replicate = r;
      rows.push_back(std::move(row));
    }
  }
  sort_rows(&rows);
  return rows;
}

/// One benchmark dataset: the model instance (terrain and prior wired in) and
/// a simulated truth/observation record of the configured length.
struct BenchDataset {
  StateSpaceModel model;
  SimulatedPath path;
};

/// Builds dataset `index` of a filter benchmark. The true initial state is
/// drawn from the scenario's start distribution; for the terrain model the
/// tracking prior is then centred on that state, mirroring how such scenarios
/// are set up from a known hand-off fix.
inline BenchDataset make_bench_dataset(const ModelSpec& spec,
                                       const models::TerrainMap* terrain,
                                       std::uint64_t root_seed, int index, int steps) {
  RngStream stream(derive_seed(root_seed, {hash_label("dataset-start"),
                                           static_cast<std::uint64_t>(index)}));
  BenchDataset ds;
  Eigen::VectorXd x0;
  if (spec.name == "linear") {
    ds.model = models::default_linear_ssm().as_model();
    const Eigen::LLT<Eigen::MatrixXd> llt(ds.model.init_cov);
    x0 = ds.model.init_mean +
         Eigen::MatrixXd(llt.matrixL()) * stream.normal_vector(ds.model.dim());
  } else if (spec.name == "altitude") {
    if (terrain == nullptr) throw ConfigError("filter-bench: altitude model needs terrain");
    const Eigen::LLT<Eigen::MatrixXd> llt(models::altitude_start_cov());
    x0 = models::altitude_start_mean() +
         Eigen::MatrixXd(llt.matrixL()) * stream.normal_vector(6);
    ds.model = models::altitude_model(*terrain, x0);
  } else if (spec.name == "arm") {
    const models::ArmJoint joint = spec.second_joint == "hand"
                                       ? models::ArmJoint::kHand
                                       : models::ArmJoint::kElbow;
    ds.model = models::arm_model(models::arm_start_state(), joint);
    const Eigen::LLT<Eigen::MatrixXd> llt(ds.model.init_cov);
    x0 = ds.model.init_mean +
         Eigen::MatrixXd(llt.matrixL()) * stream.normal_vector(ds.model.dim());
  } else {
    throw ConfigError("filter-bench: unsupported model '" + spec.name + "'");
  }
  ds.path = simulate(ds.model, x0, steps,
                     derive_seed(root_seed, {hash_label("dataset-path"),
                                             static_cast<std::uint64_t>(index)}));
  return ds;
}

/// Position components carry the tracking error that matters for the
/// nonlinear scenarios; the linear benchmark scores the whole state.
inline std::vector<int> default_rmse_components(const std::string& model_name) {
  if (model_name == "altitude" || model_name == "arm") return {0, 1, 2};
  return {};
}

/// Runs every configured filter over `replicates` independent datasets. Each
/// (dataset, method) pair yields one row with the run's mean pre-resampling
/// ESS and position RMSE; a degenerate run yields a flagged row with empty
/// metric cells and the benchmark carries on.
inline std::vector<MetricRow> run_filter_bench(const RunConfig& config) {
  if (config.filter_methods.empty()) {
    throw ConfigError("filter-bench: configuration lists no methods");
  }
  std::optional<models::TerrainMap> terrain;
  if (config.model.name == "altitude") {
    if (!config.model.terrain_file.empty()) {
      terrain = models::TerrainMap::parse(
          internal::read_text_file(config.model.terrain_file));
    } else {
      terrain = models::TerrainMap::random(config.model.terrain_blobs,
                                           config.model.terrain_seed,
                                           config.model.terrain_extent);
    }
  }
  const std::vector<int> components = config.components.empty()
                                          ? default_rmse_components(config.model.name)
                                          : config.components;
  std::vector<MetricRow> rows;
  rows.reserve(static_cast<std::size_t>(config.replicates) * config.filter_methods.size());
  for (int d = 0; d < config.replicates; ++d) {
    const BenchDataset ds = make_bench_dataset(
        config.model, terrain.has_value() ? &*terrain : nullptr, config.seed, d,
        config.time_steps);
    for (const MethodSpec& method : config.filter_methods) {
      FilterConfig fc;
      fc.proposal.kind = method.kind;
      fc.proposal.flow = config.flow;
      fc.n_particles = method.n;
      fc.seed = derive_seed(config.seed, {hash_label("filter"), hash_label(method.name),
                                          static_cast<std::uint64_t>(d)});
      MetricRow row;
      row.experiment = config.id;
      row.method = method.name;
      row.replicate = d;
      const auto start = std::chrono::steady_clock::now();
      const FilterResult result = run_filter(ds.model, ds.path.observations, fc);
      if (config.timing) row.wall_ms = internal::elapsed_ms(start);
      row.diverged = result.diverged;
      if (!result.diverged) {
        double ess_total = 0.0;
        for (const double e : result.set.ess_history) ess_total += e;
        row.ess = ess_total / static_cast<double>(result.set.ess_history.size());
        row.rmse = compute_rmse(result.set.filtered_means, ds.path.states, components);
      }
      if (result.diagnostics.flow_runs > 0) {
        row.steps_mean = result.diagnostics.flow_mean_steps();
        row.steps_max = result.diagnostics.flow_max_steps;
      }
      rows.push_back(std::move(row));
    }
  }
  sort_rows(&rows);
  return rows;
}

/// Dispatches a parsed configuration to its experiment runner.
inline std::vector<MetricRow> run_experiment(const RunConfig& config) {
  if (config.experiment == "sampler-sweep") return run_sampler_sweep(config);
  if (config.experiment == "filter-bench") return run_filter_bench(config);
  return run_single(config);
}

}  // namespace gaussflow::harness

#endif  // GAUSSFLOW_HARNESS_EXPERIMENTS_HPP_
