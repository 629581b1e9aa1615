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

#ifndef GAUSSFLOW_HARNESS_CONFIG_HPP_
#define GAUSSFLOW_HARNESS_CONFIG_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "gaussflow/errors.hpp"
#include "gaussflow/filter.hpp"
#include "gaussflow/sampler.hpp"

namespace gaussflow::harness {

/// Sweep over one named model or flow parameter.
struct SweepAxis {
  std::string parameter;
  std::vector<double> values;
};

/// Norm-observation problem parameters (the sampler benchmarks' model).
struct RadialParams {
  int dim = 2;
  double sigma_x = 1.0;
  double sigma_y = 0.1;
  double y = 1.0;
};

/// One filter entry in a benchmark: proposal family and its particle count.
struct MethodSpec {
  std::string name;
  ProposalKind kind = ProposalKind::kBootstrap;
  int n = 100;
};

/// Which state-space model a filter benchmark runs on.
struct ModelSpec {
  std::string name = "linear";      ///< linear | altitude | arm | radial
  RadialParams radial{};
  int terrain_blobs = 20;           ///< altitude only, ignored with terrain_file
  std::uint64_t terrain_seed = 7;
  double terrain_extent = 5000.0;   ///< blob-centre half-range of random maps
  std::string terrain_file;         ///< optional plain-text map
  std::string second_joint = "elbow";  ///< arm only: elbow | hand
};

/// Full experiment description, as read from one JSON document.
struct RunConfig {
  std::string experiment;           ///< sampler-sweep | filter-bench | single-run
  std::string id;                   ///< row label; defaults to the experiment kind
  std::uint64_t seed = 0;
  int replicates = 1;
  int n_particles = 100;            ///< sampler methods share this count
  std::vector<std::string> sampler_methods{"prior-is", "laplace-is", "flow-is"};
  std::vector<MethodSpec> filter_methods;
  ModelSpec model;
  FlowConfig flow;
  std::optional<SweepAxis> sweep;
  int time_steps = 100;             ///< filter benchmarks: observations per dataset
  std::vector<int> components;      ///< RMSE component selector; empty = all
  bool timing = false;              ///< emit wall_ms (breaks byte-stable output)
};

namespace internal {

using nlohmann::json;

[[noreturn]] inline void config_fail(const std::string& path, const std::string& what) {
  throw ConfigError(path + ": " + what);
}

inline const json* find(const json& j, const std::string& path, const std::string& key) {
  if (!j.is_object()) config_fail(path, "expected an object");
  const auto it = j.find(key);
  return it == j.end() ? nullptr : &*it;
}

inline std::string child(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

inline double as_double(const json& j, const std::string& path) {
  if (!j.is_number()) config_fail(path, "expected a number");
  return j.get<double>();
}

inline int as_int(const json& j, const std::string& path) {
  if (!j.is_number_integer()) config_fail(path, "expected an integer");
  return j.get<int>();
}

inline std::uint64_t as_u64(const json& j, const std::string& path) {
  if (!j.is_number_unsigned() && !j.is_number_integer()) {
    config_fail(path, "expected a nonnegative integer");
  }
  if (j.is_number_integer() && j.get<std::int64_t>() < 0) {
    config_fail(path, "expected a nonnegative integer");
  }
  return j.get<std::uint64_t>();
}

inline std::string as_string(const json& j, const std::string& path) {
  if (!j.is_string()) config_fail(path, "expected a string");
  return j.get<std::string>();
}

inline bool as_bool(const json& j, const std::string& path) {
  if (!j.is_boolean()) config_fail(path, "expected a boolean");
  return j.get<bool>();
}

inline ProposalKind proposal_kind_from_name(const std::string& name,
                                            const std::string& path) {
  if (name == "bootstrap") return ProposalKind::kBootstrap;
  if (name == "ekf") return ProposalKind::kEkf;
  if (name == "ukf") return ProposalKind::kUkf;
  if (name == "laplace") return ProposalKind::kLaplace;
  if (name == "flow") return ProposalKind::kFlow;
  config_fail(path, "unknown proposal '" + name +
                        "' (expected bootstrap, ekf, ukf, laplace, or flow)");
}

inline void parse_flow(const json& j, const std::string& path, FlowConfig* flow) {
  if (const json* v = find(j, path, "kappa")) {
    flow->kappa = as_double(*v, child(path, "kappa"));
  }
  StepControl& c = flow->control;
  if (const json* v = find(j, path, "dt_init")) c.dt_init = as_double(*v, child(path, "dt_init"));
  if (const json* v = find(j, path, "dt_min")) c.dt_min = as_double(*v, child(path, "dt_min"));
  if (const json* v = find(j, path, "dt_max")) c.dt_max = as_double(*v, child(path, "dt_max"));
  if (const json* v = find(j, path, "atol")) {
    c.tolerances.atol = as_double(*v, child(path, "atol"));
  }
  if (const json* v = find(j, path, "rtol")) {
    c.tolerances.rtol = as_double(*v, child(path, "rtol"));
  }
  if (const json* v = find(j, path, "max_rejects_per_step")) {
    c.max_rejects_per_step = as_int(*v, child(path, "max_rejects_per_step"));
  }
}

inline void parse_model(const json& j, const std::string& path, ModelSpec* model) {
  if (const json* v = find(j, path, "name")) {
    model->name = as_string(*v, child(path, "name"));
  }
  if (model->name != "linear" && model->name != "altitude" && model->name != "arm" &&
      model->name != "radial") {
    config_fail(child(path, "name"), "unknown model '" + model->name +
                                         "' (expected linear, altitude, arm, or radial)");
  }
  if (const json* v = find(j, path, "dim")) {
    model->radial.dim = as_int(*v, child(path, "dim"));
  }
  if (const json* v = find(j, path, "sigma_x")) {
    model->radial.sigma_x = as_double(*v, child(path, "sigma_x"));
  }
  if (const json* v = find(j, path, "sigma_y")) {
    model->radial.sigma_y = as_double(*v, child(path, "sigma_y"));
  }
  if (const json* v = find(j, path, "y")) {
    model->radial.y = as_double(*v, child(path, "y"));
  }
  if (const json* v = find(j, path, "terrain_blobs")) {
    model->terrain_blobs = as_int(*v, child(path, "terrain_blobs"));
  }
  if (const json* v = find(j, path, "terrain_seed")) {
    model->terrain_seed = as_u64(*v, child(path, "terrain_seed"));
  }
  if (const json* v = find(j, path, "terrain_extent")) {
    model->terrain_extent = as_double(*v, child(path, "terrain_extent"));
    if (!(model->terrain_extent > 0.0)) {
      config_fail(child(path, "terrain_extent"), "expected a positive number");
    }
  }
  if (const json* v = find(j, path, "terrain_file")) {
    model->terrain_file = as_string(*v, child(path, "terrain_file"));
  }
  if (const json* v = find(j, path, "second_joint")) {
    model->second_joint = as_string(*v, child(path, "second_joint"));
    if (model->second_joint != "elbow" && model->second_joint != "hand") {
      config_fail(child(path, "second_joint"), "expected 'elbow' or 'hand'");
    }
  }
}

}  // namespace internal

/// Parses and validates one experiment configuration. Errors name the exact
/// field that failed, dot-separated from the document root.
inline RunConfig parse_config(const nlohmann::json& j) {
  using internal::as_bool;
  using internal::as_double;
  using internal::as_int;
  using internal::as_string;
  using internal::as_u64;
  using internal::child;
  using internal::config_fail;
  using internal::find;

  RunConfig config;
  const std::string root;
  const nlohmann::json* v = find(j, root, "experiment");
  if (v == nullptr) config_fail("experiment", "missing required field");
  config.experiment = as_string(*v, "experiment");
  if (config.experiment != "sampler-sweep" && config.experiment != "filter-bench" &&
      config.experiment != "single-run") {
    config_fail("experiment",
                "expected 'sampler-sweep', 'filter-bench', or 'single-run'");
  }
  config.id = config.experiment;
  if ((v = find(j, root, "id")) != nullptr) config.id = as_string(*v, "id");
  if ((v = find(j, root, "seed")) != nullptr) config.seed = as_u64(*v, "seed");
  if ((v = find(j, root, "replicates")) != nullptr) {
    config.replicates = as_int(*v, "replicates");
    if (config.replicates < 1) config_fail("replicates", "must be >= 1");
  }
  if ((v = find(j, root, "n_particles")) != nullptr) {
    config.n_particles = as_int(*v, "n_particles");
    if (config.n_particles < 1) config_fail("n_particles", "must be >= 1");
  }
  if ((v = find(j, root, "time_steps")) != nullptr) {
    config.time_steps = as_int(*v, "time_steps");
    if (config.time_steps < 1) config_fail("time_steps", "must be >= 1");
  }
  if ((v = find(j, root, "timing")) != nullptr) config.timing = as_bool(*v, "timing");

  if ((v = find(j, root, "methods")) != nullptr) {
    if (!v->is_array() || v->empty()) config_fail("methods", "expected a non-empty array");
    if (config.experiment == "filter-bench") {
      config.filter_methods.clear();
      for (std::size_t i = 0; i < v->size(); ++i) {
        const std::string path = "methods[" + std::to_string(i) + "]";
        const nlohmann::json& entry = (*v)[i];
        MethodSpec spec;
        const nlohmann::json* name = find(entry, path, "proposal");
        if (name == nullptr) config_fail(child(path, "proposal"), "missing required field");
        spec.name = as_string(*name, child(path, "proposal"));
        spec.kind = internal::proposal_kind_from_name(spec.name, child(path, "proposal"));
        if (const nlohmann::json* n = find(entry, path, "n")) {
          spec.n = as_int(*n, child(path, "n"));
          if (spec.n < 1) config_fail(child(path, "n"), "must be >= 1");
        }
        config.filter_methods.push_back(std::move(spec));
      }
    } else {
      config.sampler_methods.clear();
      for (std::size_t i = 0; i < v->size(); ++i) {
        const std::string path = "methods[" + std::to_string(i) + "]";
        const std::string name = as_string((*v)[i], path);
        if (name != "prior-is" && name != "laplace-is" && name != "flow-is") {
          config_fail(path, "unknown sampler '" + name +
                                "' (expected prior-is, laplace-is, or flow-is)");
        }
        config.sampler_methods.push_back(name);
      }
    }
  } else if (config.experiment == "filter-bench") {
    config_fail("methods", "missing required field");
  }

  if ((v = find(j, root, "model")) != nullptr) {
    internal::parse_model(*v, "model", &config.model);
  }
  if (config.experiment == "filter-bench") {
    if (config.model.name == "radial") {
      config_fail("model.name", "the radial model has no dynamics; "
                                "filter benchmarks need linear, altitude, or arm");
    }
  } else {
    // Sampler experiments always run on the single-frame radial problem.
    config.model.name = "radial";
  }
  if ((v = find(j, root, "flow")) != nullptr) {
    internal::parse_flow(*v, "flow", &config.flow);
  }

  if ((v = find(j, root, "sweep")) != nullptr) {
    SweepAxis axis;
    const nlohmann::json* p = find(*v, "sweep", "parameter");
    if (p == nullptr) config_fail("sweep.parameter", "missing required field");
    axis.parameter = as_string(*p, "sweep.parameter");
    if (axis.parameter != "sigma_x" && axis.parameter != "sigma_y" &&
        axis.parameter != "dim" && axis.parameter != "kappa") {
      config_fail("sweep.parameter",
                  "unknown parameter '" + axis.parameter +
                      "' (expected sigma_x, sigma_y, dim, or kappa)");
    }
    const nlohmann::json* vals = find(*v, "sweep", "values");
    if (vals == nullptr || !vals->is_array() || vals->empty()) {
      config_fail("sweep.values", "expected a non-empty array of numbers");
    }
    for (std::size_t i = 0; i < vals->size(); ++i) {
      axis.values.push_back(as_double((*vals)[i], "sweep.values[" + std::to_string(i) + "]"));
    }
    config.sweep = std::move(axis);
  }
  if (config.experiment == "sampler-sweep" && !config.sweep.has_value()) {
    config_fail("sweep", "missing required field for a sampler-sweep experiment");
  }

  if ((v = find(j, root, "components")) != nullptr) {
    if (!v->is_array()) config_fail("components", "expected an array of state indices");
    for (std::size_t i = 0; i < v->size(); ++i) {
      config.components.push_back(
          as_int((*v)[i], "components[" + std::to_string(i) + "]"));
    }
  }
  return config;
}

/// Parses a configuration from JSON text.
inline RunConfig parse_config_text(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ConfigError("document is not valid JSON");
  return parse_config(j);
}

}  // namespace gaussflow::harness

#endif  // GAUSSFLOW_HARNESS_CONFIG_HPP_
