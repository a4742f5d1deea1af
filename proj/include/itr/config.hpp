#pragma once

#include <string>

#include <json.hpp>

#include "itr/dataset.hpp"
#include "itr/pipeline.hpp"
#include "itr/sim.hpp"

namespace itr {

inline constexpr double kFitPruneFrac = 0.1;
inline constexpr double kSimulationPruneFrac = 0.01;

// Every knob of a CLI run. Parsed from JSON; unknown keys are rejected.
struct RunConfig {
  TableOptions table;
  PipelineConfig pipeline;
  BenchmarkConfig benchmark;
  bool prune_frac_set = false;
  nlohmann::json source = nlohmann::json::object();

  // Stable fingerprint of the effective settings.
  std::string hash() const;
  nlohmann::json effective() const;
};

RunConfig default_run_config();
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

// --seed on the command line: replaces the fold seed and the simulation seed.
void override_seed(RunConfig& cfg, std::uint64_t seed);

}  // namespace itr
