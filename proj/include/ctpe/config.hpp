#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"

#include "ctpe/types.hpp"

namespace ctpe {

/// Experiment configuration: the experiment id plus the full JSON tree with
/// the experiment's defaults merged in (file values win). Compatibility of
/// the referenced family and algorithms is validated when the experiment is
/// built, before anything runs.
struct ExperimentConfig {
  std::string experiment_id;
  std::string output_dir = "out";
  Index repetitions = 100;
  std::uint64_t seed_base = 20240101;
  nlohmann::json tree;
};

/// Defaults for a known experiment id (the checked-in config files are these
/// serialized verbatim).
nlohmann::json default_config_tree(const std::string& experiment_id);

ExperimentConfig config_from_tree(nlohmann::json tree);
ExperimentConfig load_experiment_config(const std::string& path);
ExperimentConfig default_experiment_config(const std::string& experiment_id);

void write_config(const ExperimentConfig& config, const std::string& path);

}  // namespace ctpe
