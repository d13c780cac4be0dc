#pragma once

#include <string>
#include <vector>

#include "ctpe/config.hpp"
#include "ctpe/oracles.hpp"
#include "ctpe/types.hpp"

namespace ctpe {

/// One acceptance row of an experiment: an algorithm's aggregate landing spot
/// against its oracle fixture (or an expected-divergence verdict).
struct ReportRow {
  std::string name;
  std::string fixture_id;
  Vec final_mean;
  Vec final_std;
  Vec target;
  double tolerance = 0.0;
  bool expect_divergence = false;
  std::string detail;
  bool pass = false;
  double wall_seconds = 0.0;
};

struct ExperimentReport {
  std::string experiment_id;
  std::vector<ReportRow> rows;
  double wall_seconds = 0.0;

  bool all_pass() const;
};

/// Runs the configured experiment end to end, writing iterate histories and
/// summary CSVs under config.output_dir, and returns the report.
ExperimentReport run_experiment(const ExperimentConfig& config);

struct CatalogEntry {
  std::string id;
  std::string description;
};

std::vector<CatalogEntry> list_experiments();

/// Recomputes every oracle fixture and writes the fixtures file.
void regen_fixtures(const std::string& path);

void write_report_text(const ExperimentReport& report, const std::string& path);
void write_report_csv(const ExperimentReport& report, const std::string& path);

/// Runs fn(0..n-1) on a small thread pool; results must be written to
/// preallocated per-index slots so aggregation order is deterministic.
void parallel_for(Index n, const std::function<void(Index)>& fn);

}  // namespace ctpe
