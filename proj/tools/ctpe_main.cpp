#include <cstdio>
#include <string>

#include "CLI11.hpp"

#include "ctpe/config.hpp"
#include "ctpe/experiments.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Continuous-time policy evaluation experiments"};
  app.require_subcommand(1);

  std::string config_path;
  bool report_only = false;
  auto* run_cmd = app.add_subcommand("run", "Run an experiment from a config file");
  run_cmd->add_option("config", config_path, "JSON experiment config")->required();
  run_cmd->add_flag("--report-only", report_only,
                    "Exit zero even when acceptance rows fail");

  auto* list_cmd = app.add_subcommand("list", "List the experiment catalog");

  std::string fixtures_path = "data/fixtures.json";
  auto* fixtures_cmd =
      app.add_subcommand("fixtures", "Recompute oracle fixtures and write them out");
  fixtures_cmd->add_option("--out", fixtures_path, "Output path");

  std::string default_id;
  std::string default_out;
  auto* config_cmd =
      app.add_subcommand("config", "Print the default config for an experiment id");
  config_cmd->add_option("id", default_id, "Experiment id")->required();
  config_cmd->add_option("--out", default_out, "Write to file instead of stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) {
      const ctpe::ExperimentConfig config = ctpe::load_experiment_config(config_path);
      const ctpe::ExperimentReport report = ctpe::run_experiment(config);
      for (const auto& row : report.rows)
        std::printf("%s %s/%s: %s\n", row.pass ? "[pass]" : "[FAIL]",
                    report.experiment_id.c_str(), row.name.c_str(), row.detail.c_str());
      std::printf("report written to %s (%.1fs)\n", config.output_dir.c_str(),
                  report.wall_seconds);
      return (report.all_pass() || report_only) ? 0 : 1;
    }
    if (*list_cmd) {
      for (const auto& entry : ctpe::list_experiments())
        std::printf("%-22s %s\n", entry.id.c_str(), entry.description.c_str());
      return 0;
    }
    if (*fixtures_cmd) {
      ctpe::regen_fixtures(fixtures_path);
      std::printf("fixtures written to %s\n", fixtures_path.c_str());
      return 0;
    }
    if (*config_cmd) {
      const ctpe::ExperimentConfig config = ctpe::default_experiment_config(default_id);
      if (default_out.empty())
        std::printf("%s\n", config.tree.dump(2).c_str());
      else
        ctpe::write_config(config, default_out);
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
