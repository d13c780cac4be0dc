#include "ctpe/config.hpp"

#include <fstream>

namespace ctpe {

namespace {

nlohmann::json solver_entry(const std::string& name, const std::string& algorithm,
                            const std::string& mode, double alpha0, double decay,
                            Index episodes, const std::string& target) {
  nlohmann::json s;
  s["name"] = name;
  s["algorithm"] = algorithm;
  s["mode"] = mode;
  s["alpha0"] = alpha0;
  s["decay"] = decay;
  s["episodes"] = episodes;
  s["record_every"] = 100;
  s["target_fixture"] = target;
  return s;
}

}  // namespace

nlohmann::json default_config_tree(const std::string& id) {
  nlohmann::json c;
  c["experiment_id"] = id;
  c["output_dir"] = "out/" + id;
  c["repetitions"] = 100;
  c["seed_base"] = 20240101;

  if (id == "ex1") {
    c["model"] = {{"kind", "brownian"}, {"mu", 0.0},          {"sigma", 1.0},
                  {"x0", 0.0},          {"T", 1.0},           {"K", 100},
                  {"rho", 0.0},         {"reward", {{"kind", "zero"}}},
                  {"terminal", {{"kind", "identity"}}}};
    c["family"] = {{"id", "affine_time_scaled"}, {"theta0", {-1.0}}};
    c["solvers"] = nlohmann::json::array();
    c["solvers"].push_back(solver_entry("residual_gradient_offline", "residual_gradient",
                                        "offline", 0.01, 0.0, 10000, "ex1_mstde"));
    c["solvers"].push_back(solver_entry("residual_gradient_online", "residual_gradient",
                                        "online", 0.01, 0.0, 10000, "ex1_mstde"));
    c["solvers"].push_back(
        solver_entry("ml", "ml", "offline", 1.0, 0.67, 10000, "ex1_true"));
    auto ctd0 = solver_entry("ctd0", "ctd", "online", 0.01, 0.0, 10000, "ex1_true");
    ctd0["test"] = {{"kind", "grad"}};
    c["solvers"].push_back(ctd0);
    auto ctd1 = solver_entry("ctd1", "ctd", "online", 0.01, 0.0, 10000, "ex1_true");
    ctd1["test"] = {{"kind", "trace"}, {"lambda", 1.0}};
    c["solvers"].push_back(ctd1);
    return c;
  }

  if (id == "ex2") {
    c["model"] = {{"kind", "brownian"}, {"mu", 0.0},
                  {"sigma", 1.0},       {"x0", 0.0},
                  {"T", 1.0},           {"K", 100},
                  {"rho", 0.0},         {"reward", {{"kind", "constant"}, {"value", -1.0}}},
                  {"terminal", {{"kind", "square"}}}};
    c["family"] = {{"id", "quad_triple"}, {"theta0", {-1.0, -1.0, -1.0}}};
    c["solvers"] = nlohmann::json::array();
    c["solvers"].push_back(solver_entry("residual_gradient_offline", "residual_gradient",
                                        "offline", 0.01, 0.0, 15000, "ex2_mstde"));
    // The one-step rule carries a step-size-proportional bias on the leading
    // coordinate, hence the smaller rate.
    c["solvers"].push_back(solver_entry("residual_gradient_online", "residual_gradient",
                                        "online", 0.002, 0.0, 15000, "ex2_mstde"));
    c["solvers"].push_back(
        solver_entry("ml", "ml", "offline", 1.0, 0.67, 15000, "ex2_true"));
    auto ctd0 = solver_entry("ctd0", "ctd", "online", 0.01, 0.0, 15000, "ex2_true");
    ctd0["test"] = {{"kind", "grad"}};
    c["solvers"].push_back(ctd0);
    auto ctd1 = solver_entry("ctd1", "ctd", "online", 0.01, 0.0, 15000, "ex2_true");
    ctd1["test"] = {{"kind", "trace"}, {"lambda", 1.0}};
    c["solvers"].push_back(ctd1);
    return c;
  }

  if (id == "ex3") {
    c["model"] = {{"kind", "brownian"}, {"mu", 0.0},          {"sigma", 1.0},
                  {"x0", 0.0},          {"T", 1.0},           {"K", 100},
                  {"rho", 0.0},         {"reward", {{"kind", "zero"}}},
                  {"terminal", {{"kind", "identity"}}}};
    c["family"] = {{"id", "cubic"}, {"theta0", {1.0}}};
    c["solvers"] = nlohmann::json::array();
    c["solvers"].push_back(solver_entry("ml", "ml", "offline", 0.1, 0.67, 10000, "ex3_ml"));
    // The moment root sits at an unstable equilibrium of the semi-gradient
    // recursion; runs start beside it and must stay inside the tolerance.
    auto ctd0 = solver_entry("ctd0", "ctd", "online", 0.001, 0.67, 10000, "ex3_moment");
    ctd0["test"] = {{"kind", "grad"}};
    ctd0["theta0"] = {0.01};
    c["solvers"].push_back(ctd0);
    auto ctd1 = solver_entry("ctd1", "ctd", "online", 0.001, 0.67, 10000, "ex3_moment");
    ctd1["test"] = {{"kind", "trace"}, {"lambda", 1.0}};
    ctd1["theta0"] = {0.01};
    c["solvers"].push_back(ctd1);
    return c;
  }

  if (id == "ex4") {
    c["repetitions"] = 50;
    c["model"] = {{"kind", "brownian"}, {"mu", 0.0},          {"sigma", 1.0},
                  {"x0", 0.0},          {"T", 1.0},           {"K", 100},
                  {"rho", 0.0},         {"reward", {{"kind", "zero"}}},
                  {"terminal", {{"kind", "identity"}}}};
    c["family"] = {{"id", "exp_pinned"}, {"theta0", {-2.0}}};
    c["solvers"] = nlohmann::json::array();
    // Semi-gradient noise on this family is heavy-tailed (squared exponentials
    // of the state), so the CTD rows run decayed rates from nearby starts.
    auto ctd0 = solver_entry("ctd0", "ctd", "online", 0.0015, 0.3, 100000, "ex4_ctd0");
    ctd0["test"] = {{"kind", "grad"}};
    ctd0["theta0"] = {-1.8};
    c["solvers"].push_back(ctd0);
    auto ctd1 = solver_entry("ctd1", "ctd", "online", 0.002, 0.3, 60000, "ex4_ctd1");
    ctd1["test"] = {{"kind", "trace"}, {"lambda", 1.0}};
    ctd1["theta0"] = {-2.12};
    c["solvers"].push_back(ctd1);
    c["solvers"].push_back(
        solver_entry("ml", "ml", "offline", 0.5, 0.67, 40000, "ex4_ml"));
    return c;
  }

  if (id == "ex5") {
    c["model"] = {{"kind", "brownian"}, {"mu", 0.0},          {"sigma", 1.0},
                  {"x0", 0.0},          {"T", 1.0},           {"K", 100},
                  {"rho", 0.0},         {"reward", {{"kind", "zero"}}},
                  {"terminal", {{"kind", "identity"}}}};
    c["family"] = {{"id", "exp_unpinned"}, {"theta0", {-0.5}}};
    c["solvers"] = nlohmann::json::array();
    c["solvers"].push_back(
        solver_entry("ml", "ml", "offline", 0.1, 0.67, 20000, "ex5_ml"));
    auto gtd2 = solver_entry("cgtd2", "cgtd", "online", 0.05, 0.67, 20000, "ex5_mspbe");
    gtd2["variant"] = "gtd2";
    gtd2["alpha_u0"] = 0.5;
    gtd2["test"] = {{"kind", "constant"}, {"value", 1.0}};
    c["solvers"].push_back(gtd2);
    auto ctd0 = solver_entry("ctd0", "ctd", "online", 0.01, 0.0, 10000, "ex5_ml");
    ctd0["test"] = {{"kind", "constant"}, {"value", 1.0}};
    ctd0["expect_divergence"] = true;
    c["solvers"].push_back(ctd0);
    return c;
  }

  if (id == "lq_infinite") {
    c["repetitions"] = 1;
    c["model"] = {{"kind", "ou"},  {"a", 1.0},   {"mean", 1.0},
                  {"sigma", 0.5},  {"x0", 0.0},  {"rho", 1.5},
                  {"reward", {{"kind", "lq"}, {"q", 1.0}}},
                  {"terminal", {{"kind", "zero"}}}};
    c["family"] = {{"id", "lq_quadratic"}, {"theta0", {0.0, 0.0, 0.0}}};
    c["single_trajectory"] = {{"t_max", 2.0e5}, {"dt", 0.01}, {"record_every_steps", 5000}};
    c["threshold"] = 0.02;
    c["solvers"] = nlohmann::json::array();
    c["solvers"].push_back({{"name", "clstd"}, {"algorithm", "clstd"},
                            {"target_fixture", "lq_abc"}});
    c["solvers"].push_back({{"name", "cgtd2"},
                            {"algorithm", "cgtd"},
                            {"variant", "gtd2"},
                            {"alpha0", 0.05},
                            {"alpha_u0", 0.5},
                            {"decay", 0.33},
                            {"target_fixture", "lq_abc"}});
    c["solvers"].push_back({{"name", "ctd0"},
                            {"algorithm", "ctd"},
                            {"alpha0", 0.05},
                            {"decay", 0.33},
                            {"target_fixture", "lq_abc"}});
    return c;
  }

  if (id == "option_bs") {
    c["repetitions"] = 1;
    c["model"] = {{"kind", "gbm"}, {"r", 0.01},  {"q", 0.0},
                  {"sigma", 0.3},  {"x0", 1.0},  {"T", 1.0},
                  {"K", 100},      {"rho", 0.01},
                  {"reward", {{"kind", "zero"}}},
                  {"terminal", {{"kind", "call"}, {"strike", 1.0}}}};
    c["family"] = {{"id", "payoff_residual_mlp"}, {"strike", 1.0}, {"init_seed", 7}};
    c["training"] = {{"alpha0", 0.1}, {"decay", 0.4}, {"episodes", 80000},
                     {"record_every", 2000}};
    c["evaluation"] = {{"episodes", 1000}, {"seed_offset", 900000},
                       {"curve_episodes", 200}};
    c["thresholds"] = {{"price_error", 0.01}, {"msve", 0.001}};
    return c;
  }

  if (id == "test_function_study") {
    c["repetitions"] = 3000;
    c["model"] = {{"kind", "brownian"}, {"mu", 0.0},  {"sigma", 1.0},
                  {"x0", 0.0},          {"rho", 1.5},
                  {"reward", {{"kind", "lq"}, {"q", 0.0}}},
                  {"terminal", {{"kind", "zero"}}}};
    c["family"] = {{"id", "bm_lq_known_curvature"}, {"theta0", {1.0}}};
    c["single_trajectory"] = {{"t_max", 100.0}, {"dt", 0.01}, {"record_every_steps", 50}};
    c["alpha"] = 1.0;
    c["checks"] = {{"mean_track_until", 5.0},
                   {"mean_track_rtol", 0.10},
                   {"std_ratio_at", 100.0},
                   {"std_ratio_min", 2.0}};
    return c;
  }

  if (id == "sectional_study") {
    c["repetitions"] = 20;
    c["model"] = {{"kind", "brownian"}, {"mu", 0.0},          {"sigma", 1.0},
                  {"x0", 0.0},          {"T", 1.0},           {"K", 100},
                  {"rho", 0.0},         {"reward", {{"kind", "zero"}}},
                  {"terminal", {{"kind", "identity"}}}};
    // The future-slice broadcast makes long sectional runs drift off; 600
    // episodes keeps both methods in their informative regime.
    c["episodes"] = 600;
    c["alpha"] = 0.01;
    c["record_every"] = 100;
    c["global_theta0"] = -1.0;
    return c;
  }

  if (id == "rate_study") {
    c["repetitions"] = 1;
    c["mstde_drift"] = {{"episodes", 200000},
                        {"meshes", {0.1, 0.05, 0.02, 0.01}},
                        {"slope_lo", 0.7},
                        {"slope_hi", 1.3}};
    c["ml_gap"] = {{"meshes", {0.1, 0.05, 0.02, 0.01}}, {"min_slope", 0.4}};
    c["moment_norm"] = {{"meshes", {0.1, 0.05, 0.02, 0.01}}, {"min_slope", 0.4}};
    return c;
  }

  throw std::invalid_argument("unknown experiment id: " + id);
}

ExperimentConfig config_from_tree(nlohmann::json tree) {
  ExperimentConfig config;
  config.experiment_id = tree.at("experiment_id").get<std::string>();
  nlohmann::json merged = default_config_tree(config.experiment_id);
  merged.merge_patch(tree);
  config.output_dir = merged.at("output_dir").get<std::string>();
  config.repetitions = merged.at("repetitions").get<Index>();
  config.seed_base = merged.at("seed_base").get<std::uint64_t>();
  config.tree = std::move(merged);
  return config;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  nlohmann::json tree;
  in >> tree;
  return config_from_tree(std::move(tree));
}

ExperimentConfig default_experiment_config(const std::string& experiment_id) {
  return config_from_tree(default_config_tree(experiment_id));
}

void write_config(const ExperimentConfig& config, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << config.tree.dump(2) << "\n";
}

}  // namespace ctpe
