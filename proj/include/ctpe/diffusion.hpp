#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ctpe/types.hpp"

namespace ctpe {

/// Uniform grid t0 = points[0] < ... < points[K] = T with spacing dt.
struct TimeGrid {
  TimeGrid() : TimeGrid(0.0, 1.0, 1) {}
  TimeGrid(double t0, double T, Index steps);

  double t0 = 0.0;
  double T = 1.0;
  Index K = 1;
  double dt = 1.0;
  std::vector<double> points;  // K+1 entries

  double t(Index i) const { return points[static_cast<std::size_t>(i)]; }
};

enum class SamplerKind { ExactBrownian, ExactGbm, ExactOu, Euler };

std::string to_string(SamplerKind kind);

using DriftFn = std::function<Vec(double, const Vec&)>;
using DiffusionFn = std::function<Mat(double, const Vec&)>;  // d x m
using RewardFn = std::function<double(double, const Vec&)>;
using TerminalFn = std::function<double(const Vec&)>;

/// One policy-evaluation problem instance: state dynamics, running and
/// terminal rewards, discount rate and horizon. Exact transition samplers are
/// only constructible through the factories that fix the matching coefficient
/// structure; arbitrary coefficients go through the Euler fallback.
struct DiffusionModel {
  SamplerKind kind = SamplerKind::Euler;
  DriftFn drift;
  DiffusionFn diffusion;
  RewardFn running_reward;
  TerminalFn terminal_reward;
  double discount_rate = 0.0;
  std::optional<double> horizon;
  Vec initial_state;
  Index state_dim = 1;
  Index noise_dim = 1;
  bool euler_fallback_warning = false;

  // Coefficients backing the exact samplers.
  struct {
    double mu = 0.0, sigma = 1.0;       // Brownian: dX = mu dt + sigma dW
    double r = 0.0, q = 0.0;            // GBM: dX/X = (r - q) dt + sigma dW
    double a = 1.0, mean = 0.0;         // OU: dX = a (mean - X) dt + sigma dW
  } coef;

  static DiffusionModel brownian(double mu, double sigma, double x0,
                                 std::optional<double> horizon, RewardFn reward,
                                 TerminalFn terminal, double rho = 0.0);
  static DiffusionModel gbm(double r, double q, double sigma, double x0,
                            std::optional<double> horizon, RewardFn reward,
                            TerminalFn terminal, double rho = 0.0);
  static DiffusionModel ou(double a, double mean, double sigma, double x0,
                           std::optional<double> horizon, RewardFn reward,
                           TerminalFn terminal, double rho = 0.0);
  static DiffusionModel euler(DriftFn drift, DiffusionFn diffusion, Vec x0,
                              Index noise_dim, std::optional<double> horizon,
                              RewardFn reward, TerminalFn terminal,
                              double rho = 0.0);
};

/// One sampled episode. rewards[i] = running_reward(t_i, states[i]) for
/// i < K; terminal_value = terminal_reward(states[K]).
struct Trajectory {
  TimeGrid grid;
  std::vector<Vec> states;      // K+1
  std::vector<double> rewards;  // K
  double terminal_value = 0.0;
  std::uint64_t seed = 0;
};

struct EpisodeBatch {
  std::vector<Trajectory> trajectories;

  Index size() const { return static_cast<Index>(trajectories.size()); }
  const Trajectory& operator[](Index i) const {
    return trajectories[static_cast<std::size_t>(i)];
  }
};

/// Nonempty with one shared grid; throws otherwise. Batch reductions call
/// this before touching episode data.
void validate_batch(const EpisodeBatch& batch);

/// Draw one episode. Exact kinds sample the exact transition law; the Euler
/// kind applies the Euler-Maruyama step. Deterministic given the seed.
Trajectory sample_trajectory(const DiffusionModel& model, const TimeGrid& grid,
                             std::uint64_t seed);

/// n episodes on a shared grid with seeds seed_base, seed_base+1, ...
EpisodeBatch sample_batch(const DiffusionModel& model, const TimeGrid& grid,
                          Index n, std::uint64_t seed_base);

/// Re-evaluates the stored reward stream against the model; throws on mismatch.
void check_reward_consistency(const DiffusionModel& model, const Trajectory& traj);

/// terminal_value + sum_{j >= from_index} rewards[j] * dt.
double cumulative_reward(const Trajectory& traj, Index from_index);

/// exp(-rho T) * terminal_value + sum_{j >= from_index} exp(-rho t_j) * rewards[j] * dt.
/// rho = 0 reduces exactly to cumulative_reward.
double discounted_cumulative_reward(const Trajectory& traj, double rho,
                                    Index from_index);

/// Columns: t, x[0..d), r (r blank on the terminal row).
void write_trajectory_csv(const Trajectory& traj, const std::string& path);

}  // namespace ctpe
