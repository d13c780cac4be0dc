#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ctpe/test_functions.hpp"

namespace ctpe {

/// alpha(k) = alpha0 * k^(-decay_exponent), k the 1-based episode index.
/// Two-timescale methods read the u-rate from alpha_u0 (same decay).
struct LearningSchedule {
  double alpha0 = 0.01;
  double decay_exponent = 0.0;
  std::optional<double> alpha_u0;

  double alpha(Index episode) const;
  double alpha_u(Index episode) const;  // defaults to 10 * alpha(episode)
};

enum class Algorithm {
  ResidualGradient,
  MartingaleSgd,
  Ctd,
  Cgtd,
  SectionalCtd0,
};

enum class CgtdVariant { Gtd0, Gtd2, Tdc };
enum class SolveMode { Offline, Online };
enum class Verdict { Converged, MaxEpisodes, Diverged };

std::string to_string(Algorithm a);
std::string to_string(Verdict v);

// --- Step- and episode-level update rules -----------------------------------
// Each mutates model.params in place. Divergence surfaces as OverflowError /
// NonFiniteError from the value family or as a guard trip inside run().

/// theta <- theta - alpha * sum_i (dm_i / dt) (grad J(t_{i+1}) - grad J(t_i));
/// Online applies the single-step summand at the current theta per step.
void residual_gradient_episode(ValueModel& model, const Trajectory& traj, double alpha,
                               SolveMode mode);

/// theta <- theta + alpha * sum_i (G_i - w_i J(t_i, X_i)) w_i grad J(t_i, X_i) dt,
/// w_i = exp(-rho t_i). Offline only: needs the whole trajectory.
void ml_sgd_episode(ValueModel& model, const Trajectory& traj, double alpha, double rho);

/// Semi-gradient update theta <- theta + alpha * xi_i * dm_i. The trace state
/// must be the one threaded through this trajectory.
void ctd_lambda_step(ValueModel& model, const Trajectory& traj, Index i,
                     const TestFunction& test, TestFunction::State& state, double alpha,
                     double rho);

/// Offline variant: accumulates sum_i xi_i dm_i at frozen theta, then applies.
void ctd_lambda_episode(ValueModel& model, const Trajectory& traj,
                        const TestFunction& test, double alpha, double rho);

/// Two-timescale gradient-TD step on (theta, u):
///   u <- u + alpha_u [xi dm - xi xi' u dt]          (gtd2 / tdc)
///   u <- u + alpha_u [xi dm - u dt]                 (gtd0, identity weighting)
/// followed by the printed theta rule of the chosen variant, including the
/// d(xi)/d(theta) terms (zero for families linear in theta).
void cgtd_step(ValueModel& model, const Trajectory& traj, Index i, CgtdVariant variant,
               const TestFunction& test, TestFunction::State& state, Vec& u,
               double alpha_theta, double alpha_u, double rho);

/// Sectional online rule at arrival time t_i (i >= 1): with
/// delta = J_i(X_{t_i}) - J_{i-1}(X_{t_{i-1}}) and gradients taken at
/// X_{t_{i-1}}, updates theta_{i-1} and every future slice theta_k, k >= i,
/// never touching the pinned terminal slice.
void sectional_ctd0_step(SectionalModel& model, const Trajectory& traj, Index i,
                         double alpha);

// --- Streaming single-step variants (no Trajectory storage) ----------------

void ctd_lambda_step(ValueModel& model, const StepView& step, const TestFunction& test,
                     TestFunction::State& state, double alpha, double rho);

void cgtd_step(ValueModel& model, const StepView& step, CgtdVariant variant,
               const TestFunction& test, TestFunction::State& state, Vec& u,
               double alpha_theta, double alpha_u, double rho);

// --- CLSTD ------------------------------------------------------------------

/// Accumulates the empirical moment system of a family linear in theta:
///   A += phi_0 (phi_1 - phi_0 - rho phi_0 dt)'
///   b += phi_0 ((off_1 - off_0) + r dt - rho off_0 dt)
/// solve() returns theta = -A^{-1} b.
class ClstdAccumulator {
 public:
  explicit ClstdAccumulator(Index dim);
  void add_step(const Vec& phi0, const Vec& phi1, double offset0, double offset1,
                double reward0, double dt, double rho);
  Vec solve() const;  // throws SingularMatrixError
  Index steps() const { return n_; }

 private:
  Mat a_;
  Vec b_;
  Index n_ = 0;
};

/// Exact linear solve of the empirical moment conditions for a family linear
/// in theta (basis = parameter gradient, offset = value at theta = 0).
Vec clstd_solve(const ValueModel& model, const EpisodeBatch& batch, double rho);

// --- Episode loop ------------------------------------------------------------

struct SolverConfig {
  Algorithm algorithm = Algorithm::Ctd;
  SolveMode mode = SolveMode::Online;
  LearningSchedule schedule;
  TestFunction test = TestFunction::grad_theta();
  CgtdVariant variant = CgtdVariant::Gtd2;
  Index episodes = 1000;
  std::uint64_t seed = 0;
  Index record_every = 1;
  double rho = 0.0;
  double theta_bound = 1e6;
  /// Sliding-window iterate std threshold for the "converged" verdict
  /// (reporting only, never stops the loop). Disabled when <= 0.
  double convergence_tol = 0.0;
};

struct SolverRun {
  Algorithm algorithm;
  SolveMode mode;
  LearningSchedule schedule;
  std::vector<Index> recorded_episodes;
  Mat iterates;  // one recorded theta per row
  Verdict verdict = Verdict::MaxEpisodes;
  Index episodes_run = 0;
  std::optional<Vec> aux_state;

  Vec final_theta() const { return iterates.row(iterates.rows() - 1); }
};

/// Episode loop: sample episode k with seed seed + k - 1, apply the
/// configured rule at rate alpha(k), guard for divergence, record iterates.
SolverRun run(ValueModel& model, const DiffusionModel& diffusion, const TimeGrid& grid,
              const SolverConfig& config);

/// Single long trajectory streamed step by step (the infinite-horizon mode).
/// The learning-rate episode index advances once per unit of process time.
/// record_every_steps also sets the CLSTD re-solve cadence.
struct SingleTrajectoryConfig {
  Algorithm algorithm = Algorithm::Ctd;  // Ctd or Cgtd
  LearningSchedule schedule;
  TestFunction test = TestFunction::grad_theta();
  CgtdVariant variant = CgtdVariant::Gtd2;
  double t_max = 1e5;
  double dt = 0.01;
  std::uint64_t seed = 0;
  Index record_every_steps = 1000;
  double rho = 0.0;
  double theta_bound = 1e6;
};

SolverRun run_single_trajectory(ValueModel& model, const DiffusionModel& diffusion,
                                const SingleTrajectoryConfig& config);

/// CLSTD on one streamed trajectory with running-average estimates; records
/// the solved theta at the same cadence (rows of NaN until the system first
/// becomes solvable).
SolverRun clstd_single_trajectory(const ValueModel& model, const DiffusionModel& diffusion,
                                  const SingleTrajectoryConfig& config);

}  // namespace ctpe
