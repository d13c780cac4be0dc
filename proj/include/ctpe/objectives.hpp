#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ctpe/test_functions.hpp"
#include "ctpe/value_model.hpp"

namespace ctpe {

struct ObjectiveValue {
  double value = 0.0;
  Index n_episodes = 0;
  double std_error = 0.0;
};

/// 0.5 * mean over episodes of sum_i (dm_i / dt)^2 dt, undiscounted dm.
ObjectiveValue mstde(const ValueModel& model, const Vec& theta, const EpisodeBatch& batch);

/// 0.5 * mean over episodes of sum_i (G_i - J(t_i, X_i))^2 dt, with G_i the
/// reward-to-go. For rho > 0 both sides carry the discount weights:
/// G_i = e^{-rho T} h + sum_{j>=i} e^{-rho t_j} r_j dt and J enters as
/// e^{-rho t_i} J(t_i, X_i).
ObjectiveValue martingale_loss(const ValueModel& model, const Vec& theta,
                               const EpisodeBatch& batch, double rho);

using OracleFn = std::function<double(double, const Vec&)>;

/// mean over episodes of sum_i (oracle(t_i, X_i) - J(t_i, X_i))^2 dt.
ObjectiveValue msve(const ValueModel& model, const Vec& theta, const EpisodeBatch& batch,
                    const OracleFn& oracle);

/// mean over episodes of sum_i dm_i^2 (no 1/dt scaling), undiscounted dm.
ObjectiveValue realized_qv(const ValueModel& model, const Vec& theta,
                           const EpisodeBatch& batch);

enum class GmmWeighting { Identity, InverseGram };

/// 0.5 ghat' A ghat with ghat the batch moment estimate and A either the
/// identity or the inverse of the empirical Gram sum_i xi xi' dt estimated on
/// the same batch. std_error by first-order propagation of the moment noise.
ObjectiveValue gmm_objective(const ValueModel& model, const Vec& theta,
                             const EpisodeBatch& batch, const TestFunction& test,
                             GmmWeighting weighting, double rho = 0.0,
                             double gram_ridge = 0.0);

/// Inverse-Gram quadratic form of the stacked moment estimates
/// (the projected-error objective). Equals gmm_objective with
/// weighting = InverseGram on the stacked tests.
ObjectiveValue mspbe(const ValueModel& model, const Vec& theta, const EpisodeBatch& batch,
                     const std::vector<TestFunction>& tests, double rho = 0.0);

inline ObjectiveValue mstde(const ValueModel& m, const EpisodeBatch& b) {
  return mstde(m, m.params, b);
}
inline ObjectiveValue martingale_loss(const ValueModel& m, const EpisodeBatch& b, double rho) {
  return martingale_loss(m, m.params, b, rho);
}
inline ObjectiveValue msve(const ValueModel& m, const EpisodeBatch& b, const OracleFn& o) {
  return msve(m, m.params, b, o);
}
inline ObjectiveValue realized_qv(const ValueModel& m, const EpisodeBatch& b) {
  return realized_qv(m, m.params, b);
}

struct SweepPoint {
  Vec theta;
  double value = 0.0;
  double std_error = 0.0;
};

/// Evaluate a 1-d objective over a theta grid (for plots and grid argmins).
std::vector<SweepPoint> sweep_objective(
    const std::function<ObjectiveValue(const Vec&)>& objective, double lo, double hi,
    Index n_points);

void write_sweep_csv(const std::vector<SweepPoint>& sweep, const std::string& path);

}  // namespace ctpe
