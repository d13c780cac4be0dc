#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ctpe/diffusion.hpp"
#include "ctpe/types.hpp"

namespace ctpe {

/// Parametric value-function family J^theta(t, x) with analytic
/// theta-gradients. Parameters live on the model; the core evaluation takes
/// theta explicitly so objectives and oracles can probe without mutating.
class ValueModel {
 public:
  virtual ~ValueModel() = default;

  virtual std::string family() const = 0;
  virtual Index param_count() const = 0;
  virtual double value(const Vec& theta, double t, const Vec& x) const = 0;
  virtual void gradient(const Vec& theta, double t, const Vec& x, Vec& out) const = 0;

  /// d2J/dtheta2, needed only by gradient-TD variants whose test function is
  /// the parameter gradient. Zero for families linear in theta.
  virtual void param_hessian(const Vec& theta, double t, const Vec& x, Mat& out) const;

  /// dJ/dx for scalar-state families that support it (option Delta).
  virtual double state_derivative(const Vec& theta, double t, const Vec& x) const;

  virtual bool terminal_pinned() const { return false; }
  /// h(x) that a terminal-pinned family matches at t = T.
  virtual double terminal_payoff(const Vec& x) const;

  Vec params;

  double value(double t, const Vec& x) const { return value(params, t, x); }
  Vec gradient_at(const Vec& theta, double t, const Vec& x) const {
    Vec g(param_count());
    gradient(theta, t, x, g);
    return g;
  }
};

/// J = [theta (1 - t) + 1] x, L = 1. Terminal payoff x.
class AffineTimeScaledModel final : public ValueModel {
 public:
  AffineTimeScaledModel();
  std::string family() const override { return "affine_time_scaled"; }
  Index param_count() const override { return 1; }
  double value(const Vec& theta, double t, const Vec& x) const override;
  void gradient(const Vec& theta, double t, const Vec& x, Vec& out) const override;
  void param_hessian(const Vec& theta, double t, const Vec& x, Mat& out) const override;
  double state_derivative(const Vec& theta, double t, const Vec& x) const override;
  bool terminal_pinned() const override { return true; }
  double terminal_payoff(const Vec& x) const override { return x(0); }
};

/// J = [theta0 (1 - t) + 1] x^2 + theta1 (1 - t) x + theta2 (1 - t), L = 3.
/// Terminal payoff x^2.
class QuadTripleModel final : public ValueModel {
 public:
  QuadTripleModel();
  std::string family() const override { return "quad_triple"; }
  Index param_count() const override { return 3; }
  double value(const Vec& theta, double t, const Vec& x) const override;
  void gradient(const Vec& theta, double t, const Vec& x, Vec& out) const override;
  void param_hessian(const Vec& theta, double t, const Vec& x, Mat& out) const override;
  bool terminal_pinned() const override { return true; }
  double terminal_payoff(const Vec& x) const override { return x(0) * x(0); }
};

/// J = theta x^3, L = 1. Not terminal-pinned.
class CubicModel final : public ValueModel {
 public:
  CubicModel();
  std::string family() const override { return "cubic"; }
  Index param_count() const override { return 1; }
  double value(const Vec& theta, double t, const Vec& x) const override;
  void gradient(const Vec& theta, double t, const Vec& x, Vec& out) const override;
  void param_hessian(const Vec& theta, double t, const Vec& x, Mat& out) const override;
};

/// J = x + (1 - t) exp(theta x - theta^2 t / 2 + theta), L = 1.
class ExpPinnedModel final : public ValueModel {
 public:
  ExpPinnedModel();
  std::string family() const override { return "exp_pinned"; }
  Index param_count() const override { return 1; }
  double value(const Vec& theta, double t, const Vec& x) const override;
  void gradient(const Vec& theta, double t, const Vec& x, Vec& out) const override;
  void param_hessian(const Vec& theta, double t, const Vec& x, Mat& out) const override;
  bool terminal_pinned() const override { return true; }
  double terminal_payoff(const Vec& x) const override { return x(0); }
};

/// J = x + (1 - t) exp(theta x - theta^2 t / 2) [(theta + 1)^2 + 1], L = 1.
class ExpUnpinnedModel final : public ValueModel {
 public:
  ExpUnpinnedModel();
  std::string family() const override { return "exp_unpinned"; }
  Index param_count() const override { return 1; }
  double value(const Vec& theta, double t, const Vec& x) const override;
  void gradient(const Vec& theta, double t, const Vec& x, Vec& out) const override;
  void param_hessian(const Vec& theta, double t, const Vec& x, Mat& out) const override;
  bool terminal_pinned() const override { return true; }
  double terminal_payoff(const Vec& x) const override { return x(0); }
};

using BasisFn = std::function<double(double, const Vec&)>;

/// J = offset(t, x) + sum_j theta_j phi_j(t, x).
class LinearBasisModel final : public ValueModel {
 public:
  LinearBasisModel(std::vector<BasisFn> basis, BasisFn offset = nullptr);
  std::string family() const override { return "linear_basis"; }
  Index param_count() const override { return static_cast<Index>(basis_.size()); }
  double value(const Vec& theta, double t, const Vec& x) const override;
  void gradient(const Vec& theta, double t, const Vec& x, Vec& out) const override;
  void param_hessian(const Vec& theta, double t, const Vec& x, Mat& out) const override;

  Vec basis_values(double t, const Vec& x) const;
  double offset_value(double t, const Vec& x) const;
  bool has_offset() const { return static_cast<bool>(offset_); }

 private:
  std::vector<BasisFn> basis_;
  BasisFn offset_;
};

/// J = theta0 x^2 / 2 + theta1 x + theta2, time-independent, L = 3.
class LqQuadraticModel final : public ValueModel {
 public:
  LqQuadraticModel();
  std::string family() const override { return "lq_quadratic"; }
  Index param_count() const override { return 3; }
  double value(const Vec& theta, double t, const Vec& x) const override;
  void gradient(const Vec& theta, double t, const Vec& x, Vec& out) const override;
  void param_hessian(const Vec& theta, double t, const Vec& x, Mat& out) const override;
  double state_derivative(const Vec& theta, double t, const Vec& x) const override;
  Vec basis_values(const Vec& x) const;
};

/// Per-grid-slice family J_i(x) = theta_i x on a fixed K-step grid, with
/// theta_K pinned to 1 by the terminal condition. L = K.
class SectionalModel final : public ValueModel {
 public:
  SectionalModel(Index steps, double t0, double T);
  std::string family() const override { return "sectional"; }
  Index param_count() const override { return K_; }
  double value(const Vec& theta, double t, const Vec& x) const override;
  void gradient(const Vec& theta, double t, const Vec& x, Vec& out) const override;
  bool terminal_pinned() const override { return true; }
  double terminal_payoff(const Vec& x) const override { return x(0); }

  Index slice_index(double t) const;
  Index steps() const { return K_; }

 private:
  Index K_;
  double t0_, T_, dt_;
};

/// One grid step of an episode, decoupled from Trajectory storage so that
/// long single-trajectory runs can stream without materializing the path.
struct StepView {
  double t0 = 0.0;
  double t1 = 0.0;
  double dt = 0.0;
  const Vec* x0 = nullptr;
  const Vec* x1 = nullptr;
  double reward0 = 0.0;
};

StepView step_view(const Trajectory& traj, Index i);

/// Increment of the parameterized reward-adjusted process over one grid step,
/// together with its theta-gradient.
struct MIncrement {
  double dm = 0.0;
  Vec grad_dm;
};

/// Undiscounted: dm = J(t_{i+1}, X_{i+1}) - J(t_i, X_i) + r_i dt.
/// Discounted:   dm as above - rho J(t_i, X_i) dt (discount absorbed).
MIncrement m_increment(const ValueModel& model, const Vec& theta, const StepView& step,
                       double rho);

MIncrement m_increment(const ValueModel& model, const Vec& theta,
                       const Trajectory& traj, Index i, double rho);

inline MIncrement m_increment(const ValueModel& model, const Trajectory& traj,
                              Index i, double rho) {
  return m_increment(model, model.params, traj, i, rho);
}

/// dm alone, skipping the gradient work.
double m_increment_value(const ValueModel& model, const Vec& theta, const StepView& step,
                         double rho);

double m_increment_value(const ValueModel& model, const Vec& theta,
                         const Trajectory& traj, Index i, double rho);

struct GradCheckReport {
  double max_rel_error = 0.0;
  double worst_t = 0.0;
  Vec worst_x;
  bool pass = false;
};

/// Central finite differences vs the analytic gradient at randomized
/// (t, x, theta) probes. Pass iff max relative deviation <= 1e-4.
GradCheckReport grad_check(const ValueModel& model, int probes, std::uint64_t seed);

/// Config-facing factory for the closed-form families.
std::unique_ptr<ValueModel> make_value_model(const std::string& family_id);

}  // namespace ctpe
