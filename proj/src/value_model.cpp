#include "ctpe/value_model.hpp"

#include <cmath>
#include <random>

#include "ctpe/mlp.hpp"

namespace ctpe {

namespace {

constexpr double kExpGuard = 500.0;

double guarded_exp(double exponent, const char* family) {
  if (!(std::abs(exponent) <= kExpGuard))
    throw OverflowError(std::string(family) + ": exponent " +
                        std::to_string(exponent) + " out of range");
  return std::exp(exponent);
}

}  // namespace

void ValueModel::param_hessian(const Vec&, double, const Vec&, Mat&) const {
  throw std::logic_error(family() + ": parameter Hessian not available");
}

double ValueModel::state_derivative(const Vec&, double, const Vec&) const {
  throw std::logic_error(family() + ": state derivative not available");
}

double ValueModel::terminal_payoff(const Vec&) const {
  throw std::logic_error(family() + ": no terminal payoff");
}

// ---------------------------------------------------------------------------

AffineTimeScaledModel::AffineTimeScaledModel() { params = Vec::Zero(1); }

double AffineTimeScaledModel::value(const Vec& theta, double t, const Vec& x) const {
  return (theta(0) * (1.0 - t) + 1.0) * x(0);
}

void AffineTimeScaledModel::gradient(const Vec&, double t, const Vec& x, Vec& out) const {
  out.resize(1);
  out(0) = (1.0 - t) * x(0);
}

void AffineTimeScaledModel::param_hessian(const Vec&, double, const Vec&, Mat& out) const {
  out = Mat::Zero(1, 1);
}

double AffineTimeScaledModel::state_derivative(const Vec& theta, double t, const Vec&) const {
  return theta(0) * (1.0 - t) + 1.0;
}

// ---------------------------------------------------------------------------

QuadTripleModel::QuadTripleModel() { params = Vec::Zero(3); }

double QuadTripleModel::value(const Vec& theta, double t, const Vec& x) const {
  const double s = 1.0 - t;
  return (theta(0) * s + 1.0) * x(0) * x(0) + theta(1) * s * x(0) + theta(2) * s;
}

void QuadTripleModel::gradient(const Vec&, double t, const Vec& x, Vec& out) const {
  const double s = 1.0 - t;
  out.resize(3);
  out(0) = s * x(0) * x(0);
  out(1) = s * x(0);
  out(2) = s;
}

void QuadTripleModel::param_hessian(const Vec&, double, const Vec&, Mat& out) const {
  out = Mat::Zero(3, 3);
}

// ---------------------------------------------------------------------------

CubicModel::CubicModel() { params = Vec::Zero(1); }

double CubicModel::value(const Vec& theta, double, const Vec& x) const {
  return theta(0) * x(0) * x(0) * x(0);
}

void CubicModel::gradient(const Vec&, double, const Vec& x, Vec& out) const {
  out.resize(1);
  out(0) = x(0) * x(0) * x(0);
}

void CubicModel::param_hessian(const Vec&, double, const Vec&, Mat& out) const {
  out = Mat::Zero(1, 1);
}

// ---------------------------------------------------------------------------

ExpPinnedModel::ExpPinnedModel() { params = Vec::Constant(1, -1.0); }

double ExpPinnedModel::value(const Vec& theta, double t, const Vec& x) const {
  const double th = theta(0);
  const double e = guarded_exp(th * x(0) - 0.5 * th * th * t + th, "exp_pinned");
  return x(0) + (1.0 - t) * e;
}

void ExpPinnedModel::gradient(const Vec& theta, double t, const Vec& x, Vec& out) const {
  const double th = theta(0);
  const double e = guarded_exp(th * x(0) - 0.5 * th * th * t + th, "exp_pinned");
  out.resize(1);
  out(0) = (1.0 - t) * e * (x(0) - th * t + 1.0);
}

void ExpPinnedModel::param_hessian(const Vec& theta, double t, const Vec& x, Mat& out) const {
  const double th = theta(0);
  const double e = guarded_exp(th * x(0) - 0.5 * th * th * t + th, "exp_pinned");
  const double d = x(0) - th * t + 1.0;
  out = Mat::Constant(1, 1, (1.0 - t) * e * (d * d - t));
}

// ---------------------------------------------------------------------------

ExpUnpinnedModel::ExpUnpinnedModel() { params = Vec::Constant(1, -1.0); }

double ExpUnpinnedModel::value(const Vec& theta, double t, const Vec& x) const {
  const double th = theta(0);
  const double e = guarded_exp(th * x(0) - 0.5 * th * th * t, "exp_unpinned");
  const double scale = (th + 1.0) * (th + 1.0) + 1.0;
  return x(0) + (1.0 - t) * e * scale;
}

void ExpUnpinnedModel::gradient(const Vec& theta, double t, const Vec& x, Vec& out) const {
  const double th = theta(0);
  const double e = guarded_exp(th * x(0) - 0.5 * th * th * t, "exp_unpinned");
  const double scale = (th + 1.0) * (th + 1.0) + 1.0;
  const double d = x(0) - th * t;
  out.resize(1);
  out(0) = (1.0 - t) * e * (d * scale + 2.0 * (th + 1.0));
}

void ExpUnpinnedModel::param_hessian(const Vec& theta, double t, const Vec& x, Mat& out) const {
  const double th = theta(0);
  const double e = guarded_exp(th * x(0) - 0.5 * th * th * t, "exp_unpinned");
  const double scale = (th + 1.0) * (th + 1.0) + 1.0;
  const double d = x(0) - th * t;
  const double g = d * scale + 2.0 * (th + 1.0);
  const double gp = -t * scale + d * 2.0 * (th + 1.0) + 2.0;
  out = Mat::Constant(1, 1, (1.0 - t) * e * (d * g + gp));
}

// ---------------------------------------------------------------------------

LinearBasisModel::LinearBasisModel(std::vector<BasisFn> basis, BasisFn offset)
    : basis_(std::move(basis)), offset_(std::move(offset)) {
  if (basis_.empty()) throw std::invalid_argument("linear_basis: empty basis");
  params = Vec::Zero(param_count());
}

double LinearBasisModel::value(const Vec& theta, double t, const Vec& x) const {
  double v = offset_ ? offset_(t, x) : 0.0;
  for (Index j = 0; j < param_count(); ++j)
    v += theta(j) * basis_[static_cast<std::size_t>(j)](t, x);
  return v;
}

void LinearBasisModel::gradient(const Vec&, double t, const Vec& x, Vec& out) const {
  out = basis_values(t, x);
}

void LinearBasisModel::param_hessian(const Vec&, double, const Vec&, Mat& out) const {
  out = Mat::Zero(param_count(), param_count());
}

Vec LinearBasisModel::basis_values(double t, const Vec& x) const {
  Vec v(param_count());
  for (Index j = 0; j < param_count(); ++j)
    v(j) = basis_[static_cast<std::size_t>(j)](t, x);
  return v;
}

double LinearBasisModel::offset_value(double t, const Vec& x) const {
  return offset_ ? offset_(t, x) : 0.0;
}

// ---------------------------------------------------------------------------

LqQuadraticModel::LqQuadraticModel() { params = Vec::Zero(3); }

double LqQuadraticModel::value(const Vec& theta, double, const Vec& x) const {
  return 0.5 * theta(0) * x(0) * x(0) + theta(1) * x(0) + theta(2);
}

void LqQuadraticModel::gradient(const Vec&, double, const Vec& x, Vec& out) const {
  out.resize(3);
  out(0) = 0.5 * x(0) * x(0);
  out(1) = x(0);
  out(2) = 1.0;
}

void LqQuadraticModel::param_hessian(const Vec&, double, const Vec&, Mat& out) const {
  out = Mat::Zero(3, 3);
}

double LqQuadraticModel::state_derivative(const Vec& theta, double, const Vec& x) const {
  return theta(0) * x(0) + theta(1);
}

Vec LqQuadraticModel::basis_values(const Vec& x) const {
  Vec v(3);
  v << 0.5 * x(0) * x(0), x(0), 1.0;
  return v;
}

// ---------------------------------------------------------------------------

SectionalModel::SectionalModel(Index steps, double t0, double T)
    : K_(steps), t0_(t0), T_(T), dt_((T - t0) / static_cast<double>(steps)) {
  if (steps < 1) throw std::invalid_argument("sectional: need at least one slice");
  params = Vec::Ones(K_);
}

Index SectionalModel::slice_index(double t) const {
  const Index i = static_cast<Index>(std::llround((t - t0_) / dt_));
  if (i < 0 || i > K_)
    throw std::out_of_range("sectional: time off the grid");
  return i;
}

double SectionalModel::value(const Vec& theta, double t, const Vec& x) const {
  const Index i = slice_index(t);
  const double th = (i == K_) ? 1.0 : theta(i);
  return th * x(0);
}

void SectionalModel::gradient(const Vec&, double t, const Vec& x, Vec& out) const {
  const Index i = slice_index(t);
  out = Vec::Zero(K_);
  if (i < K_) out(i) = x(0);
}

// ---------------------------------------------------------------------------

StepView step_view(const Trajectory& traj, Index i) {
  if (i < 0 || i >= traj.grid.K)
    throw std::out_of_range("step_view: index out of range");
  StepView s;
  s.t0 = traj.grid.t(i);
  s.t1 = traj.grid.t(i + 1);
  s.dt = traj.grid.dt;
  s.x0 = &traj.states[static_cast<std::size_t>(i)];
  s.x1 = &traj.states[static_cast<std::size_t>(i + 1)];
  s.reward0 = traj.rewards[static_cast<std::size_t>(i)];
  return s;
}

MIncrement m_increment(const ValueModel& model, const Vec& theta, const StepView& step,
                       double rho) {
  MIncrement inc;
  const double j0 = model.value(theta, step.t0, *step.x0);
  const double j1 = model.value(theta, step.t1, *step.x1);
  inc.dm = j1 - j0 + step.reward0 * step.dt;
  Vec g0 = model.gradient_at(theta, step.t0, *step.x0);
  inc.grad_dm = model.gradient_at(theta, step.t1, *step.x1) - g0;
  if (rho != 0.0) {
    inc.dm -= rho * j0 * step.dt;
    inc.grad_dm -= (rho * step.dt) * g0;
  }
  return inc;
}

MIncrement m_increment(const ValueModel& model, const Vec& theta,
                       const Trajectory& traj, Index i, double rho) {
  return m_increment(model, theta, step_view(traj, i), rho);
}

double m_increment_value(const ValueModel& model, const Vec& theta, const StepView& step,
                         double rho) {
  const double j0 = model.value(theta, step.t0, *step.x0);
  const double j1 = model.value(theta, step.t1, *step.x1);
  double dm = j1 - j0 + step.reward0 * step.dt;
  if (rho != 0.0) dm -= rho * j0 * step.dt;
  return dm;
}

double m_increment_value(const ValueModel& model, const Vec& theta,
                         const Trajectory& traj, Index i, double rho) {
  return m_increment_value(model, theta, step_view(traj, i), rho);
}

GradCheckReport grad_check(const ValueModel& model, int probes, std::uint64_t seed) {
  if (probes < 1) throw std::invalid_argument("grad_check: probes >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ut(0.0, 0.9);
  std::uniform_real_distribution<double> ux(-1.5, 1.5);
  std::uniform_real_distribution<double> unudge(-0.3, 0.3);

  const double h = 1e-5;
  GradCheckReport report;
  const Index L = model.param_count();
  const bool sectional = model.family() == "sectional";

  for (int p = 0; p < probes; ++p) {
    double t = ut(rng);
    if (sectional) {
      const auto& sm = static_cast<const SectionalModel&>(model);
      t = static_cast<double>(sm.slice_index(t)) * (1.0 / static_cast<double>(sm.steps()));
    }
    Vec x(1);
    x(0) = ux(rng);
    Vec theta = model.params;
    for (Index j = 0; j < L; ++j) theta(j) += unudge(rng);

    Vec analytic = model.gradient_at(theta, t, x);
    Vec fd(L);
    Vec tp = theta;
    for (Index j = 0; j < L; ++j) {
      const double base = theta(j);
      tp(j) = base + h;
      const double up = model.value(tp, t, x);
      tp(j) = base - h;
      const double dn = model.value(tp, t, x);
      tp(j) = base;
      fd(j) = (up - dn) / (2.0 * h);
    }
    const double scale = std::max(1.0, analytic.cwiseAbs().maxCoeff());
    const double err = (fd - analytic).cwiseAbs().maxCoeff() / scale;
    if (err > report.max_rel_error) {
      report.max_rel_error = err;
      report.worst_t = t;
      report.worst_x = x;
    }
  }
  report.pass = report.max_rel_error <= 1e-4;
  return report;
}

std::unique_ptr<ValueModel> make_value_model(const std::string& family_id) {
  if (family_id == "affine_time_scaled") return std::make_unique<AffineTimeScaledModel>();
  if (family_id == "quad_triple") return std::make_unique<QuadTripleModel>();
  if (family_id == "cubic") return std::make_unique<CubicModel>();
  if (family_id == "exp_pinned") return std::make_unique<ExpPinnedModel>();
  if (family_id == "exp_unpinned") return std::make_unique<ExpUnpinnedModel>();
  if (family_id == "lq_quadratic") return std::make_unique<LqQuadraticModel>();
  throw std::invalid_argument("unknown or parameterized family: " + family_id);
}

}  // namespace ctpe
