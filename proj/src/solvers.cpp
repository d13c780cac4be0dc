#include "ctpe/solvers.hpp"

#include <cmath>
#include <random>

namespace ctpe {

double LearningSchedule::alpha(Index episode) const {
  if (episode < 1) throw std::invalid_argument("schedule: episode index is 1-based");
  if (decay_exponent == 0.0) return alpha0;
  return alpha0 * std::pow(static_cast<double>(episode), -decay_exponent);
}

double LearningSchedule::alpha_u(Index episode) const {
  const double base = alpha_u0 ? *alpha_u0 : 10.0 * alpha0;
  if (decay_exponent == 0.0) return base;
  return base * std::pow(static_cast<double>(episode), -decay_exponent);
}

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::ResidualGradient: return "residual_gradient";
    case Algorithm::MartingaleSgd: return "ml";
    case Algorithm::Ctd: return "ctd";
    case Algorithm::Cgtd: return "cgtd";
    case Algorithm::SectionalCtd0: return "sectional_ctd0";
  }
  return "?";
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::Converged: return "converged";
    case Verdict::MaxEpisodes: return "max_episodes";
    case Verdict::Diverged: return "diverged";
  }
  return "?";
}

void residual_gradient_episode(ValueModel& model, const Trajectory& traj, double alpha,
                               SolveMode mode) {
  const double dt = traj.grid.dt;
  if (mode == SolveMode::Offline) {
    Vec update = Vec::Zero(model.param_count());
    for (Index i = 0; i < traj.grid.K; ++i) {
      const MIncrement inc = m_increment(model, model.params, traj, i, 0.0);
      update += (inc.dm / dt) * inc.grad_dm;
    }
    model.params -= alpha * update;
  } else {
    for (Index i = 0; i < traj.grid.K; ++i) {
      const MIncrement inc = m_increment(model, model.params, traj, i, 0.0);
      model.params -= alpha * (inc.dm / dt) * inc.grad_dm;
    }
  }
}

void ml_sgd_episode(ValueModel& model, const Trajectory& traj, double alpha, double rho) {
  const double dt = traj.grid.dt;
  const Index K = traj.grid.K;
  Vec update = Vec::Zero(model.param_count());
  if (rho == 0.0) {
    double togo = traj.terminal_value;
    for (Index i = K - 1; i >= 0; --i) {
      togo += traj.rewards[static_cast<std::size_t>(i)] * dt;
      const double t = traj.grid.t(i);
      const Vec& x = traj.states[static_cast<std::size_t>(i)];
      const double diff = togo - model.value(model.params, t, x);
      update += diff * dt * model.gradient_at(model.params, t, x);
    }
  } else {
    double togo = std::exp(-rho * traj.grid.T) * traj.terminal_value;
    for (Index i = K - 1; i >= 0; --i) {
      const double t = traj.grid.t(i);
      const double w = std::exp(-rho * t);
      togo += w * traj.rewards[static_cast<std::size_t>(i)] * dt;
      const Vec& x = traj.states[static_cast<std::size_t>(i)];
      const double diff = togo - w * model.value(model.params, t, x);
      update += (diff * w * dt) * model.gradient_at(model.params, t, x);
    }
  }
  model.params += alpha * update;
}

void ctd_lambda_step(ValueModel& model, const StepView& step, const TestFunction& test,
                     TestFunction::State& state, double alpha, double rho) {
  const Vec xi = test.emit_at(state, model, model.params, step.t0, *step.x0, step.dt);
  const double dm = m_increment_value(model, model.params, step, rho);
  model.params += alpha * dm * xi;
}

void ctd_lambda_step(ValueModel& model, const Trajectory& traj, Index i,
                     const TestFunction& test, TestFunction::State& state, double alpha,
                     double rho) {
  ctd_lambda_step(model, step_view(traj, i), test, state, alpha, rho);
}

void ctd_lambda_episode(ValueModel& model, const Trajectory& traj,
                        const TestFunction& test, double alpha, double rho) {
  auto state = test.make_state(model);
  Vec update = Vec::Zero(model.param_count());
  for (Index i = 0; i < traj.grid.K; ++i) {
    const Vec xi = test.emit(state, model, model.params, traj, i);
    update += m_increment_value(model, model.params, traj, i, rho) * xi;
  }
  model.params += alpha * update;
}

namespace {

void cgtd_step_impl(ValueModel& model, const StepView& step, double t_next,
                    const Vec& x_next, CgtdVariant variant, const TestFunction& test,
                    TestFunction::State& state, Vec& u, double alpha_theta,
                    double alpha_u, double rho) {
  const Vec& theta = model.params;
  const Vec xi = test.emit_at(state, model, theta, step.t0, *step.x0, step.dt);
  if (u.size() != xi.size())
    throw std::invalid_argument("cgtd_step: u dimension mismatch");
  const MIncrement inc = m_increment(model, theta, step, rho);

  // Fast timescale.
  if (variant == CgtdVariant::Gtd0)
    u += alpha_u * (inc.dm * xi - step.dt * u);
  else
    u += alpha_u * (inc.dm * xi - step.dt * xi.dot(u) * xi);

  // d(xi)/d(theta), nonzero only for parameter-gradient tests of families
  // that are nonlinear in theta.
  Mat jac;
  switch (test.kind()) {
    case TestFunction::Kind::GradTheta:
      model.param_hessian(theta, step.t0, *step.x0, jac);
      break;
    case TestFunction::Kind::Constant:
    case TestFunction::Kind::TailoredReciprocal:
      jac = Mat::Zero(xi.size(), model.param_count());
      break;
    default:
      throw std::invalid_argument("cgtd_step: trace and composite tests unsupported");
  }

  Vec direction = inc.grad_dm * xi.dot(u);
  direction += jac.transpose() * (inc.dm * u);
  switch (variant) {
    case CgtdVariant::Gtd0:
      break;
    case CgtdVariant::Gtd2:
      direction -= (u.dot(xi) * step.dt) * (jac.transpose() * u);
      break;
    case CgtdVariant::Tdc: {
      if (xi.size() != model.param_count())
        throw std::invalid_argument("cgtd tdc: test must be the parameter gradient");
      Vec xi_next = model.gradient_at(theta, t_next, x_next);
      direction = inc.dm * xi + (xi.dot(u) * step.dt) * xi_next +
                  jac.transpose() * (inc.dm * u) -
                  (u.dot(xi) * step.dt) * (jac.transpose() * u);
      break;
    }
  }
  model.params -= alpha_theta * direction;
}

}  // namespace

void cgtd_step(ValueModel& model, const StepView& step, CgtdVariant variant,
               const TestFunction& test, TestFunction::State& state, Vec& u,
               double alpha_theta, double alpha_u, double rho) {
  cgtd_step_impl(model, step, step.t1, *step.x1, variant, test, state, u, alpha_theta,
                 alpha_u, rho);
}

void cgtd_step(ValueModel& model, const Trajectory& traj, Index i, CgtdVariant variant,
               const TestFunction& test, TestFunction::State& state, Vec& u,
               double alpha_theta, double alpha_u, double rho) {
  cgtd_step(model, step_view(traj, i), variant, test, state, u, alpha_theta, alpha_u, rho);
}

void sectional_ctd0_step(SectionalModel& model, const Trajectory& traj, Index i,
                         double alpha) {
  if (i < 1 || i > traj.grid.K)
    throw std::out_of_range("sectional_ctd0_step: arrival index in [1, K]");
  const Index K = model.steps();
  Vec& theta = model.params;
  const double x_prev = traj.states[static_cast<std::size_t>(i - 1)](0);
  const double x_now = traj.states[static_cast<std::size_t>(i)](0);
  const double j_now = (i == K) ? x_now : theta(i) * x_now;
  const double delta = j_now - theta(i - 1) * x_prev;
  // Gradient of every slice's J_k at the last observed state.
  theta(i - 1) += alpha * x_prev * delta;
  for (Index k = i; k < K; ++k) theta(k) += alpha * x_prev * delta;
}

ClstdAccumulator::ClstdAccumulator(Index dim)
    : a_(Mat::Zero(dim, dim)), b_(Vec::Zero(dim)) {}

void ClstdAccumulator::add_step(const Vec& phi0, const Vec& phi1, double offset0,
                                double offset1, double reward0, double dt, double rho) {
  Vec dphi = phi1 - phi0;
  double scalar = (offset1 - offset0) + reward0 * dt;
  if (rho != 0.0) {
    dphi -= (rho * dt) * phi0;
    scalar -= rho * offset0 * dt;
  }
  a_.noalias() += phi0 * dphi.transpose();
  b_.noalias() += phi0 * scalar;
  ++n_;
}

Vec ClstdAccumulator::solve() const {
  if (n_ == 0) throw std::logic_error("clstd: no data");
  Eigen::FullPivLU<Mat> lu(a_);
  const Mat& ulu = lu.matrixLU();
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (Index i = 0; i < ulu.rows(); ++i) {
    const double p = std::abs(ulu(i, i));
    lo = std::min(lo, p);
    hi = std::max(hi, p);
  }
  const double rcond = hi > 0.0 ? lo / hi : 0.0;
  if (!lu.isInvertible() || rcond < 1e-13)
    throw SingularMatrixError("clstd: singular empirical system", rcond);
  return lu.solve(-b_);
}

Vec clstd_solve(const ValueModel& model, const EpisodeBatch& batch, double rho) {
  validate_batch(batch);
  const Index L = model.param_count();
  const Vec zero = Vec::Zero(L);
  ClstdAccumulator acc(L);
  for (Index e = 0; e < batch.size(); ++e) {
    const Trajectory& traj = batch[e];
    const double dt = traj.grid.dt;
    Vec phi0 = model.gradient_at(zero, traj.grid.t(0), traj.states[0]);
    double off0 = model.value(zero, traj.grid.t(0), traj.states[0]);
    for (Index i = 0; i < traj.grid.K; ++i) {
      const double t1 = traj.grid.t(i + 1);
      const Vec& x1 = traj.states[static_cast<std::size_t>(i + 1)];
      Vec phi1 = model.gradient_at(zero, t1, x1);
      const double off1 = model.value(zero, t1, x1);
      acc.add_step(phi0, phi1, off0, off1, traj.rewards[static_cast<std::size_t>(i)], dt,
                   rho);
      phi0 = std::move(phi1);
      off0 = off1;
    }
  }
  return acc.solve();
}

namespace {

bool guard_ok(const Vec& theta, double bound) {
  return theta.allFinite() && theta.cwiseAbs().maxCoeff() <= bound;
}

Verdict window_verdict(const Mat& iterates, double tol) {
  if (tol <= 0.0 || iterates.rows() < 5) return Verdict::MaxEpisodes;
  const Index n = iterates.rows();
  const Index w = std::max<Index>(2, n / 10);
  const Mat tail = iterates.bottomRows(w);
  const Eigen::RowVectorXd mean = tail.colwise().mean();
  const Eigen::RowVectorXd sd =
      ((tail.rowwise() - mean).colwise().squaredNorm() / static_cast<double>(w - 1))
          .cwiseSqrt();
  return sd.maxCoeff() < tol ? Verdict::Converged : Verdict::MaxEpisodes;
}

}  // namespace

SolverRun run(ValueModel& model, const DiffusionModel& diffusion, const TimeGrid& grid,
              const SolverConfig& config) {
  if (config.algorithm == Algorithm::MartingaleSgd && config.mode == SolveMode::Online)
    throw std::invalid_argument("ml: offline only (needs the full trajectory)");
  if (config.algorithm == Algorithm::SectionalCtd0) {
    auto* sectional = dynamic_cast<SectionalModel*>(&model);
    if (!sectional || sectional->steps() != grid.K)
      throw std::invalid_argument("sectional_ctd0: needs a sectional family on this grid");
  }

  SolverRun out;
  out.algorithm = config.algorithm;
  out.mode = config.mode;
  out.schedule = config.schedule;

  std::vector<Vec> recorded;
  auto record = [&](Index episode) {
    recorded.push_back(model.params);
    out.recorded_episodes.push_back(episode);
  };
  record(0);

  Vec u = Vec::Zero(config.test.dim(model));
  bool diverged = false;

  Index ep = 1;
  for (; ep <= config.episodes; ++ep) {
    const double alpha = config.schedule.alpha(ep);
    try {
      const Trajectory traj =
          sample_trajectory(diffusion, grid, config.seed + static_cast<std::uint64_t>(ep) - 1);
      switch (config.algorithm) {
        case Algorithm::ResidualGradient:
          residual_gradient_episode(model, traj, alpha, config.mode);
          break;
        case Algorithm::MartingaleSgd:
          ml_sgd_episode(model, traj, alpha, config.rho);
          break;
        case Algorithm::Ctd:
          if (config.mode == SolveMode::Offline) {
            ctd_lambda_episode(model, traj, config.test, alpha, config.rho);
          } else {
            auto state = config.test.make_state(model);
            for (Index i = 0; i < grid.K; ++i)
              ctd_lambda_step(model, traj, i, config.test, state, alpha, config.rho);
          }
          break;
        case Algorithm::Cgtd: {
          auto state = config.test.make_state(model);
          const double au = config.schedule.alpha_u(ep);
          for (Index i = 0; i < grid.K; ++i)
            cgtd_step(model, traj, i, config.variant, config.test, state, u, alpha, au,
                      config.rho);
          break;
        }
        case Algorithm::SectionalCtd0: {
          auto& sectional = static_cast<SectionalModel&>(model);
          for (Index i = 1; i <= grid.K; ++i)
            sectional_ctd0_step(sectional, traj, i, alpha);
          break;
        }
      }
    } catch (const OverflowError&) {
      diverged = true;
    } catch (const NonFiniteError&) {
      diverged = true;
    }
    if (!diverged && !guard_ok(model.params, config.theta_bound)) diverged = true;
    if (diverged) {
      record(ep);
      break;
    }
    if (ep % config.record_every == 0 || ep == config.episodes) record(ep);
  }
  out.episodes_run = std::min(ep, config.episodes);

  out.iterates.resize(static_cast<Index>(recorded.size()), model.param_count());
  for (std::size_t r = 0; r < recorded.size(); ++r)
    out.iterates.row(static_cast<Index>(r)) = recorded[r];
  if (config.algorithm == Algorithm::Cgtd) out.aux_state = u;
  out.verdict =
      diverged ? Verdict::Diverged : window_verdict(out.iterates, config.convergence_tol);
  return out;
}

namespace {

/// Streams x_{i+1} given x_i for the single-trajectory mode.
class StepSampler {
 public:
  StepSampler(const DiffusionModel& model, double dt, std::uint64_t seed)
      : model_(model), dt_(dt), sqrt_dt_(std::sqrt(dt)), rng_(seed) {}

  Vec next(double t, const Vec& x) {
    switch (model_.kind) {
      case SamplerKind::ExactBrownian:
        return Vec::Constant(1, x(0) + model_.coef.mu * dt_ +
                                    model_.coef.sigma * sqrt_dt_ * gauss_(rng_));
      case SamplerKind::ExactGbm: {
        const double s = model_.coef.sigma;
        const double m = (model_.coef.r - model_.coef.q - 0.5 * s * s) * dt_;
        return Vec::Constant(1, x(0) * std::exp(m + s * sqrt_dt_ * gauss_(rng_)));
      }
      case SamplerKind::ExactOu: {
        const double a = model_.coef.a;
        const double decay = std::exp(-a * dt_);
        const double sd = model_.coef.sigma * std::sqrt((1.0 - decay * decay) / (2.0 * a));
        return Vec::Constant(1, model_.coef.mean + (x(0) - model_.coef.mean) * decay +
                                    sd * gauss_(rng_));
      }
      case SamplerKind::Euler: {
        Vec dw(model_.noise_dim);
        for (Index j = 0; j < model_.noise_dim; ++j) dw(j) = sqrt_dt_ * gauss_(rng_);
        Vec next = x + model_.drift(t, x) * dt_;
        next.noalias() += model_.diffusion(t, x) * dw;
        if (!next.allFinite()) throw NonFiniteError("single trajectory: non-finite state");
        return next;
      }
    }
    throw std::logic_error("unreachable");
  }

 private:
  const DiffusionModel& model_;
  double dt_, sqrt_dt_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> gauss_;
};

}  // namespace

SolverRun run_single_trajectory(ValueModel& model, const DiffusionModel& diffusion,
                                const SingleTrajectoryConfig& config) {
  if (config.algorithm != Algorithm::Ctd && config.algorithm != Algorithm::Cgtd)
    throw std::invalid_argument("single trajectory mode: ctd or cgtd only");

  SolverRun out;
  out.algorithm = config.algorithm;
  out.mode = SolveMode::Online;
  out.schedule = config.schedule;

  const Index total_steps = static_cast<Index>(std::llround(config.t_max / config.dt));
  StepSampler sampler(diffusion, config.dt, config.seed);
  auto state = config.test.make_state(model);
  Vec u = Vec::Zero(config.test.dim(model));

  std::vector<Vec> recorded;
  recorded.push_back(model.params);
  out.recorded_episodes.push_back(0);

  Vec x = diffusion.initial_state;
  bool diverged = false;
  Index i = 0;
  for (; i < total_steps; ++i) {
    const double t = static_cast<double>(i) * config.dt;
    // Rate index advances once per unit of process time.
    const Index k = static_cast<Index>(t) + 1;
    try {
      Vec x_next = sampler.next(t, x);
      StepView step;
      step.t0 = t;
      step.t1 = t + config.dt;
      step.dt = config.dt;
      step.x0 = &x;
      step.x1 = &x_next;
      step.reward0 = diffusion.running_reward(t, x);
      if (config.algorithm == Algorithm::Ctd)
        ctd_lambda_step(model, step, config.test, state, config.schedule.alpha(k),
                        config.rho);
      else
        cgtd_step(model, step, config.variant, config.test, state, u,
                  config.schedule.alpha(k), config.schedule.alpha_u(k), config.rho);
      x = std::move(x_next);
    } catch (const OverflowError&) {
      diverged = true;
    } catch (const NonFiniteError&) {
      diverged = true;
    }
    if (!diverged && !guard_ok(model.params, config.theta_bound)) diverged = true;
    if (diverged) {
      recorded.push_back(model.params);
      out.recorded_episodes.push_back(i + 1);
      break;
    }
    if ((i + 1) % config.record_every_steps == 0 || i + 1 == total_steps) {
      recorded.push_back(model.params);
      out.recorded_episodes.push_back(i + 1);
    }
  }
  out.episodes_run = i;
  out.iterates.resize(static_cast<Index>(recorded.size()), model.param_count());
  for (std::size_t r = 0; r < recorded.size(); ++r)
    out.iterates.row(static_cast<Index>(r)) = recorded[r];
  if (config.algorithm == Algorithm::Cgtd) out.aux_state = u;
  out.verdict = diverged ? Verdict::Diverged : Verdict::MaxEpisodes;
  return out;
}

SolverRun clstd_single_trajectory(const ValueModel& model, const DiffusionModel& diffusion,
                                  const SingleTrajectoryConfig& config) {
  SolverRun out;
  out.algorithm = Algorithm::Ctd;
  out.mode = SolveMode::Online;
  out.schedule = config.schedule;

  const Index L = model.param_count();
  const Vec zero = Vec::Zero(L);
  const Index total_steps = static_cast<Index>(std::llround(config.t_max / config.dt));
  StepSampler sampler(diffusion, config.dt, config.seed);
  ClstdAccumulator acc(L);

  std::vector<Vec> recorded;
  recorded.push_back(Vec::Constant(L, std::numeric_limits<double>::quiet_NaN()));
  out.recorded_episodes.push_back(0);

  Vec x = diffusion.initial_state;
  Vec phi0 = model.gradient_at(zero, 0.0, x);
  double off0 = model.value(zero, 0.0, x);
  for (Index i = 0; i < total_steps; ++i) {
    const double t = static_cast<double>(i) * config.dt;
    Vec x_next = sampler.next(t, x);
    Vec phi1 = model.gradient_at(zero, t + config.dt, x_next);
    const double off1 = model.value(zero, t + config.dt, x_next);
    acc.add_step(phi0, phi1, off0, off1, diffusion.running_reward(t, x), config.dt,
                 config.rho);
    x = std::move(x_next);
    phi0 = std::move(phi1);
    off0 = off1;
    if ((i + 1) % config.record_every_steps == 0 || i + 1 == total_steps) {
      Vec theta;
      try {
        theta = acc.solve();
      } catch (const SingularMatrixError&) {
        theta = Vec::Constant(L, std::numeric_limits<double>::quiet_NaN());
      }
      recorded.push_back(theta);
      out.recorded_episodes.push_back(i + 1);
    }
  }
  out.episodes_run = total_steps;
  out.iterates.resize(static_cast<Index>(recorded.size()), L);
  for (std::size_t r = 0; r < recorded.size(); ++r)
    out.iterates.row(static_cast<Index>(r)) = recorded[r];
  out.verdict = Verdict::MaxEpisodes;
  return out;
}

}  // namespace ctpe
