#include "ctpe/diffusion.hpp"

#include <cmath>
#include <fstream>
#include <random>

namespace ctpe {

TimeGrid::TimeGrid(double t0_, double T_, Index steps) : t0(t0_), T(T_), K(steps) {
  if (!(T > t0)) throw std::invalid_argument("TimeGrid: need T > t0");
  if (K < 1) throw std::invalid_argument("TimeGrid: need at least one step");
  dt = (T - t0) / static_cast<double>(K);
  points.resize(static_cast<std::size_t>(K) + 1);
  for (Index i = 0; i <= K; ++i)
    points[static_cast<std::size_t>(i)] = t0 + static_cast<double>(i) * dt;
  points.back() = T;
  for (Index i = 0; i < K; ++i) {
    const double h = t(i + 1) - t(i);
    if (std::abs(h - dt) > 1e-12 * std::max(1.0, std::abs(dt)))
      throw std::invalid_argument("TimeGrid: non-uniform spacing");
  }
}

std::string to_string(SamplerKind kind) {
  switch (kind) {
    case SamplerKind::ExactBrownian: return "exact-brownian";
    case SamplerKind::ExactGbm: return "exact-gbm";
    case SamplerKind::ExactOu: return "exact-ou";
    case SamplerKind::Euler: return "euler";
  }
  return "?";
}

namespace {

Vec scalar_state(double x) {
  Vec v(1);
  v(0) = x;
  return v;
}

void validate_common(const DiffusionModel& m) {
  if (m.horizon && !(*m.horizon > 0.0))
    throw std::invalid_argument("DiffusionModel: horizon must be positive");
  if (m.discount_rate < 0.0)
    throw std::invalid_argument("DiffusionModel: discount_rate must be >= 0");
  if (!m.running_reward || !m.terminal_reward)
    throw std::invalid_argument("DiffusionModel: reward functions required");
}

}  // namespace

DiffusionModel DiffusionModel::brownian(double mu, double sigma, double x0,
                                        std::optional<double> horizon, RewardFn reward,
                                        TerminalFn terminal, double rho) {
  DiffusionModel m;
  m.kind = SamplerKind::ExactBrownian;
  m.coef.mu = mu;
  m.coef.sigma = sigma;
  m.drift = [mu](double, const Vec&) { return scalar_state(mu); };
  m.diffusion = [sigma](double, const Vec&) { return Mat::Constant(1, 1, sigma); };
  m.running_reward = std::move(reward);
  m.terminal_reward = std::move(terminal);
  m.discount_rate = rho;
  m.horizon = horizon;
  m.initial_state = scalar_state(x0);
  validate_common(m);
  return m;
}

DiffusionModel DiffusionModel::gbm(double r, double q, double sigma, double x0,
                                   std::optional<double> horizon, RewardFn reward,
                                   TerminalFn terminal, double rho) {
  if (!(sigma > 0.0)) throw std::invalid_argument("gbm: sigma must be positive");
  DiffusionModel m;
  m.kind = SamplerKind::ExactGbm;
  m.coef.r = r;
  m.coef.q = q;
  m.coef.sigma = sigma;
  m.drift = [r, q](double, const Vec& x) { return Vec((r - q) * x); };
  m.diffusion = [sigma](double, const Vec& x) { return Mat::Constant(1, 1, sigma * x(0)); };
  m.running_reward = std::move(reward);
  m.terminal_reward = std::move(terminal);
  m.discount_rate = rho;
  m.horizon = horizon;
  m.initial_state = scalar_state(x0);
  validate_common(m);
  return m;
}

DiffusionModel DiffusionModel::ou(double a, double mean, double sigma, double x0,
                                  std::optional<double> horizon, RewardFn reward,
                                  TerminalFn terminal, double rho) {
  if (!(a > 0.0)) throw std::invalid_argument("ou: mean-reversion speed must be positive");
  DiffusionModel m;
  m.kind = SamplerKind::ExactOu;
  m.coef.a = a;
  m.coef.mean = mean;
  m.coef.sigma = sigma;
  m.drift = [a, mean](double, const Vec& x) { return Vec(a * (Vec::Constant(1, mean) - x)); };
  m.diffusion = [sigma](double, const Vec&) { return Mat::Constant(1, 1, sigma); };
  m.running_reward = std::move(reward);
  m.terminal_reward = std::move(terminal);
  m.discount_rate = rho;
  m.horizon = horizon;
  m.initial_state = scalar_state(x0);
  validate_common(m);
  return m;
}

DiffusionModel DiffusionModel::euler(DriftFn drift, DiffusionFn diffusion, Vec x0,
                                     Index noise_dim, std::optional<double> horizon,
                                     RewardFn reward, TerminalFn terminal, double rho) {
  if (!drift || !diffusion) throw std::invalid_argument("euler: coefficients required");
  DiffusionModel m;
  m.kind = SamplerKind::Euler;
  m.drift = std::move(drift);
  m.diffusion = std::move(diffusion);
  m.running_reward = std::move(reward);
  m.terminal_reward = std::move(terminal);
  m.discount_rate = rho;
  m.horizon = horizon;
  m.initial_state = std::move(x0);
  m.state_dim = m.initial_state.size();
  m.noise_dim = noise_dim;
  m.euler_fallback_warning = true;
  validate_common(m);
  return m;
}

Trajectory sample_trajectory(const DiffusionModel& model, const TimeGrid& grid,
                             std::uint64_t seed) {
  if (model.horizon) {
    if (grid.t0 < -1e-12 || grid.T > *model.horizon + 1e-12)
      throw std::invalid_argument("sample_trajectory: grid outside [0, horizon]");
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Trajectory traj;
  traj.grid = grid;
  traj.seed = seed;
  traj.states.reserve(static_cast<std::size_t>(grid.K) + 1);
  traj.rewards.reserve(static_cast<std::size_t>(grid.K));
  traj.states.push_back(model.initial_state);

  const double dt = grid.dt;
  const double sqrt_dt = std::sqrt(dt);

  for (Index i = 0; i < grid.K; ++i) {
    const Vec& x = traj.states.back();
    const double t = grid.t(i);
    traj.rewards.push_back(model.running_reward(t, x));

    Vec next;
    switch (model.kind) {
      case SamplerKind::ExactBrownian:
        next = scalar_state(x(0) + model.coef.mu * dt +
                            model.coef.sigma * sqrt_dt * gauss(rng));
        break;
      case SamplerKind::ExactGbm: {
        const double s = model.coef.sigma;
        const double m = (model.coef.r - model.coef.q - 0.5 * s * s) * dt;
        next = scalar_state(x(0) * std::exp(m + s * sqrt_dt * gauss(rng)));
        break;
      }
      case SamplerKind::ExactOu: {
        const double a = model.coef.a;
        const double decay = std::exp(-a * dt);
        const double sd =
            model.coef.sigma * std::sqrt((1.0 - decay * decay) / (2.0 * a));
        next = scalar_state(model.coef.mean + (x(0) - model.coef.mean) * decay +
                            sd * gauss(rng));
        break;
      }
      case SamplerKind::Euler: {
        Vec dw(model.noise_dim);
        for (Index j = 0; j < model.noise_dim; ++j) dw(j) = sqrt_dt * gauss(rng);
        next = x + model.drift(t, x) * dt;
        next.noalias() += model.diffusion(t, x) * dw;
        break;
      }
    }
    if (!next.allFinite())
      throw NonFiniteError("sample_trajectory: non-finite state at t = " +
                           std::to_string(grid.t(i + 1)));
    traj.states.push_back(std::move(next));
  }
  traj.terminal_value = model.terminal_reward(traj.states.back());
  return traj;
}

EpisodeBatch sample_batch(const DiffusionModel& model, const TimeGrid& grid,
                          Index n, std::uint64_t seed_base) {
  if (n < 1) throw std::invalid_argument("sample_batch: need at least one episode");
  EpisodeBatch batch;
  batch.trajectories.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i)
    batch.trajectories.push_back(
        sample_trajectory(model, grid, seed_base + static_cast<std::uint64_t>(i)));
  return batch;
}

void validate_batch(const EpisodeBatch& batch) {
  if (batch.trajectories.empty())
    throw std::invalid_argument("episode batch: empty");
  const TimeGrid& grid = batch.trajectories.front().grid;
  for (const Trajectory& traj : batch.trajectories) {
    if (traj.grid.K != grid.K || traj.grid.t0 != grid.t0 || traj.grid.T != grid.T)
      throw std::invalid_argument("episode batch: mixed grids");
  }
}

void check_reward_consistency(const DiffusionModel& model, const Trajectory& traj) {
  if (traj.states.size() != traj.grid.points.size())
    throw std::invalid_argument("trajectory: states/grid length mismatch");
  if (static_cast<Index>(traj.rewards.size()) != traj.grid.K)
    throw std::invalid_argument("trajectory: reward stream length mismatch");
  for (Index i = 0; i < traj.grid.K; ++i) {
    const double expected =
        model.running_reward(traj.grid.t(i), traj.states[static_cast<std::size_t>(i)]);
    const double stored = traj.rewards[static_cast<std::size_t>(i)];
    if (std::abs(expected - stored) > 1e-12 * std::max(1.0, std::abs(expected)))
      throw std::logic_error("trajectory: stored reward inconsistent at index " +
                             std::to_string(i));
  }
}

double cumulative_reward(const Trajectory& traj, Index from_index) {
  const Index K = traj.grid.K;
  if (from_index < 0 || from_index > K)
    throw std::out_of_range("cumulative_reward: index out of range");
  double acc = 0.0;
  for (Index j = from_index; j < K; ++j)
    acc += traj.rewards[static_cast<std::size_t>(j)] * traj.grid.dt;
  return traj.terminal_value + acc;
}

double discounted_cumulative_reward(const Trajectory& traj, double rho,
                                    Index from_index) {
  if (rho < 0.0) throw std::invalid_argument("discounted_cumulative_reward: rho >= 0");
  if (rho == 0.0) return cumulative_reward(traj, from_index);
  const Index K = traj.grid.K;
  if (from_index < 0 || from_index > K)
    throw std::out_of_range("discounted_cumulative_reward: index out of range");
  double acc = 0.0;
  for (Index j = from_index; j < K; ++j)
    acc += std::exp(-rho * traj.grid.t(j)) * traj.rewards[static_cast<std::size_t>(j)] *
           traj.grid.dt;
  return std::exp(-rho * traj.grid.T) * traj.terminal_value + acc;
}

void write_trajectory_csv(const Trajectory& traj, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  const Index d = traj.states.front().size();
  out << "t";
  for (Index j = 0; j < d; ++j) out << ",x" << j;
  out << ",r\n";
  out.precision(17);
  for (std::size_t i = 0; i < traj.states.size(); ++i) {
    out << traj.grid.points[i];
    for (Index j = 0; j < d; ++j) out << "," << traj.states[i](j);
    if (i < traj.rewards.size())
      out << "," << traj.rewards[i];
    else
      out << ",";
    out << "\n";
  }
}

}  // namespace ctpe
