#include "ctpe/objectives.hpp"

#include <cmath>
#include <fstream>

namespace ctpe {

namespace {

ObjectiveValue reduce_episodes(const EpisodeBatch& batch,
                               const std::function<double(const Trajectory&)>& per_episode) {
  validate_batch(batch);
  double sum = 0.0, sum_sq = 0.0;
  for (Index e = 0; e < batch.size(); ++e) {
    const double v = per_episode(batch[e]);
    sum += v;
    sum_sq += v * v;
  }
  const double n = static_cast<double>(batch.size());
  ObjectiveValue out;
  out.value = sum / n;
  out.n_episodes = batch.size();
  if (batch.size() > 1) {
    const double var = std::max(0.0, (sum_sq - sum * sum / n) / (n - 1.0));
    out.std_error = std::sqrt(var / n);
  }
  return out;
}

struct GmmParts {
  Vec g;
  Mat gram;
  Vec g_var;  // variance of the mean estimate, per component
};

GmmParts gmm_parts(const ValueModel& model, const Vec& theta, const EpisodeBatch& batch,
                   const TestFunction& test, double rho) {
  validate_batch(batch);
  const Index d = test.dim(model);
  Vec sum = Vec::Zero(d), sum_sq = Vec::Zero(d);
  Mat gram = Mat::Zero(d, d);
  for (Index e = 0; e < batch.size(); ++e) {
    const Trajectory& traj = batch[e];
    auto state = test.make_state(model);
    Vec contrib = Vec::Zero(d);
    for (Index i = 0; i < traj.grid.K; ++i) {
      const Vec xi = test.emit(state, model, theta, traj, i);
      contrib += xi * m_increment_value(model, theta, traj, i, rho);
      gram.selfadjointView<Eigen::Lower>().rankUpdate(xi, traj.grid.dt);
    }
    sum += contrib;
    sum_sq += contrib.cwiseProduct(contrib);
  }
  const double n = static_cast<double>(batch.size());
  GmmParts parts;
  parts.g = sum / n;
  parts.gram = Mat(gram.selfadjointView<Eigen::Lower>()) / n;
  if (batch.size() > 1)
    parts.g_var = ((sum_sq - sum.cwiseProduct(sum) / n) / (n - 1.0)).cwiseMax(0.0) / n;
  else
    parts.g_var = Vec::Zero(d);
  return parts;
}

ObjectiveValue quadratic_form(const GmmParts& parts, const Mat& weight) {
  const Vec ag = weight * parts.g;
  ObjectiveValue out;
  out.value = 0.5 * parts.g.dot(ag);
  // First-order noise in g plus the quadratic floor at g ~ 0.
  double var = ag.cwiseProduct(ag).dot(parts.g_var);
  double tr2 = 0.0;
  for (Index i = 0; i < weight.rows(); ++i)
    for (Index j = 0; j < weight.cols(); ++j) {
      const double wv = weight(i, j) * parts.g_var(j);
      tr2 += wv * (weight(j, i) * parts.g_var(i));
    }
  var += 0.5 * tr2;
  out.std_error = std::sqrt(std::max(0.0, var));
  return out;
}

double rcond_estimate(const Eigen::FullPivLU<Mat>& lu) {
  const Mat& u = lu.matrixLU();
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (Index i = 0; i < std::min(u.rows(), u.cols()); ++i) {
    const double p = std::abs(u(i, i));
    lo = std::min(lo, p);
    hi = std::max(hi, p);
  }
  return hi > 0.0 ? lo / hi : 0.0;
}

}  // namespace

ObjectiveValue mstde(const ValueModel& model, const Vec& theta, const EpisodeBatch& batch) {
  return reduce_episodes(batch, [&](const Trajectory& traj) {
    const double dt = traj.grid.dt;
    double acc = 0.0;
    for (Index i = 0; i < traj.grid.K; ++i) {
      const double rate = m_increment_value(model, theta, traj, i, 0.0) / dt;
      acc += rate * rate * dt;
    }
    if (!std::isfinite(acc)) throw NonFiniteError("mstde: non-finite episode value");
    return 0.5 * acc;
  });
}

ObjectiveValue martingale_loss(const ValueModel& model, const Vec& theta,
                               const EpisodeBatch& batch, double rho) {
  return reduce_episodes(batch, [&](const Trajectory& traj) {
    const double dt = traj.grid.dt;
    double acc = 0.0;
    if (rho == 0.0) {
      double togo = cumulative_reward(traj, traj.grid.K);
      // Accumulate reward-to-go backwards so each step is O(1).
      std::vector<double> g(static_cast<std::size_t>(traj.grid.K));
      for (Index i = traj.grid.K - 1; i >= 0; --i) {
        togo += traj.rewards[static_cast<std::size_t>(i)] * dt;
        g[static_cast<std::size_t>(i)] = togo;
      }
      for (Index i = 0; i < traj.grid.K; ++i) {
        const double diff =
            g[static_cast<std::size_t>(i)] -
            model.value(theta, traj.grid.t(i), traj.states[static_cast<std::size_t>(i)]);
        acc += diff * diff * dt;
      }
    } else {
      double togo = std::exp(-rho * traj.grid.T) * traj.terminal_value;
      std::vector<double> g(static_cast<std::size_t>(traj.grid.K));
      for (Index i = traj.grid.K - 1; i >= 0; --i) {
        togo += std::exp(-rho * traj.grid.t(i)) * traj.rewards[static_cast<std::size_t>(i)] * dt;
        g[static_cast<std::size_t>(i)] = togo;
      }
      for (Index i = 0; i < traj.grid.K; ++i) {
        const double t = traj.grid.t(i);
        const double diff =
            g[static_cast<std::size_t>(i)] -
            std::exp(-rho * t) *
                model.value(theta, t, traj.states[static_cast<std::size_t>(i)]);
        acc += diff * diff * dt;
      }
    }
    return 0.5 * acc;
  });
}

ObjectiveValue msve(const ValueModel& model, const Vec& theta, const EpisodeBatch& batch,
                    const OracleFn& oracle) {
  return reduce_episodes(batch, [&](const Trajectory& traj) {
    double acc = 0.0;
    for (Index i = 0; i < traj.grid.K; ++i) {
      const double t = traj.grid.t(i);
      const Vec& x = traj.states[static_cast<std::size_t>(i)];
      const double diff = oracle(t, x) - model.value(theta, t, x);
      acc += diff * diff * traj.grid.dt;
    }
    return acc;
  });
}

ObjectiveValue realized_qv(const ValueModel& model, const Vec& theta,
                           const EpisodeBatch& batch) {
  return reduce_episodes(batch, [&](const Trajectory& traj) {
    double acc = 0.0;
    for (Index i = 0; i < traj.grid.K; ++i) {
      const double dm = m_increment_value(model, theta, traj, i, 0.0);
      acc += dm * dm;
    }
    return acc;
  });
}

ObjectiveValue gmm_objective(const ValueModel& model, const Vec& theta,
                             const EpisodeBatch& batch, const TestFunction& test,
                             GmmWeighting weighting, double rho, double gram_ridge) {
  GmmParts parts = gmm_parts(model, theta, batch, test, rho);
  const Index d = parts.g.size();
  Mat weight;
  if (weighting == GmmWeighting::Identity) {
    weight = Mat::Identity(d, d);
  } else {
    Mat gram = parts.gram;
    if (gram_ridge > 0.0) gram.diagonal().array() += gram_ridge;
    Eigen::FullPivLU<Mat> lu(gram);
    const double rc = rcond_estimate(lu);
    if (!lu.isInvertible() || rc < 1e-14)
      throw SingularMatrixError("gmm_objective: singular empirical Gram matrix", rc);
    weight = lu.inverse();
  }
  ObjectiveValue out = quadratic_form(parts, weight);
  out.n_episodes = batch.size();
  return out;
}

ObjectiveValue mspbe(const ValueModel& model, const Vec& theta, const EpisodeBatch& batch,
                     const std::vector<TestFunction>& tests, double rho) {
  const TestFunction stacked = tests.size() == 1
                                   ? tests.front()
                                   : TestFunction::composite(tests);
  GmmParts parts = gmm_parts(model, theta, batch, stacked, rho);
  Eigen::LDLT<Mat> ldlt(parts.gram);
  if (ldlt.info() != Eigen::Success ||
      ldlt.vectorD().cwiseAbs().minCoeff() <
          1e-14 * std::max(1.0, ldlt.vectorD().cwiseAbs().maxCoeff()))
    throw SingularMatrixError("mspbe: test functions not linearly independent on batch",
                              ldlt.vectorD().cwiseAbs().minCoeff());
  const Vec coeffs = ldlt.solve(parts.g);
  ObjectiveValue out;
  out.value = 0.5 * parts.g.dot(coeffs);
  out.n_episodes = batch.size();
  out.std_error = std::sqrt(coeffs.cwiseProduct(coeffs).dot(parts.g_var));
  return out;
}

std::vector<SweepPoint> sweep_objective(
    const std::function<ObjectiveValue(const Vec&)>& objective, double lo, double hi,
    Index n_points) {
  if (n_points < 2) throw std::invalid_argument("sweep: need at least two points");
  std::vector<SweepPoint> out;
  out.reserve(static_cast<std::size_t>(n_points));
  for (Index i = 0; i < n_points; ++i) {
    SweepPoint p;
    p.theta = Vec::Constant(
        1, lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n_points - 1));
    const ObjectiveValue v = objective(p.theta);
    p.value = v.value;
    p.std_error = v.std_error;
    out.push_back(std::move(p));
  }
  return out;
}

void write_sweep_csv(const std::vector<SweepPoint>& sweep, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  if (sweep.empty()) return;
  const Index L = sweep.front().theta.size();
  for (Index j = 0; j < L; ++j) out << "theta" << j << ",";
  out << "value,std_error\n";
  out.precision(17);
  for (const auto& p : sweep) {
    for (Index j = 0; j < L; ++j) out << p.theta(j) << ",";
    out << p.value << "," << p.std_error << "\n";
  }
}

}  // namespace ctpe
