#include <cmath>

#include "doctest.h"

#include "ctpe/test_functions.hpp"

using namespace ctpe;

namespace {

Vec vec1(double v) { return Vec::Constant(1, v); }

EpisodeBatch example1_batch(Index episodes, Index steps, std::uint64_t seed) {
  auto model = DiffusionModel::brownian(0.0, 1.0, 0.0, 1.0,
                                        [](double, const Vec&) { return 0.0; },
                                        [](const Vec& x) { return x(0); });
  return sample_batch(model, TimeGrid(0.0, 1.0, steps), episodes, seed);
}

/// Hand-built two-step trajectory with prescribed states.
Trajectory tiny_trajectory(std::initializer_list<double> xs, double T) {
  Trajectory traj;
  traj.grid = TimeGrid(0.0, T, static_cast<Index>(xs.size()) - 1);
  for (double x : xs) traj.states.push_back(vec1(x));
  traj.rewards.assign(xs.size() - 1, 0.0);
  traj.terminal_value = traj.states.back()(0);
  return traj;
}

}  // namespace

TEST_CASE("zero test function gives an exactly zero moment") {
  const EpisodeBatch batch = example1_batch(20, 50, 1);
  AffineTimeScaledModel model;
  model.params = vec1(-0.8);
  const MomentEstimate est =
      moment_estimate(model, batch, TestFunction::constant(0.0), 0.0);
  CHECK(est.g(0) == 0.0);
  CHECK(est.n_episodes == 20);
}

TEST_CASE("moments vanish at the truth within three standard errors") {
  const EpisodeBatch batch = example1_batch(10000, 100, 2);
  AffineTimeScaledModel model;
  model.params = Vec::Zero(1);
  const MomentEstimate est =
      moment_estimate(model, batch, TestFunction::grad_theta(), 0.0);
  const Vec se = est.std_error();
  for (Index j = 0; j < est.g.size(); ++j) CHECK(std::abs(est.g(j)) <= 3.0 * se(j));
}

TEST_CASE("cubic family: the empirical moment is linear with root exactly zero") {
  const EpisodeBatch batch = example1_batch(500, 100, 3);
  CubicModel model;
  const MomentEstimate at_zero =
      moment_estimate(model, Vec::Zero(1), batch, TestFunction::grad_theta(), 0.0);
  CHECK(at_zero.g(0) == 0.0);  // dm vanishes identically at theta = 0
  const MomentEstimate at_one =
      moment_estimate(model, Vec::Ones(1), batch, TestFunction::grad_theta(), 0.0);
  CHECK(std::abs(at_one.g(0)) > 1e-3);  // slope nonzero, so the root is unique
  // Linearity: g(theta) = theta * g(1).
  const MomentEstimate at_half =
      moment_estimate(model, vec1(0.5), batch, TestFunction::grad_theta(), 0.0);
  CHECK(at_half.g(0) == doctest::Approx(0.5 * at_one.g(0)).epsilon(1e-12));
}

TEST_CASE("moment residual steps") {
  SUBCASE("identity weighting returns the raw increment") {
    Trajectory traj = tiny_trajectory({0.0, 0.3, 0.1}, 1.0);
    AffineTimeScaledModel model;
    model.params = Vec::Zero(1);
    const Vec r = moment_residual_step(model, model.params, traj, 0,
                                       TestFunction::constant(1.0), 0.0);
    CHECK(r(0) == doctest::Approx(0.3).epsilon(1e-14));
  }
  SUBCASE("unit-lambda trace unrolled by hand") {
    // Affine gradient (1 - t) x: states chosen so the gradient is 1 at both
    // of the first two grid points.
    Trajectory traj = tiny_trajectory({1.0, 2.0, 0.5}, 1.0);
    AffineTimeScaledModel model;
    model.params = Vec::Zero(1);
    const TestFunction trace = TestFunction::eligibility_trace(1.0);
    auto state = trace.make_state(model);
    const Vec xi0 = trace.emit(state, model, model.params, traj, 0);
    CHECK(xi0(0) == doctest::Approx(0.5).epsilon(1e-14));
    const Vec xi1 = trace.emit(state, model, model.params, traj, 1);
    CHECK(xi1(0) == doctest::Approx(1.0).epsilon(1e-14));
    const double dm1 = m_increment_value(model, model.params, traj, 1, 0.0);
    const Vec r = moment_residual_step(model, model.params, traj, 1, trace, 0.0);
    CHECK(r(0) == doctest::Approx(1.0 * dm1).epsilon(1e-14));
  }
  SUBCASE("reciprocal test at the origin is unity") {
    Trajectory traj = tiny_trajectory({0.0, -0.4, 0.2}, 1.0);
    AffineTimeScaledModel model;
    model.params = vec1(0.3);
    const double dm0 = m_increment_value(model, model.params, traj, 0, 0.0);
    const Vec r = moment_residual_step(model, model.params, traj, 0,
                                       TestFunction::tailored_reciprocal(), 0.0);
    CHECK(r(0) == doctest::Approx(dm0).epsilon(1e-14));
  }
  SUBCASE("index out of range") {
    Trajectory traj = tiny_trajectory({0.0, 1.0}, 1.0);
    AffineTimeScaledModel model;
    CHECK_THROWS_AS(moment_residual_step(model, model.params, traj, 1,
                                         TestFunction::grad_theta(), 0.0),
                    std::out_of_range);
  }
}

TEST_CASE("zero-lambda convention reduces to dt-scaled gradient residuals") {
  const EpisodeBatch batch = example1_batch(5, 40, 4);
  AffineTimeScaledModel model;
  model.params = vec1(-0.5);
  const TestFunction trace0 = TestFunction::eligibility_trace(0.0);
  const TestFunction grad = TestFunction::grad_theta();
  const Trajectory& traj = batch[0];
  for (Index i = 0; i < traj.grid.K; ++i) {
    const Vec a = moment_residual_step(model, model.params, traj, i, trace0, 0.0);
    const Vec b = moment_residual_step(model, model.params, traj, i, grad, 0.0);
    CHECK(a(0) == doctest::Approx(traj.grid.dt * b(0)).epsilon(1e-14));
  }
}

TEST_CASE("residual steps sum to the episode contribution exactly") {
  const EpisodeBatch batch = example1_batch(1, 60, 5);
  ExpPinnedModel model;  // nonlinear family, trace test
  const TestFunction trace = TestFunction::eligibility_trace(0.7);
  const MomentEstimate est = moment_estimate(model, batch, trace, 0.0);
  Vec summed = Vec::Zero(1);
  for (Index i = 0; i < batch[0].grid.K; ++i)
    summed += moment_residual_step(model, model.params, batch[0], i, trace, 0.0);
  CHECK(summed(0) == est.g(0));
}

TEST_CASE("linear basis moments are affine in theta") {
  auto model_sde = DiffusionModel::brownian(0.0, 1.0, 0.2, 1.0,
                                            [](double t, const Vec& x) { return t * x(0); },
                                            [](const Vec& x) { return x(0); });
  const EpisodeBatch batch =
      sample_batch(model_sde, TimeGrid(0.0, 1.0, 50), 40, 6);
  LinearBasisModel model({[](double, const Vec&) { return 1.0; },
                          [](double, const Vec& x) { return x(0); },
                          [](double t, const Vec& x) { return (1.0 - t) * x(0); }});
  const TestFunction test = TestFunction::grad_theta();
  const Index L = model.param_count();
  // Recover g(theta) = B theta + c from L + 1 evaluations.
  const Vec c = moment_estimate(model, Vec::Zero(L), batch, test, 0.0).g;
  Mat B(L, L);
  for (Index j = 0; j < L; ++j) {
    Vec e = Vec::Zero(L);
    e(j) = 1.0;
    B.col(j) = moment_estimate(model, e, batch, test, 0.0).g - c;
  }
  Vec probe(3);
  probe << 0.37, -1.2, 0.85;
  const Vec direct = moment_estimate(model, probe, batch, test, 0.0).g;
  const Vec affine = B * probe + c;
  CHECK((direct - affine).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("moment estimates are permutation invariant and additive over sub-batches") {
  EpisodeBatch batch = example1_batch(30, 40, 7);
  AffineTimeScaledModel model;
  model.params = vec1(0.4);
  const TestFunction test = TestFunction::grad_theta();
  const Vec full = moment_estimate(model, batch, test, 0.0).g;

  EpisodeBatch reversed = batch;
  std::reverse(reversed.trajectories.begin(), reversed.trajectories.end());
  CHECK((moment_estimate(model, reversed, test, 0.0).g - full).cwiseAbs().maxCoeff() <=
        1e-13);

  EpisodeBatch head, tail;
  head.trajectories.assign(batch.trajectories.begin(), batch.trajectories.begin() + 12);
  tail.trajectories.assign(batch.trajectories.begin() + 12, batch.trajectories.end());
  const Vec combined = (12.0 * moment_estimate(model, head, test, 0.0).g +
                        18.0 * moment_estimate(model, tail, test, 0.0).g) /
                       30.0;
  CHECK((combined - full).cwiseAbs().maxCoeff() <= 1e-13);
}

TEST_CASE("composite tests concatenate components and validate construction") {
  const EpisodeBatch batch = example1_batch(3, 20, 8);
  QuadTripleModel model;
  const TestFunction composite = TestFunction::composite(
      {TestFunction::grad_theta(), TestFunction::constant(2.0),
       TestFunction::tailored_reciprocal()});
  CHECK(composite.dim(model) == 5);
  const MomentEstimate est = moment_estimate(model, batch, composite, 0.0);
  CHECK(est.g.size() == 5);
  const MomentEstimate grad_only =
      moment_estimate(model, batch, TestFunction::grad_theta(), 0.0);
  CHECK(est.g.head(3).isApprox(grad_only.g, 1e-14));

  CHECK_THROWS_AS(TestFunction::composite({}), std::invalid_argument);
  CHECK_THROWS_AS(TestFunction::composite({TestFunction::composite(
                      {TestFunction::constant(1.0)})}),
                  std::invalid_argument);
  CHECK_THROWS_AS(TestFunction::eligibility_trace(1.5), std::invalid_argument);
}

TEST_CASE("trace conventions differ when the decay is applied per step") {
  const EpisodeBatch batch = example1_batch(1, 30, 9);
  AffineTimeScaledModel model;
  model.params = vec1(-0.5);
  const TestFunction continuous = TestFunction::eligibility_trace(0.5, false);
  const TestFunction discrete = TestFunction::eligibility_trace(0.5, true);
  auto sc = continuous.make_state(model);
  auto sd = discrete.make_state(model);
  Vec a, b;
  for (Index i = 0; i < 5; ++i) {
    a = continuous.emit(sc, model, model.params, batch[0], i);
    b = discrete.emit(sd, model, model.params, batch[0], i);
  }
  CHECK(a(0) != b(0));
}
