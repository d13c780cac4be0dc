#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"

#include "ctpe/oracles.hpp"

using namespace ctpe;
using namespace ctpe::oracles;

TEST_CASE("standard normal cdf") {
  CHECK(normal_cdf(0.0) == 0.5);
  CHECK(normal_cdf(1.959963984540054) == doctest::Approx(0.975).epsilon(1e-12));
  CHECK(normal_cdf(-8.0) == doctest::Approx(6.22096e-16).epsilon(1e-3));
  for (double z : {-3.0, -0.7, 0.4, 2.5})
    CHECK(normal_cdf(z) + normal_cdf(-z) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("call price agrees with the log-normal quadrature route") {
  const BsQuote quote = black_scholes(0.0, 1.0, 1.0, 1.0, 0.01, 0.0, 0.3);
  const double integrated = bs_price_quadrature(0.0, 1.0, 1.0, 1.0, 0.01, 0.0, 0.3);
  CHECK(quote.price == doctest::Approx(0.1236826746).epsilon(5e-4));
  CHECK(std::abs(quote.price - integrated) <= 5e-4);
  // Quadrature is internally converged.
  const double finer = bs_price_quadrature(0.0, 1.0, 1.0, 1.0, 0.01, 0.0, 0.3, 16000);
  CHECK(std::abs(integrated - finer) <= 1e-8);
}

TEST_CASE("call price is strictly increasing in volatility at the money") {
  double last = 0.0;
  for (double sigma = 0.1; sigma <= 1.05; sigma += 0.1) {
    const double price = black_scholes(0.0, 1.0, 1.0, 1.0, 0.01, 0.0, sigma).price;
    CHECK(price > last);
    last = price;
  }
}

TEST_CASE("call price limits and bounds") {
  SUBCASE("deep in the money near expiry") {
    const BsQuote q = black_scholes(1.0 - 1e-9, 2.0, 1.0, 1.0, 0.01, 0.0, 0.3);
    CHECK(q.price == doctest::Approx(1.0).epsilon(1e-4));
    CHECK(q.delta == doctest::Approx(1.0).epsilon(1e-4));
  }
  SUBCASE("at and beyond expiry the payoff is returned") {
    const BsQuote q = black_scholes(1.0, 2.0, 1.0, 1.0, 0.01, 0.0, 0.3);
    CHECK(q.price == 1.0);
    CHECK(q.delta == 1.0);
    CHECK(black_scholes(1.5, 0.5, 1.0, 1.0, 0.01, 0.0, 0.3).price == 0.0);
  }
  SUBCASE("arbitrage bounds on a probe grid") {
    for (double x : {0.5, 0.9, 1.0, 1.4, 2.2})
      for (double t : {0.0, 0.4, 0.8})
        for (double sigma : {0.15, 0.4}) {
          const double tau = 1.0 - t;
          const double price = black_scholes(t, x, 1.0, 1.0, 0.02, 0.01, sigma).price;
          const double lower =
              std::max(std::exp(-0.01 * tau) * x - std::exp(-0.02 * tau), 0.0);
          CHECK(price >= lower - 1e-12);
          CHECK(price <= std::exp(-0.01 * tau) * x + 1e-12);
        }
  }
  SUBCASE("domain validation") {
    CHECK_THROWS_AS(black_scholes(0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0),
                    std::invalid_argument);
    CHECK_THROWS_AS(black_scholes(0.0, -1.0, 1.0, 1.0, 0.0, 0.0, 0.3),
                    std::invalid_argument);
  }
}

TEST_CASE("lq coefficients") {
  SUBCASE("reference parameters give the exact fractions") {
    const LqCoefficients c = lq_coefficients(1.0, 1.0, 0.5, 1.5, 1.0);
    CHECK(c.A == doctest::Approx(2.0 / 7.0).epsilon(1e-15));
    CHECK(c.B == doctest::Approx(18.0 / 35.0).epsilon(1e-15));
    CHECK(c.C == doctest::Approx(11.0 / 30.0).epsilon(1e-15));
  }
  SUBCASE("zero mean reversion specializes to the brownian value") {
    const LqCoefficients c = lq_coefficients(0.0, 0.0, 1.0, 1.5, 0.0);
    CHECK(c.A == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(c.B == 0.0);
    CHECK(c.C == doctest::Approx(2.0 / 9.0).epsilon(1e-15));
  }
  SUBCASE("stationary equation residuals vanish, including under reward scaling") {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(0.1, 2.0);
    for (int probe = 0; probe < 50; ++probe) {
      const double a = u(rng), mean = u(rng) - 1.0, sigma = u(rng), rho = u(rng),
                   q = u(rng) - 1.0, scale = u(rng);
      const LqCoefficients c = lq_coefficients(a, mean, sigma, rho, q);
      // Generator of a (mean-reverting) diffusion applied to the quadratic
      // value, plus the scaled reward, minus the discount term: the
      // coefficients of x^2, x, 1 must each vanish.
      const double A = scale * c.A, B = scale * c.B, C = scale * c.C;
      const double cx2 = -a * A + scale * 0.5 - 0.5 * rho * A * 2.0 * 0.5;
      const double cx1 = a * mean * A - a * B + scale * q - rho * B;
      const double cx0 = a * mean * B + 0.5 * sigma * sigma * A - rho * C;
      CHECK(std::abs(cx2) <= 1e-12);
      CHECK(std::abs(cx1) <= 1e-12);
      CHECK(std::abs(cx0) <= 1e-12);
    }
  }
  SUBCASE("domain validation") {
    CHECK_THROWS_AS(lq_coefficients(1.0, 0.0, 1.0, 0.0, 0.0), std::domain_error);
    CHECK_THROWS_AS(lq_coefficients(-1.0, 0.0, 1.0, 1.5, 0.0), std::domain_error);
  }
}

TEST_CASE("iterate moments of the conventional-test online rule") {
  SUBCASE("initial condition") {
    const ThetaMoments m = ctd0_theta_moments_bm_lq(0.7, 1.5, 0.0);
    CHECK(m.mean == doctest::Approx(0.7).epsilon(1e-14));
    CHECK(m.variance == doctest::Approx(0.0).epsilon(1e-14));
  }
  SUBCASE("long-run mean is the true constant") {
    const ThetaMoments m = ctd0_theta_moments_bm_lq(1.0, 1.5, 100.0);
    CHECK(m.mean == doctest::Approx(2.0 / 9.0).epsilon(1e-10));
  }
  SUBCASE("variance at t = 100 matches the linear-growth value") {
    const ThetaMoments m = ctd0_theta_moments_bm_lq(1.0, 1.5, 100.0);
    CHECK(m.variance == doctest::Approx(149.0 / 20.25).epsilon(1e-10));
  }
  SUBCASE("variance is nondecreasing in time") {
    double last = -1.0;
    for (double t = 0.0; t <= 50.0; t += 2.5) {
      const double v = ctd0_theta_moments_bm_lq(1.0, 1.5, t).variance;
      CHECK(v >= last);
      last = v;
    }
  }
  CHECK_THROWS_AS(ctd0_theta_moments_bm_lq(1.0, 0.0, 1.0), std::domain_error);
}

TEST_CASE("brute-force minimizer") {
  SUBCASE("quadratic-variation closed form of the affine family") {
    const OracleValue v = bruteforce_minimize(
        [](const Vec& th) { return example1_qv(th(0)); }, Vec::Constant(1, -5.0),
        Vec::Constant(1, 5.0), 101, 4);
    CHECK(v.value(0) == doctest::Approx(-1.5).epsilon(1e-6));
    CHECK(v.provenance == OracleValue::Provenance::NumericBruteforce);
  }
  SUBCASE("random shifted quadratics") {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int probe = 0; probe < 10; ++probe) {
      const double c = u(rng);
      const OracleValue v = bruteforce_minimize(
          [c](const Vec& th) { return (th(0) - c) * (th(0) - c); },
          Vec::Constant(1, -4.0), Vec::Constant(1, 4.0), 41, 4);
      CHECK(v.value(0) == doctest::Approx(c).epsilon(1e-5));
    }
  }
  SUBCASE("two-dimensional coordinate refinement") {
    const OracleValue v = bruteforce_minimize(
        [](const Vec& th) {
          const double a = th(0) - 0.3, b = th(1) + 0.8;
          return a * a + b * b * b * b + 1.0;
        },
        Vec::Constant(2, -2.0), Vec::Constant(2, 2.0), 21, 5);
    CHECK(v.value(0) == doctest::Approx(0.3).epsilon(1e-4));
    CHECK(v.value(1) == doctest::Approx(-0.8).epsilon(2e-2));
  }
  SUBCASE("boundary minimum is an error") {
    CHECK_THROWS_AS(bruteforce_minimize([](const Vec& th) { return th(0); },
                                        Vec::Constant(1, 0.0), Vec::Constant(1, 1.0),
                                        11, 2),
                    std::domain_error);
  }
}

TEST_CASE("example moment integrands and the tabulated roots") {
  SUBCASE("closed forms match quadrature at a regular point") {
    // Simpson fallback evaluates the same integrals directly.
    const double direct = example4_ctd0_moment(-1.5);
    double simpson = 0.0;
    const int n = 4000;
    for (int i = 0; i <= n; ++i) {
      const double t = static_cast<double>(i) / n;
      const double w = (i == 0 || i == n) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
      simpson += w * (1.0 - t) * (1.0 + t * -1.5) * std::exp((2.0 + t * -1.5) * -1.5);
    }
    simpson /= 3.0 * n;
    CHECK(direct == doctest::Approx(simpson).epsilon(1e-10));
  }
  SUBCASE("roots reproduce the tabulated converging points to 1e-4") {
    const double root0 = bisect_root(example4_ctd0_moment, -3.0, -1.0);
    CHECK(std::abs(root0 - analytic_minimizer("ex4_ctd0").scalar()) <= 1e-4);
    const double root1 = bisect_root(example4_ctd1_moment, -3.0, -1.0);
    CHECK(std::abs(root1 - analytic_minimizer("ex4_ctd1").scalar()) <= 1e-4);
  }
  SUBCASE("value-error minimizers agree with the table") {
    const OracleValue ml4 = bruteforce_minimize(
        [](const Vec& th) { return example4_msve(th(0)); }, Vec::Constant(1, -4.0),
        Vec::Constant(1, -0.2), 200, 4);
    CHECK(std::abs(ml4.value(0) - analytic_minimizer("ex4_ml").scalar()) <= 1e-4);
    const OracleValue ml5 = bruteforce_minimize(
        [](const Vec& th) { return example5_msve(th(0)); }, Vec::Constant(1, -3.0),
        Vec::Constant(1, -0.1), 200, 4);
    CHECK(std::abs(ml5.value(0) - analytic_minimizer("ex5_ml").scalar()) <= 1e-4);
  }
  SUBCASE("no sign change is rejected") {
    CHECK_THROWS_AS(bisect_root([](double) { return 1.0; }, 0.0, 1.0),
                    std::invalid_argument);
  }
}

TEST_CASE("brute force agrees with every tabulated closed form") {
  auto check1d = [](const std::string& id, const std::function<double(double)>& f,
                    double lo, double hi) {
    const OracleValue v = bruteforce_minimize(
        [&](const Vec& th) { return f(th(0)); }, Vec::Constant(1, lo),
        Vec::Constant(1, hi), 101, 4);
    CHECK(std::abs(v.value(0) - analytic_minimizer(id).scalar()) <= 1e-4);
  };
  check1d("ex1_mstde", example1_qv, -5.0, 2.0);
  check1d("ex3_ml", example3_ml, -2.0, 2.0);
  check1d("ex3_ml", example3_msve, -2.0, 2.0);  // same minimizer, both routes
  check1d("ex5_mspbe",
          [](double th) {
            const double c = example5_constant_test_moment(th);
            return 0.5 * c * c;
          },
          -3.0, 1.0);
  // The quadratic-variation surface of the three-parameter family.
  const OracleValue ex2 = bruteforce_minimize(
      [](const Vec& th) { return example2_qv(th(0), th(1)); }, Vec::Constant(2, -4.0),
      Vec::Constant(2, 2.0), 41, 4);
  CHECK(std::abs(ex2.value(0) + 2.0) <= 1e-4);
  CHECK(std::abs(ex2.value(1)) <= 1e-4);
}

TEST_CASE("rate fit") {
  SUBCASE("synthetic first-order errors") {
    const RateFit fit = rate_fit({{0.1, 0.3}, {0.05, 0.15}, {0.02, 0.06}, {0.01, 0.03}});
    CHECK(fit.slope == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(fit.r_squared == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("synthetic half-order errors") {
    std::vector<std::pair<double, double>> points;
    for (double dt : {0.1, 0.05, 0.02, 0.01}) points.emplace_back(dt, 2.0 * std::sqrt(dt));
    CHECK(rate_fit(points).slope == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("invalid inputs") {
    CHECK_THROWS_AS(rate_fit({{0.1, 1.0}, {0.05, 0.5}}), std::invalid_argument);
    CHECK_THROWS_AS(rate_fit({{0.1, 1.0}, {0.05, 0.5}, {0.02, -0.1}}),
                    std::invalid_argument);
  }
}

TEST_CASE("analytic minimizer table") {
  CHECK(analytic_minimizer("ex1_mstde").scalar() == -1.5);
  CHECK(analytic_minimizer("ex3_ml").scalar() == doctest::Approx(4.0 / 15.0));
  CHECK(analytic_minimizer("ex4_ctd0").scalar() == doctest::Approx(-1.83923));
  CHECK(analytic_minimizer("ex2_mstde").value(0) == -2.0);
  CHECK_THROWS_AS(analytic_minimizer("ex99"), std::invalid_argument);
}

TEST_CASE("fixtures round-trip and cover the acceptance targets") {
  const auto table = fixture_table();
  for (const char* id :
       {"ex1_mstde", "ex1_true", "ex2_mstde", "ex2_true", "ex3_ml", "ex3_moment",
        "ex4_ctd0", "ex4_ctd1", "ex4_ml", "ex5_ml", "ex5_mspbe", "lq_abc",
        "bm_lq_theta_true", "bs_price_t0", "option_msve_target"})
    CHECK_NOTHROW(find_fixture(table, id));
  CHECK_THROWS_AS(find_fixture(table, "missing"), std::invalid_argument);

  const std::string path = "fixtures_roundtrip.json";
  write_fixtures(table, path);
  const auto reread = read_fixtures(path);
  CHECK(reread.size() == table.size());
  for (const auto& fixture : table) {
    const auto& loaded = find_fixture(reread, fixture.id);
    CHECK((loaded.value - fixture.value).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(loaded.tolerance == fixture.tolerance);
    CHECK(loaded.provenance == fixture.provenance);
  }
  std::filesystem::remove(path);
}
