#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ctpe/types.hpp"

namespace ctpe {
namespace oracles {

/// Standard normal CDF via the complementary error function (<= 1e-12 abs).
double normal_cdf(double z);
double normal_pdf(double z);

struct BsQuote {
  double price = 0.0;
  double delta = 0.0;
};

/// Call price and delta. t >= T degenerates to the payoff and its slope.
BsQuote black_scholes(double t, double x, double strike, double maturity, double r,
                      double q, double sigma);

/// Independent route: risk-neutral expectation of the discounted payoff under
/// the exact log-normal terminal law, by Simpson quadrature in the Gaussian
/// variable.
double bs_price_quadrature(double t, double x, double strike, double maturity, double r,
                           double q, double sigma, int panels = 4000);

struct LqCoefficients {
  double A = 0.0, B = 0.0, C = 0.0;
  Vec as_vec() const {
    Vec v(3);
    v << A, B, C;
    return v;
  }
};

/// Stationary quadratic value coefficients of the discounted OU problem
/// with reward x^2/2 + q x:
///   A = 1/(rho + 2a), B = (a m A + q)/(rho + a), C = (a m B + sigma^2 A / 2)/rho.
LqCoefficients lq_coefficients(double a, double mean, double sigma, double rho, double q);

/// Parameter-iterate moments of the conventional-test online rule on the
/// Brownian LQ problem (a = 0, q = 0, sigma = 1, X_0 = 0):
///   mean = (2 theta0 rho^2 e^{-rho t} + 1 - e^{-rho t}) / (2 rho^2)
///   var  = (e^{-2 rho t} - 1 + rho t) / (4 rho^4)
struct ThetaMoments {
  double mean = 0.0;
  double variance = 0.0;
};
ThetaMoments ctd0_theta_moments_bm_lq(double theta0, double rho, double t);

// --- Closed forms behind the worked examples --------------------------------

/// <M^theta>_1 of the affine family on Brownian state: theta^2/3 + theta + 1.
double example1_qv(double theta);
/// Expected QV of the three-parameter quadratic family (reward -1 case).
double example2_qv(double theta0, double theta1);
/// Continuous value-error integral of the cubic family: 1/2 - 2 theta + 15 theta^2 / 4.
double example3_msve(double theta);
/// Its loss-function counterpart (adds the reward-to-go variance constant).
double example3_ml(double theta);
/// Moment integrands / value errors of the two exponential families.
double example4_ctd0_moment(double theta);
double example4_ctd1_moment(double theta);
double example4_msve(double theta);
double example5_msve(double theta);
/// Constant-test moment of the scaled exponential family: (theta+1)^2 + 1.
double example5_constant_test_moment(double theta);

// --- Numeric machinery -------------------------------------------------------

struct OracleValue {
  Vec value;
  enum class Provenance { ClosedForm, NumericBruteforce } provenance =
      Provenance::ClosedForm;
  double tolerance = 0.0;

  double scalar() const { return value(0); }
};

/// Coarse grid scan over a box (1-3 dims) followed by golden-section
/// coordinate refinements. Throws std::domain_error when the minimum sits on
/// the boundary (wrong bounds).
OracleValue bruteforce_minimize(const std::function<double(const Vec&)>& f, Vec lo,
                                Vec hi, Index grid_n, int refinements);

/// Bisection root of a continuous scalar function on [lo, hi] (sign change
/// required).
double bisect_root(const std::function<double(double)>& f, double lo, double hi,
                   double tol = 1e-12);

struct RateFit {
  std::vector<double> mesh_sizes;
  std::vector<double> errors;
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

/// Least-squares slope of log(error) against log(dt).
RateFit rate_fit(const std::vector<std::pair<double, double>>& mesh_errors);

/// Tabulated converging points of the worked examples, keyed by example id.
OracleValue analytic_minimizer(const std::string& example_id);

// --- Fixtures -----------------------------------------------------------------

struct Fixture {
  std::string id;
  Vec value;
  double tolerance = 0.0;
  std::string provenance;
};

/// All oracle targets, recomputed from scratch (closed forms, root finding,
/// quadrature, brute force). Deterministic.
std::vector<Fixture> fixture_table();

const Fixture& find_fixture(const std::vector<Fixture>& table, const std::string& id);

void write_fixtures(const std::vector<Fixture>& table, const std::string& path);
std::vector<Fixture> read_fixtures(const std::string& path);

}  // namespace oracles
}  // namespace ctpe
