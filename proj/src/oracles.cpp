#include "ctpe/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "json.hpp"

namespace ctpe {
namespace oracles {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double normal_pdf(double z) {
  static const double kInvSqrt2Pi = 0.3989422804014326779;
  return kInvSqrt2Pi * std::exp(-0.5 * z * z);
}

BsQuote black_scholes(double t, double x, double strike, double maturity, double r,
                      double q, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("black_scholes: sigma > 0");
  if (!(x > 0.0)) throw std::invalid_argument("black_scholes: x > 0");
  BsQuote quote;
  const double tau = maturity - t;
  if (tau <= 0.0) {
    quote.price = std::max(x - strike, 0.0);
    quote.delta = x > strike ? 1.0 : 0.0;
    return quote;
  }
  const double vol = sigma * std::sqrt(tau);
  const double d_plus =
      (std::log(x / strike) + (r - q + 0.5 * sigma * sigma) * tau) / vol;
  const double d_minus = d_plus - vol;
  quote.price = std::exp(-r * tau) * (std::exp((r - q) * tau) * x * normal_cdf(d_plus) -
                                      strike * normal_cdf(d_minus));
  quote.delta = std::exp(-q * tau) * normal_cdf(d_plus);
  return quote;
}

double bs_price_quadrature(double t, double x, double strike, double maturity, double r,
                           double q, double sigma, int panels) {
  const double tau = maturity - t;
  if (tau <= 0.0) return std::max(x - strike, 0.0);
  const double drift = (r - q - 0.5 * sigma * sigma) * tau;
  const double vol = sigma * std::sqrt(tau);
  auto payoff_density = [&](double z) {
    const double xt = x * std::exp(drift + vol * z);
    return std::max(xt - strike, 0.0) * normal_pdf(z);
  };
  // Payoff vanishes below z0; integrate [max(z0, -10), 10] by Simpson.
  const double z0 = (std::log(strike / x) - drift) / vol;
  const double lo = std::max(z0, -10.0);
  const double hi = 10.0;
  if (lo >= hi) return 0.0;
  const int n = 2 * std::max(1, panels / 2);
  const double h = (hi - lo) / n;
  double acc = payoff_density(lo) + payoff_density(hi);
  for (int i = 1; i < n; ++i)
    acc += payoff_density(lo + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
  return std::exp(-r * tau) * acc * h / 3.0;
}

LqCoefficients lq_coefficients(double a, double mean, double sigma, double rho, double q) {
  if (!(rho > 0.0) || !(rho + 2.0 * a > 0.0) || !(rho + a > 0.0))
    throw std::domain_error("lq_coefficients: need rho > 0, rho + 2a > 0, rho + a > 0");
  LqCoefficients c;
  c.A = 1.0 / (rho + 2.0 * a);
  c.B = (a * mean * c.A + q) / (rho + a);
  c.C = (a * mean * c.B + 0.5 * sigma * sigma * c.A) / rho;
  return c;
}

ThetaMoments ctd0_theta_moments_bm_lq(double theta0, double rho, double t) {
  if (!(rho > 0.0) || t < 0.0)
    throw std::domain_error("ctd0_theta_moments: need rho > 0, t >= 0");
  ThetaMoments m;
  const double e = std::exp(-rho * t);
  m.mean = (2.0 * theta0 * rho * rho * e + 1.0 - e) / (2.0 * rho * rho);
  m.variance = (std::exp(-2.0 * rho * t) - 1.0 + rho * t) / (4.0 * std::pow(rho, 4));
  return m;
}

double example1_qv(double theta) { return theta * theta / 3.0 + theta + 1.0; }

double example2_qv(double theta0, double theta1) {
  return 4.0 * (theta0 * theta0 / 12.0 + theta0 / 3.0 + 0.5) + theta1 * theta1 / 3.0;
}

double example3_msve(double theta) {
  return 0.5 - 2.0 * theta + 15.0 * theta * theta / 4.0;
}

double example3_ml(double theta) {
  return 0.5 * (1.0 - 2.0 * theta + 15.0 * theta * theta / 4.0);
}

namespace {

double simpson(const std::function<double(double)>& f, double lo, double hi, int n) {
  n = 2 * std::max(1, n / 2);
  const double h = (hi - lo) / n;
  double acc = f(lo) + f(hi);
  for (int i = 1; i < n; ++i) acc += f(lo + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

}  // namespace

double example4_ctd0_moment(double theta) {
  if (std::abs(theta) < 1e-3)
    return simpson(
        [theta](double t) {
          return (1.0 - t) * (1.0 + t * theta) * std::exp((2.0 + t * theta) * theta);
        },
        0.0, 1.0, 2000);
  const double t2 = theta * theta;
  return std::exp(2.0 * theta) *
         (2.0 - theta + t2 - t2 * theta + std::exp(t2) * (-2.0 + theta + t2)) /
         std::pow(theta, 5);
}

double example4_ctd1_moment(double theta) {
  if (std::abs(theta) < 1e-3)
    return simpson(
        [theta](double tau) {
          return (1.0 - tau) * (1.0 - tau) * (1.0 + tau * theta) *
                 std::exp(theta * theta * tau + 2.0 * theta);
        },
        0.0, 1.0, 2000);
  const double t2 = theta * theta;
  const double bracket = 6.0 + 2.0 * std::exp(t2) * (-3.0 + theta + t2) -
                         (theta - 1.0) * theta * (-2.0 + 2.0 * theta + t2 * theta);
  return std::exp(2.0 * theta) * bracket / std::pow(theta, 7);
}

double example4_msve(double theta) {
  if (std::abs(theta) < 1e-3)
    return simpson(
        [theta](double t) {
          return (1.0 - t) * (1.0 - t) * std::exp(theta * theta * t + 2.0 * theta);
        },
        0.0, 1.0, 2000);
  const double t2 = theta * theta;
  return -std::exp(2.0 * theta) * (2.0 - 2.0 * std::exp(t2) + 2.0 * t2 + t2 * t2) /
         std::pow(theta, 6);
}

double example5_msve(double theta) {
  const double scale = (theta + 1.0) * (theta + 1.0) + 1.0;
  double base;
  if (std::abs(theta) < 1e-3) {
    base = simpson(
        [theta](double t) {
          return (1.0 - t) * (1.0 - t) * std::exp(theta * theta * t);
        },
        0.0, 1.0, 2000);
  } else {
    const double t2 = theta * theta;
    base = -(2.0 - 2.0 * std::exp(t2) + 2.0 * t2 + t2 * t2) / std::pow(theta, 6);
  }
  return base * scale * scale;
}

double example5_constant_test_moment(double theta) {
  return (theta + 1.0) * (theta + 1.0) + 1.0;
}

namespace {

double golden_section(const std::function<double(double)>& f, double lo, double hi,
                      int iters) {
  static const double kPhi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - kPhi * (b - a);
  double d = a + kPhi * (b - a);
  double fc = f(c), fd = f(d);
  for (int i = 0; i < iters; ++i) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - kPhi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kPhi * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace

OracleValue bruteforce_minimize(const std::function<double(const Vec&)>& f, Vec lo,
                                Vec hi, Index grid_n, int refinements) {
  const Index dims = lo.size();
  if (dims < 1 || dims > 3) throw std::invalid_argument("bruteforce: 1-3 dims");
  if (hi.size() != dims || grid_n < 3)
    throw std::invalid_argument("bruteforce: bad bounds or grid");

  // Coarse scan.
  std::vector<Index> best(static_cast<std::size_t>(dims), 0);
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<Index> idx(static_cast<std::size_t>(dims), 0);
  Vec point(dims);
  const auto total = static_cast<std::size_t>(std::pow(static_cast<double>(grid_n), dims));
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rem = flat;
    for (Index d = 0; d < dims; ++d) {
      idx[static_cast<std::size_t>(d)] = static_cast<Index>(rem % grid_n);
      rem /= static_cast<std::size_t>(grid_n);
      point(d) = lo(d) + (hi(d) - lo(d)) * static_cast<double>(idx[static_cast<std::size_t>(d)]) /
                             static_cast<double>(grid_n - 1);
    }
    const double v = f(point);
    if (!std::isfinite(v)) throw std::domain_error("bruteforce: non-finite value on grid");
    if (v < best_val) {
      best_val = v;
      best = idx;
    }
  }
  for (Index d = 0; d < dims; ++d)
    if (best[static_cast<std::size_t>(d)] == 0 ||
        best[static_cast<std::size_t>(d)] == grid_n - 1)
      throw std::domain_error("bruteforce: minimum on boundary, widen the bounds");

  Vec center(dims), width(dims);
  for (Index d = 0; d < dims; ++d) {
    const double h = (hi(d) - lo(d)) / static_cast<double>(grid_n - 1);
    center(d) = lo(d) + h * static_cast<double>(best[static_cast<std::size_t>(d)]);
    width(d) = h;
  }

  refinements = std::max(2, refinements);
  for (int r = 0; r < refinements; ++r) {
    for (Index d = 0; d < dims; ++d) {
      Vec probe = center;
      const double m = golden_section(
          [&](double v) {
            probe(d) = v;
            return f(probe);
          },
          center(d) - width(d), center(d) + width(d), 60);
      center(d) = m;
      probe(d) = m;
    }
    width *= 0.25;
  }

  OracleValue out;
  out.value = center;
  out.provenance = OracleValue::Provenance::NumericBruteforce;
  out.tolerance = width.maxCoeff();
  return out;
}

double bisect_root(const std::function<double(double)>& f, double lo, double hi,
                   double tol) {
  double flo = f(lo), fhi = f(hi);
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if ((flo > 0.0) == (fhi > 0.0))
    throw std::invalid_argument("bisect_root: no sign change on bracket");
  for (int i = 0; i < 200 && hi - lo > tol; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if (fm == 0.0) return mid;
    if ((fm > 0.0) == (flo > 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

RateFit rate_fit(const std::vector<std::pair<double, double>>& mesh_errors) {
  if (mesh_errors.size() < 3) throw std::invalid_argument("rate_fit: need >= 3 points");
  RateFit fit;
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  const double n = static_cast<double>(mesh_errors.size());
  for (const auto& [dt, err] : mesh_errors) {
    if (!(dt > 0.0) || !(err > 0.0))
      throw std::invalid_argument("rate_fit: mesh sizes and errors must be positive");
    fit.mesh_sizes.push_back(dt);
    fit.errors.push_back(err);
    const double x = std::log(dt), y = std::log(err);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    syy += y * y;
  }
  const double denom = n * sxx - sx * sx;
  fit.slope = (n * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.slope * sx) / n;
  double ss_res = 0.0;
  const double mean_y = sy / n;
  double ss_tot = 0.0;
  for (std::size_t i = 0; i < fit.mesh_sizes.size(); ++i) {
    const double y = std::log(fit.errors[i]);
    const double pred = fit.intercept + fit.slope * std::log(fit.mesh_sizes[i]);
    ss_res += (y - pred) * (y - pred);
    ss_tot += (y - mean_y) * (y - mean_y);
  }
  fit.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  return fit;
}

namespace {

OracleValue closed_form(std::initializer_list<double> values) {
  OracleValue v;
  v.value = Vec(static_cast<Index>(values.size()));
  Index i = 0;
  for (double x : values) v.value(i++) = x;
  v.provenance = OracleValue::Provenance::ClosedForm;
  return v;
}

}  // namespace

OracleValue analytic_minimizer(const std::string& example_id) {
  static const std::map<std::string, OracleValue> table = {
      {"ex1_mstde", closed_form({-1.5})},
      {"ex1_true", closed_form({0.0})},
      {"ex2_mstde", closed_form({-2.0, 0.0, 0.0})},
      {"ex2_true", closed_form({0.0, 0.0, 0.0})},
      {"ex3_ml", closed_form({4.0 / 15.0})},
      {"ex3_moment", closed_form({0.0})},
      {"ex4_ctd0", closed_form({-1.83923})},
      {"ex4_ctd1", closed_form({-2.12568})},
      {"ex4_ml", closed_form({-2.12568})},
      {"ex5_ml", closed_form({-0.875301})},
      {"ex5_mspbe", closed_form({-1.0})},
      {"bm_lq_theta_true", closed_form({2.0 / 9.0})},
  };
  const auto it = table.find(example_id);
  if (it == table.end())
    throw std::invalid_argument("analytic_minimizer: unknown id " + example_id);
  return it->second;
}

std::vector<Fixture> fixture_table() {
  std::vector<Fixture> out;
  auto add = [&](std::string id, Vec value, double tol, std::string prov) {
    out.push_back({std::move(id), std::move(value), tol, std::move(prov)});
  };
  auto vec1 = [](double v) { return Vec::Constant(1, v); };

  add("ex1_mstde", vec1(-1.5), 0.05, "closed_form: argmin of theta^2/3 + theta + 1");
  add("ex1_true", vec1(0.0), 0.05, "closed_form: family contains the truth");
  Vec ex2(3);
  ex2 << -2.0, 0.0, 0.0;
  add("ex2_mstde", ex2, 0.1, "closed_form: argmin of the expected quadratic variation");
  add("ex2_true", Vec::Zero(3), 0.1, "closed_form: family contains the truth");
  add("ex3_ml", vec1(4.0 / 15.0), 0.02,
      "closed_form: argmin of 1/2 - 2 theta + 15 theta^2/4");
  add("ex3_moment", vec1(0.0), 0.02, "closed_form: unique root of the moment conditions");

  const double ctd0_root = bisect_root(example4_ctd0_moment, -3.0, -1.0, 1e-12);
  add("ex4_ctd0", vec1(ctd0_root), 0.05,
      "root_find: constant-sign bracket of the grad-test moment integral");
  const double ctd1_root = bisect_root(example4_ctd1_moment, -3.0, -1.0, 1e-12);
  add("ex4_ctd1", vec1(ctd1_root), 0.05,
      "root_find: trace-test moment integral");
  const OracleValue ex4ml =
      bruteforce_minimize([](const Vec& th) { return example4_msve(th(0)); },
                          Vec::Constant(1, -4.0), Vec::Constant(1, -0.2), 200, 4);
  add("ex4_ml", ex4ml.value, 0.05, "bruteforce: value-error integral minimizer");
  const OracleValue ex5ml =
      bruteforce_minimize([](const Vec& th) { return example5_msve(th(0)); },
                          Vec::Constant(1, -3.0), Vec::Constant(1, -0.1), 200, 4);
  add("ex5_ml", ex5ml.value, 0.05, "bruteforce: value-error integral minimizer");
  add("ex5_mspbe", vec1(-1.0), 0.05,
      "closed_form: argmin of ((theta+1)^2 + 1)^2 / 2");

  const LqCoefficients lq = lq_coefficients(1.0, 1.0, 0.5, 1.5, 1.0);
  add("lq_abc", lq.as_vec(), 0.02, "closed_form: stationary quadratic value coefficients");
  const LqCoefficients bm = lq_coefficients(0.0, 0.0, 1.0, 1.5, 0.0);
  add("bm_lq_theta_true", vec1(bm.C), 0.05,
      "closed_form: constant term of the Brownian LQ value");

  const BsQuote bs = black_scholes(0.0, 1.0, 1.0, 1.0, 0.01, 0.0, 0.3);
  add("bs_price_t0", vec1(bs.price), 0.01,
      "closed_form; cross-checked by log-normal quadrature to 5e-4");
  add("bs_delta_t0", vec1(bs.delta), 0.05, "closed_form");
  add("option_msve_target", vec1(0.0), 1e-3,
      "definition: value error against the closed form vanishes at the truth");
  add("bm_lq_std_ratio_floor", vec1(2.0), 0.0,
      "acceptance floor: conventional-test iterate variance grows linearly in time "
      "while the tailored test bounds the noise coefficient");
  add("sectional_vs_global_margin", vec1(0.0), 0.0,
      "strict ordering: sectional minus global final value error must be positive");
  add("rate_mstde_slope", vec1(1.0), 0.3,
      "theoretical mesh-rate exponent for a constant running reward");
  add("rate_slope_floor", vec1(0.4), 0.0,
      "acceptance floor from the mesh-rate bounds");
  return out;
}

const Fixture& find_fixture(const std::vector<Fixture>& table, const std::string& id) {
  for (const auto& f : table)
    if (f.id == id) return f;
  throw std::invalid_argument("fixture not found: " + id);
}

void write_fixtures(const std::vector<Fixture>& table, const std::string& path) {
  nlohmann::ordered_json root;
  for (const auto& f : table) {
    nlohmann::ordered_json entry;
    entry["value"] = std::vector<double>(f.value.data(), f.value.data() + f.value.size());
    entry["tolerance"] = f.tolerance;
    entry["provenance"] = f.provenance;
    root[f.id] = entry;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << root.dump(2) << "\n";
}

std::vector<Fixture> read_fixtures(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json root;
  in >> root;
  std::vector<Fixture> out;
  for (const auto& [id, entry] : root.items()) {
    Fixture f;
    f.id = id;
    const auto values = entry.at("value").get<std::vector<double>>();
    f.value = Eigen::Map<const Vec>(values.data(), static_cast<Index>(values.size()));
    f.tolerance = entry.at("tolerance").get<double>();
    f.provenance = entry.at("provenance").get<std::string>();
    out.push_back(std::move(f));
  }
  return out;
}

}  // namespace oracles
}  // namespace ctpe
