#include "ctpe/mlp.hpp"

#include <cmath>
#include <random>

namespace ctpe {

namespace {

using V1 = Eigen::Matrix<double, PayoffResidualMlpModel::kH1, 1>;
using V2 = Eigen::Matrix<double, PayoffResidualMlpModel::kH2, 1>;
using MapW1 = Eigen::Map<const Eigen::Matrix<double, PayoffResidualMlpModel::kH1, 2>>;
using MapW2 = Eigen::Map<const Eigen::Matrix<double, PayoffResidualMlpModel::kH2,
                                             PayoffResidualMlpModel::kH1>>;
using MapV1 = Eigen::Map<const V1>;
using MapV2 = Eigen::Map<const V2>;

constexpr Index kH1 = PayoffResidualMlpModel::kH1;
constexpr Index kH2 = PayoffResidualMlpModel::kH2;
constexpr Index kOffW1 = 0;
constexpr Index kOffB1 = kOffW1 + kH1 * 2;
constexpr Index kOffW2 = kOffB1 + kH1;
constexpr Index kOffB2 = kOffW2 + kH2 * kH1;
constexpr Index kOffW3 = kOffB2 + kH2;
constexpr Index kOffB3 = kOffW3 + kH2;

inline double softplus(double z) {
  if (z > 30.0) return z;
  if (z < -30.0) return std::exp(z);
  return std::log1p(std::exp(z));
}

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct Forward {
  Eigen::Vector2d input;
  V1 z1, a1;
  V2 z2, a2;
  double nn = 0.0;
};

void run_forward(const Vec& theta, double t, double x, Forward& f) {
  MapW1 W1(theta.data() + kOffW1);
  MapV1 b1(theta.data() + kOffB1);
  MapW2 W2(theta.data() + kOffW2);
  MapV2 b2(theta.data() + kOffB2);
  MapV2 w3(theta.data() + kOffW3);
  const double b3 = theta(kOffB3);

  f.input << t, x;
  f.z1.noalias() = W1 * f.input;
  f.z1 += b1;
  for (Index i = 0; i < kH1; ++i) f.a1(i) = softplus(f.z1(i));
  f.z2.noalias() = W2 * f.a1;
  f.z2 += b2;
  for (Index i = 0; i < kH2; ++i) f.a2(i) = softplus(f.z2(i));
  f.nn = w3.dot(f.a2) + b3;
}

}  // namespace

PayoffResidualMlpModel::PayoffResidualMlpModel(double strike, double maturity,
                                               std::uint64_t init_seed)
    : strike_(strike), maturity_(maturity) {
  if (!(maturity > 0.0)) throw std::invalid_argument("mlp: maturity must be positive");
  params = Vec::Zero(kParamCount);
  std::mt19937_64 rng(init_seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double s1 = 1.0 / std::sqrt(2.0);
  const double s2 = 1.0 / std::sqrt(static_cast<double>(kH1));
  const double s3 = 1.0 / std::sqrt(static_cast<double>(kH2));
  for (Index i = kOffW1; i < kOffB1; ++i) params(i) = s1 * u(rng);
  for (Index i = kOffW2; i < kOffB2; ++i) params(i) = s2 * u(rng);
  for (Index i = kOffW3; i < kOffB3; ++i) params(i) = s3 * u(rng);
}

double PayoffResidualMlpModel::terminal_payoff(const Vec& x) const {
  return std::max(x(0) - strike_, 0.0);
}

double PayoffResidualMlpModel::network(const Vec& theta, double t, double x) const {
  Forward f;
  run_forward(theta, t, x, f);
  return f.nn;
}

double PayoffResidualMlpModel::value(const Vec& theta, double t, const Vec& x) const {
  Forward f;
  run_forward(theta, t, x(0), f);
  return std::max(x(0) - strike_, 0.0) + (maturity_ - t) * f.nn;
}

void PayoffResidualMlpModel::gradient(const Vec& theta, double t, const Vec& x,
                                      Vec& out) const {
  Forward f;
  run_forward(theta, t, x(0), f);
  MapW2 W2(theta.data() + kOffW2);
  MapV2 w3(theta.data() + kOffW3);

  out.resize(kParamCount);
  const double scale = maturity_ - t;  // dJ/dnn

  // Output layer.
  for (Index i = 0; i < kH2; ++i) out(kOffW3 + i) = scale * f.a2(i);
  out(kOffB3) = scale;

  // Hidden layer 2: delta2 = w3 .* sigmoid(z2).
  V2 delta2;
  for (Index i = 0; i < kH2; ++i) delta2(i) = scale * w3(i) * sigmoid(f.z2(i));
  Eigen::Map<Eigen::Matrix<double, kH2, kH1>> gW2(out.data() + kOffW2);
  gW2.noalias() = delta2 * f.a1.transpose();
  for (Index i = 0; i < kH2; ++i) out(kOffB2 + i) = delta2(i);

  // Hidden layer 1: delta1 = (W2' delta2) .* sigmoid(z1).
  V1 delta1;
  delta1.noalias() = W2.transpose() * delta2;
  for (Index i = 0; i < kH1; ++i) delta1(i) *= sigmoid(f.z1(i));
  Eigen::Map<Eigen::Matrix<double, kH1, 2>> gW1(out.data() + kOffW1);
  gW1.noalias() = delta1 * f.input.transpose();
  for (Index i = 0; i < kH1; ++i) out(kOffB1 + i) = delta1(i);
}

double PayoffResidualMlpModel::state_derivative(const Vec& theta, double t,
                                                const Vec& x) const {
  Forward f;
  run_forward(theta, t, x(0), f);
  MapW1 W1(theta.data() + kOffW1);
  MapW2 W2(theta.data() + kOffW2);
  MapV2 w3(theta.data() + kOffW3);

  V2 delta2;
  for (Index i = 0; i < kH2; ++i) delta2(i) = w3(i) * sigmoid(f.z2(i));
  V1 delta1;
  delta1.noalias() = W2.transpose() * delta2;
  double dnn_dx = 0.0;
  for (Index i = 0; i < kH1; ++i) dnn_dx += delta1(i) * sigmoid(f.z1(i)) * W1(i, 1);

  const double payoff_slope = x(0) > strike_ ? 1.0 : 0.0;
  return payoff_slope + (maturity_ - t) * dnn_dx;
}

}  // namespace ctpe
