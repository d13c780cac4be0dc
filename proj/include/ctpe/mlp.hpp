#pragma once

#include <cstdint>

#include "ctpe/value_model.hpp"

namespace ctpe {

/// J = (x - strike)^+ + (T - t) NN(t, x) with a dense 2-hidden-layer network
/// (128 and 64 softplus units). Gradients by hand-written reverse-mode
/// accumulation over the flat parameter vector.
class PayoffResidualMlpModel final : public ValueModel {
 public:
  static constexpr Index kH1 = 128;
  static constexpr Index kH2 = 64;
  // W1, b1, W2, b2, w3, b3
  static constexpr Index kParamCount =
      kH1 * 2 + kH1 + kH2 * kH1 + kH2 + kH2 + 1;

  PayoffResidualMlpModel(double strike, double maturity, std::uint64_t init_seed);

  std::string family() const override { return "payoff_residual_mlp"; }
  Index param_count() const override { return kParamCount; }
  double value(const Vec& theta, double t, const Vec& x) const override;
  void gradient(const Vec& theta, double t, const Vec& x, Vec& out) const override;
  double state_derivative(const Vec& theta, double t, const Vec& x) const override;
  bool terminal_pinned() const override { return true; }
  double terminal_payoff(const Vec& x) const override;

  double strike() const { return strike_; }
  double maturity() const { return maturity_; }

  /// Network output alone (without payoff and time-to-maturity factor).
  double network(const Vec& theta, double t, double x) const;

 private:
  double strike_;
  double maturity_;
};

}  // namespace ctpe
