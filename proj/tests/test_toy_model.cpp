#include "dtc/toy_model.hpp"

#include <gtest/gtest.h>

using namespace dtc;

namespace {
const ToyParams& reference_toy() {
  static const ToyParams t = derive_toy_params(CircuitParams::reference_device(), 0.309);
  return t;
}
}  // namespace

TEST(ToyModel, IdleEstimate) {
  EXPECT_NEAR(idle_point_estimate(0.216), 0.319, 1e-3);
  EXPECT_DOUBLE_EQ(idle_point_estimate(0.0), 0.25);
  EXPECT_THROW(idle_point_estimate(1.0), DomainError);
  EXPECT_THROW(idle_point_estimate(-0.1), DomainError);
}

TEST(ToyModel, IdleEstimateIsExactRoot) {
  for (double a : {0.0, 0.05, 0.1, 0.216, 0.3, 0.45}) {
    const double phx = kTwoPi * idle_point_estimate(a);
    const double pm = -std::asin(a);
    EXPECT_LT(std::abs(std::sin(pm) + a * std::sin(2 * pm + phx)), 1e-12) << a;
    EXPECT_NEAR(2 * pm + phx, kPi / 2, 1e-12);
  }
}

TEST(ToyModel, ConstrainedMinimumInequality) {
  for (double a = 0.0; a <= 0.5 + 1e-12; a += 0.05)
    for (double f = 0.0; f <= 0.5 + 1e-12; f += 0.025) {
      const double m = m_mode_minimum(a, kTwoPi * f);
      EXPECT_GE(std::cos(m), std::sqrt(1 - a * a) - 1e-12) << a << " " << f;
    }
}

TEST(ToyModel, CouplingScale) {
  const auto& t = reference_toy();
  EXPECT_GT(t.g1p, 0.1);
  EXPECT_LT(t.g1p, 0.2);
  EXPECT_GT(t.g2p, 0.1);
  EXPECT_LT(t.g2p, 0.2);
  EXPECT_NEAR(t.alpha, 0.216, 1e-3);
}

TEST(ToyModel, CouplingRatio) {
  const auto& t = reference_toy();
  const auto& c = CircuitParams::reference_device().cap;
  const double cc = 0.5 * (c(2, 2) + c(3, 3)), cg = c(0, 2), c34 = c(2, 3);
  const double ratio = std::sqrt(t.omega_p / t.omega_m) * std::sqrt((cc + 2 * c34 + cg) / (cc + cg));
  EXPECT_NEAR(t.g1p / t.g1m, ratio, 1e-12);
}

TEST(ToyModel, EqualModesGiveEqualCouplings) {
  CircuitParams p = CircuitParams::reference_device();
  p.cap(2, 3) = p.cap(3, 2) = 0;
  auto t = derive_toy_params(p);
  EXPECT_DOUBLE_EQ(t.factor1p, t.factor1m);
  EXPECT_DOUBLE_EQ(t.factor2p, t.factor2m);
}

TEST(ToyModel, EffectiveCouplingLimits) {
  // m-mode couplings off: p-mode term only
  const double g = effective_coupling(0.1, 0.12, 0.0, 0.0, -1.0, -0.8, -0.5, -0.3);
  EXPECT_DOUBLE_EQ(g, 0.5 * 0.1 * 0.12 * (1 / -1.0 + 1 / -0.8));
  EXPECT_THROW(effective_coupling(0.1, 0.1, 0.1, 0.1, 0.0, -1, -1, -1), DomainError);
}

TEST(ToyModel, EffectiveCouplingAntisymmetry) {
  const double a = effective_coupling(0.1, 0.1, 0.1, 0.1, -0.9, -0.7, -0.4, -0.2);
  const double b = effective_coupling(0.1, 0.1, 0.1, 0.1, -0.4, -0.2, -0.9, -0.7);
  EXPECT_NEAR(a, -b, 1e-15);
}

TEST(ToyModel, SignChangeWhenModesCross) {
  // omega_m swept through omega_p with equal couplings
  const double w1 = 4.3, w2 = 4.8, wp = 6.5;
  const double lo = effective_coupling(0.1, 0.1, 0.1, 0.1, w1 - wp, w2 - wp, w1 - (wp - 0.3), w2 - (wp - 0.3));
  const double hi = effective_coupling(0.1, 0.1, 0.1, 0.1, w1 - wp, w2 - wp, w1 - (wp + 0.3), w2 - (wp + 0.3));
  EXPECT_LT(lo * hi, 0.0);
  EXPECT_NEAR(effective_coupling(0.1, 0.1, 0.1, 0.1, w1 - wp, w2 - wp, w1 - wp, w2 - wp), 0.0, 1e-15);
}

TEST(ToyModel, EffectiveCouplingVanishesNearIdle) {
  // zero crossing of g_eff within 0.02 of the circuit idle point
  const auto& t = reference_toy();
  const double a = effective_coupling(t, 0.289).g_eff, b = effective_coupling(t, 0.329).g_eff;
  EXPECT_LT(a * b, 0.0);
  EXPECT_LT(std::abs(effective_coupling(t, 0.309).g_eff), 5e-3);
}

TEST(ToyModel, PotentialDifferenceAtZeroAlpha) {
  CircuitParams p = CircuitParams::reference_device();
  p.ic(4) = 1e-12;
  auto s = potential_surface(p, 0.309, 21);
  const auto ej = p.ej_ghz();
  const double e = 0.5 * (ej(2) + ej(3));
  for (std::size_t i = 0; i < s.phi_p.size(); ++i)
    for (std::size_t j = 0; j < s.phi_m.size(); ++j) {
      const double x = s.phi_p[i], y = s.phi_m[j];
      const double expect = -2 * e * (std::cos(x) * std::cos(y) - std::cos(x) - std::cos(y) + 1);
      EXPECT_NEAR(s.diff(i, j), expect, 1e-9);
    }
}

TEST(ToyModel, PotentialDifferenceSmallNearMinimum) {
  const auto p = CircuitParams::reference_device();
  auto s = potential_surface(p, 0.309, 61);
  const double e = 0.5 * (p.ej_ghz()(2) + p.ej_ghz()(3));
  EXPECT_LT(s.min_residual, 1e-10);
  for (std::size_t i = 0; i < s.phi_p.size(); ++i)
    for (std::size_t j = 0; j < s.phi_m.size(); ++j)
      if (std::abs(s.phi_p[i]) < 0.2 && std::abs(s.phi_m[j] - s.min_phi_m) < 0.2) {
        EXPECT_LT(std::abs(s.diff(i, j)), 0.01 * e);
      }
}
