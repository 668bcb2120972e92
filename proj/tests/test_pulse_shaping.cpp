#include "dtc/pulse_shaping.hpp"

#include <gtest/gtest.h>

using namespace dtc;

namespace {

double max_diff_padded(const Waveform& a, const Waveform& b) {
  const std::size_t n = std::max(a.size(), b.size());
  double e = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = i < a.size() ? a.samples[i] : 0.0, y = i < b.size() ? b.samples[i] : 0.0;
    e = std::max(e, std::abs(x - y));
  }
  return e;
}

Waveform ramp_pulse() {
  Waveform w = slepian_unit_pulse({});
  for (std::size_t i = 0; i < w.size(); ++i) w.samples[i] *= 0.1 * (1 + 0.3 * std::sin(0.2 * i));
  return w;
}

}  // namespace

TEST(PulseShaping, DefaultPulseGeometry) {
  auto w = slepian_unit_pulse({});
  EXPECT_DOUBLE_EQ(w.duration(), 52.0);
  EXPECT_EQ(w.size(), 105u);
  EXPECT_EQ(w.pad_samples, 4);
  EXPECT_EQ(w.samples.front(), 0.0);
  EXPECT_EQ(w.samples.back(), 0.0);
  EXPECT_DOUBLE_EQ(w.peak(), 1.0);
  for (int i = 0; i <= 4; ++i) {
    EXPECT_EQ(w.samples[i], 0.0);
    EXPECT_EQ(w.samples[w.size() - 1 - i], 0.0);
  }
}

TEST(PulseShaping, SymmetricUnimodalNonNegative) {
  auto w = slepian_unit_pulse({});
  const std::size_t n = w.size();
  for (std::size_t i = 0; i < n; ++i) {
    EXPECT_GE(w.samples[i], 0.0);
    EXPECT_NEAR(w.samples[i], w.samples[n - 1 - i], 1e-12);
    if (i > 0 && i <= n / 2) {
      EXPECT_GE(w.samples[i], w.samples[i - 1]);
    }
  }
}

TEST(PulseShaping, TimeRescalingInvariance) {
  SlepianConfig a, b;
  a.pad = b.pad = 0;
  b.duration = 2 * a.duration;
  auto wa = slepian_unit_pulse(a), wb = slepian_unit_pulse(b);
  ASSERT_EQ(wb.size(), 2 * wa.size() - 1);
  for (std::size_t i = 0; i < wa.size(); ++i) EXPECT_NEAR(wa.samples[i], wb.samples[2 * i], 1e-12);
}

TEST(PulseShaping, ShapeEndpoints) {
  SlepianConfig c;
  EXPECT_EQ(slepian_shape(0.0, c), 0.0);
  EXPECT_EQ(slepian_shape(1.0, c), 0.0);
  EXPECT_NEAR(slepian_shape(0.5, c), 1.0, 1e-12);
  EXPECT_NEAR(slepian_shape(1e-9, c), 0.0, 1e-6);
}

TEST(PulseShaping, InvalidConfigRejected) {
  SlepianConfig c;
  c.duration = 0;
  EXPECT_THROW(slepian_unit_pulse(c), ConfigError);
  c = {};
  c.theta_final = c.theta_initial;
  EXPECT_THROW(slepian_unit_pulse(c), ConfigError);
}

TEST(PulseShaping, ControlPointSplineReproducesPulse) {
  SlepianConfig c;
  auto cp = slepian_control_points(c);
  ASSERT_EQ(cp.size(), 20u);
  auto ws = waveform_from_control_points(cp, c);
  auto w = slepian_unit_pulse(c);
  ASSERT_EQ(ws.size(), w.size());
  EXPECT_LT(max_diff_padded(ws, w), 0.02);
  EXPECT_EQ(ws.samples[w.pad_samples], 0.0);
}

TEST(PulseShaping, SplineInterpolatesKnots) {
  std::vector<double> x{0, 1, 2.5, 4}, y{0.3, -1, 2, 0.5};
  auto v = natural_cubic_spline(x, y, x);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(v[i], y[i], 1e-12);
  // a straight line is reproduced exactly
  auto l = natural_cubic_spline({0, 1, 3}, {1, 3, 7}, {0.5, 2.2});
  EXPECT_NEAR(l[0], 2.0, 1e-12);
  EXPECT_NEAR(l[1], 5.4, 1e-12);
}

TEST(PulseShaping, EmptyModelIsIdentity) {
  auto w = ramp_pulse();
  DistortionModel none;
  EXPECT_EQ(max_diff_padded(apply_distortion(w, none), w), 0.0);
  EXPECT_EQ(max_diff_padded(predistort(w, none), w), 0.0);
}

TEST(PulseShaping, StepResponseMatchesClosedForm) {
  for (const auto& m : {DistortionModel::short_term(), DistortionModel::long_term()}) {
    Waveform step;
    step.samples.assign(4000, 1.0);
    auto y = apply_distortion(step, m, 0);
    for (std::size_t n = 0; n < step.size(); n += 37) EXPECT_NEAR(y.samples[n], m.step_response(n * step.dt), 1e-9);
  }
}

TEST(PulseShaping, ImpulseResponseIsStepDifference) {
  auto m = DistortionModel::short_term();
  Waveform d;
  d.samples.assign(2000, 0.0);
  d.samples[0] = 1.0;
  auto y = apply_distortion(d, m, 0);
  EXPECT_NEAR(y.samples[0], m.step_response(0), 1e-12);
  for (std::size_t n = 1; n < d.size(); ++n)
    EXPECT_NEAR(y.samples[n], m.step_response(n * d.dt) - m.step_response((n - 1) * d.dt), 1e-12);
}

TEST(PulseShaping, Linearity) {
  auto m = DistortionModel::short_term();
  auto a = ramp_pulse();
  auto b = slepian_unit_pulse({});
  Waveform c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.samples[i] = 2.5 * a.samples[i] - 0.7 * b.samples[i];
  auto ya = apply_distortion(a, m), yb = apply_distortion(b, m), yc = apply_distortion(c, m);
  for (std::size_t i = 0; i < yc.size(); ++i) EXPECT_NEAR(yc.samples[i], 2.5 * ya.samples[i] - 0.7 * yb.samples[i], 1e-12);
}

TEST(PulseShaping, RoundTripShortTerm) {
  auto m = DistortionModel::short_term();
  auto w = ramp_pulse();
  EXPECT_LT(max_diff_padded(apply_distortion(predistort(w, m), m, 0), w), 1e-12);
  EXPECT_LT(max_diff_padded(predistort(apply_distortion(w, m), m, 0), w), 1e-12);
}

TEST(PulseShaping, RoundTripLongTerm) {
  auto m = DistortionModel::long_term();
  auto w = ramp_pulse();
  auto p = predistort(w, m, 2.1e6);
  EXPECT_GE(p.duration(), 2e6);
  EXPECT_LT(max_diff_padded(apply_distortion(p, m, 0), w), 1e-10);
  EXPECT_LT(max_diff_padded(predistort(apply_distortion(w, m, 2.1e6), m, 0), w), 1e-10);
  // the correction dies away over the tail
  EXPECT_LT(std::abs(p.samples.back()), 1e-3 * w.peak());
}

TEST(PulseShaping, PredistortionCompensatesDroop) {
  // settling overshoot terms (a > 0) are pre-compensated by a smaller input
  auto m = DistortionModel::long_term();
  Waveform step;
  step.samples.assign(200, 1.0);
  auto p = predistort(step, m, 0);
  EXPECT_NEAR(p.samples[0], 1.0 / m.step_response(0), 1e-12);
}

TEST(PulseShaping, NonInvertibleModelRejected) {
  DistortionModel bad{{{-1.5, 100.0}}};
  EXPECT_FALSE(bad.invertible());
  EXPECT_THROW(predistort(ramp_pulse(), bad), ConfigError);
  DistortionModel late{{{-2.0, 50.0}, {1.5, 10.0}}};
  EXPECT_GT(late.step_response(0), 0.0);
  EXPECT_FALSE(late.invertible());
  DistortionModel neg_tau{{{0.1, -3.0}}};
  EXPECT_THROW(apply_distortion(ramp_pulse(), neg_tau), ConfigError);
  EXPECT_TRUE(DistortionModel::short_term().invertible());
  EXPECT_TRUE(DistortionModel::long_term().invertible());
}

TEST(PulseShaping, TransientPhaseLimits) {
  auto m = DistortionModel::short_term();
  std::vector<double> t{0, 10, 100, 1000};
  for (double v : transient_phase(0.0, m, 1.0, t)) EXPECT_EQ(v, 0.0);
  for (double v : transient_phase(48.0, m, 0.0, t)) EXPECT_EQ(v, 0.0);
  EXPECT_NEAR(transient_phase(48.0, m, 1.0, {1e7})[0], 0.0, 1e-15);
  EXPECT_NEAR(transient_phase(48.0, DistortionModel{}, 1.0, t)[2], 0.0, 0.0);
  // small-pulse limit: phi0 * tau_p * sum a_k / tau_k e^{-t/tau_k}
  const double v = transient_phase(1e-3, m, 2.0, {50.0})[0];
  double lin = 0;
  for (const auto& k : m.terms) lin += 2.0 * 1e-3 * k.a / k.tau_ns * std::exp(-50.0 / k.tau_ns);
  EXPECT_NEAR(v, lin, 1e-4 * std::abs(lin));
  EXPECT_THROW(transient_phase(48.0, m, std::nan(""), t), ConfigError);
}

TEST(PulseShaping, TransientFitRecoversParameters) {
  auto truth = DistortionModel::short_term();
  std::vector<double> t;
  for (double x = 0; x <= 3000; x += 10) t.push_back(x);
  const double phi0 = 30.0;
  auto y = transient_phase(48.0, truth, phi0, t);
  DistortionModel guess{{{-0.008, 450.0}, {-0.018, 110.0}}};
  auto f = fit_transient_phase(t, y, 48.0, phi0, guess);
  ASSERT_EQ(f.model.terms.size(), 2u);
  for (int k = 0; k < 2; ++k) {
    EXPECT_NEAR(f.model.terms[k].a, truth.terms[k].a, 0.1 * std::abs(truth.terms[k].a)) << k;
    EXPECT_NEAR(f.model.terms[k].tau_ns, truth.terms[k].tau_ns, 0.1 * truth.terms[k].tau_ns) << k;
  }
  EXPECT_LT(f.rms, 1e-6);
}
