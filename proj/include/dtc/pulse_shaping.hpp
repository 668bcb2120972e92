#pragma once

#include "dtc/core.hpp"
#include "dtc/linalg.hpp"

#include <unsupported/Eigen/NonLinearOptimization>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <vector>

namespace dtc {

/// Uniformly sampled flux pulse; amplitude is the excursion in phi_ex / 2pi (or unit-normalised).
struct Waveform {
  std::vector<double> samples;
  double dt = 0.5;          // ns
  int pad_samples = 0;      // zero samples at each end of the synthesized support
  double max_excursion = 1.0;

  std::size_t size() const { return samples.size(); }
  double t(std::size_t i) const { return static_cast<double>(i) * dt; }
  double duration() const { return samples.empty() ? 0.0 : (samples.size() - 1) * dt; }
  double peak() const {
    double p = 0;
    for (double s : samples) p = std::max(p, std::abs(s));
    return p;
  }
  Waveform scaled(double a) const {
    Waveform w = *this;
    for (double& s : w.samples) s *= a;
    w.max_excursion = std::abs(a) * max_excursion;
    return w;
  }
  void validate() const {
    if (!(dt > 0)) throw ConfigError("waveform dt must be > 0");
    for (double s : samples)
      if (!std::isfinite(s)) throw ConfigError("waveform contains non-finite samples");
  }
};

struct DistortionTerm {
  double a = 0;
  double tau_ns = 1;
};

/// Step response 1 + sum_k a_k exp(-t / tau_k).
struct DistortionModel {
  std::vector<DistortionTerm> terms;

  static DistortionModel short_term() { return {{{-0.0104, 603.3}, {-0.0137, 79.45}}}; }
  static DistortionModel long_term() { return {{{0.12, 400.5e3}, {0.038, 71.02e3}, {0.00525, 13.60e3}}}; }

  double step_response(double t) const {
    double s = 1.0;
    for (const auto& k : terms) s += k.a * std::exp(-t / k.tau_ns);
    return s;
  }
  double max_tau() const {
    double m = 0;
    for (const auto& k : terms) m = std::max(m, k.tau_ns);
    return m;
  }
  void validate() const {
    for (const auto& k : terms)
      if (!(k.tau_ns > 0) || !std::isfinite(k.a)) throw ConfigError("distortion terms need tau > 0 and finite a");
  }
  /// Step response strictly positive on t >= 0 (checked at t = 0, on a log grid, and at infinity).
  bool invertible() const {
    if (step_response(0.0) <= 0) return false;
    double tmin = 1e300;
    for (const auto& k : terms) tmin = std::min(tmin, k.tau_ns);
    if (terms.empty()) return true;
    for (int i = 0; i <= 400; ++i) {
      const double t = tmin * 1e-3 * std::pow(10.0, 8.0 * i / 400.0);
      if (step_response(t) <= 0) return false;
    }
    return true;
  }
};

struct SlepianConfig {
  double duration = 48.0;  // ns
  double dt = 0.5;         // ns
  double pad = 2.0;        // ns each side
  double theta_initial = 0.05;
  double theta_final = kPi / 2 - 0.05;
  int control_points = 20;
  double nw = 2.0;         // time-bandwidth product of the window
  int window_points = 2001;

  void validate() const {
    if (!(duration > 0)) throw ConfigError("pulse duration must be > 0");
    if (!(dt > 0)) throw ConfigError("dt must be > 0");
    if (pad < 0) throw ConfigError("pad must be >= 0");
    if (!(theta_initial > 0 && theta_initial < theta_final && theta_final <= kPi / 2))
      throw ConfigError("need 0 < theta_initial < theta_final <= pi/2");
    if (control_points < 2) throw ConfigError("need at least 2 control points");
    if (!(nw > 0) || window_points < 16) throw ConfigError("bad DPSS window settings");
  }
};

/// Zeroth-order discrete prolate spheroidal sequence (unit norm, positive).
inline VecR dpss0(int m, double nw) {
  const double w = nw / m;
  VecR d(m), e(m - 1);
  for (int i = 0; i < m; ++i) d(i) = sqr((m - 1 - 2.0 * i) / 2.0) * std::cos(kTwoPi * w);
  for (int i = 1; i < m; ++i) e(i - 1) = i * (m - i) / 2.0;
  auto ep = eigh_tridiagonal(d, e, m, m);
  VecR v = ep.vectors.col(0);
  if (v.sum() < 0) v = -v;
  return v;
}

namespace detail {

// normalised cumulative trapezoid integral of the DPSS window, cached per (points, NW)
inline const VecR& dpss_cdf(int m, double nw) {
  static std::mutex mu;
  static std::map<std::pair<int, double>, VecR> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_pair(m, nw);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  VecR s = dpss0(m, nw);
  VecR f(m);
  f(0) = 0;
  for (int i = 1; i < m; ++i) f(i) = f(i - 1) + 0.5 * (s(i) + s(i - 1));
  f /= f(m - 1);
  return cache.emplace(key, f).first->second;
}

}  // namespace detail

/// Unit Slepian shape at normalised time x in [0, 1] (0 at both ends, 1 at x = 1/2).
inline double slepian_shape(double x, const SlepianConfig& cfg) {
  if (x <= 0 || x >= 1) return 0.0;
  const VecR& f = detail::dpss_cdf(cfg.window_points, cfg.nw);
  const double s = 1.0 - std::abs(2.0 * x - 1.0);
  const double pos = s * (cfg.window_points - 1);
  const int i = std::min(static_cast<int>(pos), cfg.window_points - 2);
  const double fr = pos - i;
  const double c = f(i) * (1 - fr) + f(i + 1) * fr;
  const double th = cfg.theta_initial + (cfg.theta_final - cfg.theta_initial) * c;
  auto z = [](double t) { return std::sqrt(1.0 / std::tan(t)); };
  const double zi = z(cfg.theta_initial), zf = z(cfg.theta_final);
  return (zi - z(th)) / (zi - zf);
}

/// Samples at k*dt over pad + duration + pad; zero in the pads, peak exactly 1.
inline Waveform slepian_unit_pulse(const SlepianConfig& cfg) {
  cfg.validate();
  const int n = static_cast<int>(std::lround((cfg.duration + 2 * cfg.pad) / cfg.dt)) + 1;
  Waveform w;
  w.dt = cfg.dt;
  w.pad_samples = static_cast<int>(std::lround(cfg.pad / cfg.dt));
  w.samples.resize(n);
  for (int k = 0; k < n; ++k) w.samples[k] = slepian_shape((k * cfg.dt - cfg.pad) / cfg.duration, cfg);
  // renormalise on the sampled grid so the largest sample is exactly 1
  const double pk = w.peak();
  if (pk > 0)
    for (double& s : w.samples) s /= pk;
  w.samples.front() = 0.0;
  w.samples.back() = 0.0;
  return w;
}

/// Natural cubic spline through (x_i, y_i), x strictly increasing; evaluated at xq (clamped outside).
inline std::vector<double> natural_cubic_spline(const std::vector<double>& x, const std::vector<double>& y,
                                                const std::vector<double>& xq) {
  const int n = static_cast<int>(x.size());
  if (n < 2 || static_cast<int>(y.size()) != n) throw ConfigError("spline needs >= 2 matching points");
  std::vector<double> m(n, 0.0);  // second derivatives
  if (n > 2) {
    const int k = n - 2;
    MatR a = MatR::Zero(k, k);
    VecR r(k);
    for (int i = 1; i <= k; ++i) {
      const double h0 = x[i] - x[i - 1], h1 = x[i + 1] - x[i];
      a(i - 1, i - 1) = 2 * (h0 + h1);
      if (i > 1) a(i - 1, i - 2) = h0;
      if (i < k) a(i - 1, i) = h1;
      r(i - 1) = 6 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
    }
    VecR sol = a.partialPivLu().solve(r);
    for (int i = 1; i <= k; ++i) m[i] = sol(i - 1);
  }
  std::vector<double> out(xq.size());
  for (std::size_t q = 0; q < xq.size(); ++q) {
    const double t = std::clamp(xq[q], x.front(), x.back());
    int i = static_cast<int>(std::upper_bound(x.begin(), x.end(), t) - x.begin()) - 1;
    i = std::clamp(i, 0, n - 2);
    const double h = x[i + 1] - x[i];
    const double a = (x[i + 1] - t) / h, b = (t - x[i]) / h;
    out[q] = a * y[i] + b * y[i + 1] + ((a * a * a - a) * m[i] + (b * b * b - b) * m[i + 1]) * h * h / 6.0;
  }
  return out;
}

/// Waveform on the Slepian sample grid from interior control points (zero at pad and pad + duration).
inline Waveform waveform_from_control_points(const std::vector<double>& c, const SlepianConfig& cfg) {
  cfg.validate();
  const int nc = static_cast<int>(c.size());
  std::vector<double> x(nc + 2), y(nc + 2, 0.0);
  for (int j = 0; j < nc + 2; ++j) x[j] = cfg.pad + cfg.duration * j / (nc + 1.0);
  for (int j = 0; j < nc; ++j) y[j + 1] = c[j];
  const int n = static_cast<int>(std::lround((cfg.duration + 2 * cfg.pad) / cfg.dt)) + 1;
  std::vector<double> tq(n);
  for (int k = 0; k < n; ++k) tq[k] = k * cfg.dt;
  Waveform w;
  w.dt = cfg.dt;
  w.pad_samples = static_cast<int>(std::lround(cfg.pad / cfg.dt));
  w.samples = natural_cubic_spline(x, y, tq);
  for (int k = 0; k < n; ++k)
    if (tq[k] <= cfg.pad + 1e-12 || tq[k] >= cfg.pad + cfg.duration - 1e-12) w.samples[k] = 0.0;
  w.max_excursion = std::max(1.0, w.peak());
  return w;
}

/// Control-point values sampled from the unit Slepian shape.
inline std::vector<double> slepian_control_points(const SlepianConfig& cfg) {
  std::vector<double> c(cfg.control_points);
  for (int j = 0; j < cfg.control_points; ++j) c[j] = slepian_shape((j + 1.0) / (cfg.control_points + 1.0), cfg);
  return c;
}

namespace detail {
inline std::size_t tail_samples(const Waveform& w, const DistortionModel& m, double tail_ns) {
  if (tail_ns < 0) tail_ns = 5.0 * m.max_tau();
  return static_cast<std::size_t>(std::ceil(tail_ns / w.dt));
}
}  // namespace detail

/// Output of the distortion filter: each term is an exact one-pole recursion driven by input differences.
/// The input is extended by `tail_ns` of its last value held at zero (default 5 max tau).
inline Waveform apply_distortion(const Waveform& w, const DistortionModel& m, double tail_ns = -1) {
  w.validate();
  m.validate();
  Waveform out = w;
  out.samples.resize(w.size() + detail::tail_samples(w, m, tail_ns), 0.0);
  const std::size_t k = m.terms.size();
  std::vector<double> lam(k), state(k, 0.0);
  for (std::size_t j = 0; j < k; ++j) lam[j] = std::exp(-w.dt / m.terms[j].tau_ns);
  double prev = 0.0;
  for (std::size_t n = 0; n < out.samples.size(); ++n) {
    const double x = n < w.size() ? w.samples[n] : 0.0;
    double y = x;
    for (std::size_t j = 0; j < k; ++j) {
      state[j] = lam[j] * state[j] + m.terms[j].a * (x - prev);
      y += state[j];
    }
    prev = x;
    out.samples[n] = y;
  }
  return out;
}

/// Exact inverse of apply_distortion: solves for the input sample by sample.
inline Waveform predistort(const Waveform& w, const DistortionModel& m, double tail_ns = -1) {
  w.validate();
  m.validate();
  if (!m.invertible()) throw ConfigError("distortion model not invertible: step response reaches <= 0");
  Waveform out = w;
  out.samples.resize(w.size() + detail::tail_samples(w, m, tail_ns), 0.0);
  const std::size_t k = m.terms.size();
  std::vector<double> lam(k), state(k, 0.0);
  double gain = 1.0;
  for (std::size_t j = 0; j < k; ++j) {
    lam[j] = std::exp(-w.dt / m.terms[j].tau_ns);
    gain += m.terms[j].a;
  }
  double prev = 0.0;
  for (std::size_t n = 0; n < out.samples.size(); ++n) {
    const double y = n < w.size() ? w.samples[n] : 0.0;
    double rhs = y;
    for (std::size_t j = 0; j < k; ++j) rhs -= lam[j] * state[j] - m.terms[j].a * prev;
    const double x = rhs / gain;
    for (std::size_t j = 0; j < k; ++j) state[j] = lam[j] * state[j] + m.terms[j].a * (x - prev);
    prev = x;
    out.samples[n] = x;
  }
  return out;
}

/// Residual phase after a pulse of length tau_pulse: phi0 * sum_k a_k (e^{-t/tau_k} - e^{-(t+tau_pulse)/tau_k}).
inline std::vector<double> transient_phase(double pulse_duration_ns, const DistortionModel& m, double phi0,
                                           const std::vector<double>& t_grid) {
  if (!std::isfinite(phi0)) throw ConfigError("transient sensitivity must be finite");
  std::vector<double> out(t_grid.size(), 0.0);
  for (std::size_t i = 0; i < t_grid.size(); ++i)
    for (const auto& k : m.terms)
      out[i] += phi0 * k.a * (std::exp(-t_grid[i] / k.tau_ns) - std::exp(-(t_grid[i] + pulse_duration_ns) / k.tau_ns));
  return out;
}

struct TransientFit {
  DistortionModel model;
  double rms = 0;
  int info = 0;
};

/// Least-squares fit of the transient-phase closed form (phi0 and pulse length known) from an initial model.
inline TransientFit fit_transient_phase(const std::vector<double>& t, const std::vector<double>& phase,
                                        double pulse_duration_ns, double phi0, const DistortionModel& guess) {
  if (t.size() != phase.size() || t.empty()) throw ConfigError("fit_transient_phase: size mismatch");
  const int nt = static_cast<int>(guess.terms.size());
  if (nt == 0) throw ConfigError("fit_transient_phase: need at least one term");
  struct Functor {
    using Scalar = double;
    using InputType = VecR;
    using ValueType = VecR;
    using JacobianType = MatR;
    enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };
    const std::vector<double>* t;
    const std::vector<double>* y;
    double dur, phi0;
    int nt;
    int inputs() const { return 2 * nt; }
    int values() const { return static_cast<int>(t->size()); }
    DistortionModel model(const VecR& p) const {
      DistortionModel m;
      for (int k = 0; k < nt; ++k) m.terms.push_back({p(2 * k), std::exp(p(2 * k + 1))});
      return m;
    }
    int operator()(const VecR& p, VecR& f) const {
      auto v = transient_phase(dur, model(p), phi0, *t);
      for (int i = 0; i < values(); ++i) f(i) = v[i] - (*y)[i];
      return 0;
    }
  };
  Functor fn{&t, &phase, pulse_duration_ns, phi0, nt};
  Eigen::NumericalDiff<Functor> nd(fn);
  Eigen::LevenbergMarquardt<Eigen::NumericalDiff<Functor>> lm(nd);
  lm.parameters.maxfev = 4000;
  lm.parameters.xtol = 1e-12;
  lm.parameters.ftol = 1e-14;
  VecR p(2 * nt);
  for (int k = 0; k < nt; ++k) {
    p(2 * k) = guess.terms[k].a;
    p(2 * k + 1) = std::log(guess.terms[k].tau_ns);
  }
  TransientFit r;
  r.info = static_cast<int>(lm.minimize(p));
  r.model = fn.model(p);
  VecR f(fn.values());
  fn(p, f);
  r.rms = std::sqrt(f.squaredNorm() / f.size());
  std::sort(r.model.terms.begin(), r.model.terms.end(), [](auto& a, auto& b) { return a.tau_ns > b.tau_ns; });
  return r;
}

}  // namespace dtc
