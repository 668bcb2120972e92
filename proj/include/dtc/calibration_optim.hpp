#pragma once

#include "dtc/gate_dynamics.hpp"
#include "dtc/pulse_shaping.hpp"
#include "dtc/toy_model.hpp"

#include <unsupported/Eigen/NonLinearOptimization>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

namespace dtc {

/// JAZZ Ramsey-echo signal. zeta and the baseline rotation omega_b in MHz (cycles per microsecond).
struct JazzModel {
  double zeta_mhz = 0;
  double omega_b_mhz = 0;
  double phi0 = 0;
  std::vector<double> t_ns;
  bool baseline = true;

  void validate() const {
    for (double t : t_ns)
      if (t < 0) throw ConfigError("JAZZ durations must be >= 0");
    if (baseline && omega_b_mhz != 0 && !(omega_b_mhz > std::abs(zeta_mhz) / 2))
      throw ConfigError("baseline rotation must exceed |zeta|/2");
  }
};

/// P0(t) = (1 - cos(2 pi (zeta/2 + omega_b) t + phi0)) / 2.
inline std::vector<double> simulate_jazz(const JazzModel& m) {
  m.validate();
  std::vector<double> p(m.t_ns.size());
  const double w = m.zeta_mhz / 2 + m.omega_b_mhz;
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = 0.5 * (1 - std::cos(kTwoPi * w * m.t_ns[i] * 1e-3 + m.phi0));
  return p;
}

struct JazzFit {
  double omega_m_mhz = 0;  // measured oscillation frequency
  double phi0 = 0;
  double zeta_mhz = 0;     // 2 (omega_m - omega_b)
  double rms = 0;
};

/// Fits the oscillation frequency of JAZZ data and converts it with zeta = 2 (omega_m - omega_b).
inline JazzFit fit_jazz(const std::vector<double>& t_ns, const std::vector<double>& p0, double omega_b_mhz) {
  const int n = static_cast<int>(t_ns.size());
  if (n < 4 || static_cast<int>(p0.size()) != n) throw ConfigError("fit_jazz needs >= 4 matching samples");
  const double span = *std::max_element(t_ns.begin(), t_ns.end()) - *std::min_element(t_ns.begin(), t_ns.end());
  double dtmin = span;
  for (int i = 1; i < n; ++i) dtmin = std::min(dtmin, std::abs(t_ns[i] - t_ns[i - 1]));
  const double fmax = 0.5 / dtmin * 1e3;  // MHz
  // grid search with a linear fit c0 + c1 cos + c2 sin at each trial frequency
  double best_w = 0, best_r = 1e300;
  const int ng = std::max(2000, 20 * n);
  for (int g = 1; g <= ng; ++g) {
    const double w = fmax * g / ng;
    MatR a(n, 3);
    VecR y(n);
    for (int i = 0; i < n; ++i) {
      const double x = kTwoPi * w * t_ns[i] * 1e-3;
      a(i, 0) = 1;
      a(i, 1) = std::cos(x);
      a(i, 2) = std::sin(x);
      y(i) = p0[i];
    }
    VecR c = a.colPivHouseholderQr().solve(y);
    const double r = (a * c - y).squaredNorm();
    if (r < best_r) {
      best_r = r;
      best_w = w;
    }
  }
  struct F {
    using Scalar = double;
    using InputType = VecR;
    using ValueType = VecR;
    using JacobianType = MatR;
    enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };
    const std::vector<double>* t;
    const std::vector<double>* y;
    int inputs() const { return 2; }
    int values() const { return static_cast<int>(t->size()); }
    int operator()(const VecR& p, VecR& f) const {
      for (int i = 0; i < values(); ++i) f(i) = 0.5 * (1 - std::cos(kTwoPi * p(0) * (*t)[i] * 1e-3 + p(1))) - (*y)[i];
      return 0;
    }
  };
  F fn{&t_ns, &p0};
  Eigen::NumericalDiff<F> nd(fn);
  double best_total = 1e300;
  VecR keep(2);
  for (int s = 0; s < 8; ++s) {
    VecR p(2);
    p << best_w, kTwoPi * s / 8.0;
    Eigen::LevenbergMarquardt<Eigen::NumericalDiff<F>> lm(nd);
    lm.parameters.xtol = 1e-14;
    lm.parameters.ftol = 1e-16;
    lm.minimize(p);
    VecR f(n);
    fn(p, f);
    if (f.squaredNorm() < best_total) {
      best_total = f.squaredNorm();
      keep = p;
    }
  }
  JazzFit r;
  r.omega_m_mhz = std::abs(keep(0));
  r.phi0 = wrap_phase(keep(0) < 0 ? -keep(1) : keep(1));
  r.zeta_mhz = 2 * (r.omega_m_mhz - omega_b_mhz);
  r.rms = std::sqrt(best_total / n);
  return r;
}

/// JAZZ-N sequence fidelity P = (1 - cos((2k+1) theta_cz)) / 2, N = 4k + 1.
inline double jazz_n_fidelity(double theta_cz, int k) {
  if (k < 0) throw ConfigError("jazz_n_fidelity: k must be >= 0");
  return 0.5 * (1 - std::cos((2 * k + 1) * theta_cz));
}

namespace detail {

inline Eigen::Matrix2cd x_rot(double angle) {
  Eigen::Matrix2cd m;
  const double c = std::cos(angle / 2), s = std::sin(angle / 2);
  m << c, cplx(0, -s), cplx(0, -s), c;
  return m;
}

// ideal two-qubit gate on the computational states, identity elsewhere
inline MatC embed(const DynamicsModel& m, const Eigen::Matrix4cd& g) {
  MatC u = MatC::Identity(m.dim(), m.dim());
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) u(m.comp[i], m.comp[j]) = g(i, j);
  return u;
}

inline Eigen::Matrix4cd kron2(const Eigen::Matrix2cd& a, const Eigen::Matrix2cd& b) {
  Eigen::Matrix4cd k;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) k.block<2, 2>(2 * i, 2 * j) = a(i, j) * b;
  return k;
}

}  // namespace detail

/// JAZZ2-N: X90 x X90, then 2(2k+1) repetitions of [Z-pulse, X180 x X180], then X90 x X90; returns P00.
/// `zpulse` is the K x K propagator (idle frame) of one Z-pulse.
inline double jazz2_sequence(const DynamicsModel& m, const MatC& zpulse, int k) {
  if (k < 0) throw ConfigError("jazz2: k must be >= 0");
  const MatC x90 = detail::embed(m, detail::kron2(detail::x_rot(kPi / 2), detail::x_rot(kPi / 2)));
  const MatC x180 = detail::embed(m, detail::kron2(detail::x_rot(kPi), detail::x_rot(kPi)));
  VecC psi = VecC::Zero(m.dim());
  psi(m.comp[0]) = 1;
  psi = x90 * psi;
  const MatC cycle = x180 * zpulse;
  for (int r = 0; r < 2 * (2 * k + 1); ++r) psi = cycle * psi;
  psi = x90 * psi;
  return std::norm(psi(m.comp[0]));
}

/// Same sequence on an explicit 4x4 diagonal-or-not block (no leakage space).
inline double jazz2_sequence(const Eigen::Matrix4cd& zblock, int k) {
  DynamicsModel m;
  m.h0 = MatC::Zero(4, 4);
  m.comp = {0, 1, 2, 3};
  return jazz2_sequence(m, MatC(zblock), k);
}

inline double jazz2_n_objective(const DynamicsModel& m, const Waveform& w, int k, const EvolveOptions& eo = {}) {
  return jazz2_sequence(m, evolve(m, w, eo).u, k);
}

/// Coherent CZ fidelity after ideal VZ correction using the block's own single-qubit phases.
inline double coherent_cz_fidelity(const DynamicsModel& m, const Waveform& w, const EvolveOptions& eo = {}) {
  auto blk = computational_block(m, evolve(m, w, eo).u);
  GatePhases ph;
  try {
    ph = cphase_angles(blk);
  } catch (const NumericalError&) {
    return 0.0;
  }
  return std::clamp(average_gate_fidelity(apply_vz(blk, ph.theta1(), ph.theta2()), cz_matrix()), 0.0, 1.0);
}

struct OptimizerConfig {
  int control_points = 20;
  int population = 20;  // offspring per epoch
  int parents = 4;
  int epochs = 50;
  double sigma0 = 2e-3;      // initial perturbation scale (phi_ex / 2pi units)
  double sigma_min = 1e-6;
  double decay = 0.85;       // applied after an epoch without improvement
  double grow = 1.25;        // applied after an improving epoch
  bool symmetric = true;     // mirror perturbations about the midpoint
  double target = 1.0 - 1e-4;
  std::uint64_t seed = 1;
  int threads = 1;
};

struct TraceRow {
  int epoch = 0, candidate = 0;
  double objective = 0;
};

struct OptimizeResult {
  std::vector<double> control_points;
  Waveform waveform;
  double objective = 0;
  double initial_objective = 0;
  std::vector<TraceRow> trace;
  std::vector<double> best_per_epoch;
  int evaluations = 0;
  bool reached_target = false;
};

/// Control values of a waveform at the uniform interior control times.
inline std::vector<double> sample_control_points(const Waveform& w, const SlepianConfig& cfg) {
  std::vector<double> c(cfg.control_points);
  for (int j = 0; j < cfg.control_points; ++j) {
    const double t = cfg.pad + cfg.duration * (j + 1.0) / (cfg.control_points + 1.0);
    const double pos = t / w.dt;
    const std::size_t i = std::min(static_cast<std::size_t>(pos), w.size() - 2);
    const double fr = pos - i;
    c[j] = w.samples[i] * (1 - fr) + w.samples[i + 1] * fr;
  }
  return c;
}

/// (mu + lambda) evolution strategy on spline control points. The best objective never decreases.
inline OptimizeResult optimize_pulse(const std::vector<double>& initial, const SlepianConfig& shape,
                                     const std::function<double(const Waveform&)>& objective,
                                     const OptimizerConfig& cfg) {
  if (cfg.population < 2 || cfg.epochs < 1 || cfg.parents < 1) throw ConfigError("optimizer needs population >= 2, epochs >= 1");
  const int n = static_cast<int>(initial.size());
  SlepianConfig sc = shape;
  sc.control_points = n;
  auto eval = [&](const std::vector<double>& c) {
    const double v = objective(waveform_from_control_points(c, sc));
    if (!std::isfinite(v)) return 0.0;
    return std::clamp(v, 0.0, 1.0);
  };
  struct Member {
    std::vector<double> c;
    double f;
  };
  OptimizeResult r;
  std::vector<Member> pop{{initial, eval(initial)}};
  r.evaluations = 1;
  r.initial_objective = pop[0].f;
  r.trace.push_back({0, 0, pop[0].f});
  double sigma = cfg.sigma0;
  for (int e = 1; e <= cfg.epochs && pop[0].f < 1.0 && pop[0].f < cfg.target; ++e) {
    std::vector<Member> kids(cfg.population);
    for (int j = 0; j < cfg.population; ++j) {
      std::mt19937_64 rng(cfg.seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(e) * 1000003ULL + j);
      std::normal_distribution<double> nd(0.0, 1.0);
      const Member& par = pop[j % pop.size()];
      std::vector<double> c = par.c;
      for (int i = 0; i < (cfg.symmetric ? (n + 1) / 2 : n); ++i) {
        const double d = sigma * nd(rng);
        c[i] += d;
        if (cfg.symmetric && n - 1 - i != i) c[n - 1 - i] += d;
      }
      kids[j].c = std::move(c);
    }
    parallel_for(cfg.population, cfg.threads, [&](int j) { kids[j].f = eval(kids[j].c); });
    for (int j = 0; j < cfg.population; ++j) {
      ++r.evaluations;
      r.trace.push_back({e, j, kids[j].f});
    }
    const double before = pop[0].f;
    pop.insert(pop.end(), kids.begin(), kids.end());
    std::stable_sort(pop.begin(), pop.end(), [](const Member& a, const Member& b) { return a.f > b.f; });
    pop.resize(std::min<std::size_t>(cfg.parents, pop.size()));
    sigma = pop[0].f > before ? std::min(cfg.sigma0, sigma * cfg.grow) : std::max(cfg.sigma_min, sigma * cfg.decay);
    r.best_per_epoch.push_back(pop[0].f);
  }
  r.control_points = pop[0].c;
  r.objective = pop[0].f;
  r.waveform = waveform_from_control_points(pop[0].c, sc);
  r.reached_target = r.objective >= cfg.target;
  return r;
}

struct AmplitudeCalibration {
  double amplitude = 0;
  double theta_cz = 0;
  std::vector<double> scan_amp, scan_theta;  // unwrapped theta_CZ along the coarse scan
};

/// Finds the amplitude of a unit pulse giving theta_CZ = pi: coarse scan with phase unwrapping to locate the
/// first pi crossing, then golden-section maximisation of the JAZZ-N fidelity for each k in turn.
inline AmplitudeCalibration calibrate_amplitude(const DynamicsModel& m, const Waveform& unit, double lo, double hi,
                                                int coarse = 17, std::vector<int> ks = {2, 10, 25},
                                                const EvolveOptions& eo = {}) {
  if (!(lo < hi) || coarse < 3) throw ConfigError("bad amplitude bracket");
  AmplitudeCalibration c;
  auto theta = [&](double amp) { return cphase_angles(computational_block(m, evolve(m, unit.scaled(amp), eo).u)).theta_cz(); };
  double prev = 0, acc = 0;
  for (int i = 0; i < coarse; ++i) {
    const double a = lo + (hi - lo) * i / (coarse - 1);
    double t;
    try {
      t = theta(a);
    } catch (const NumericalError&) {
      break;
    }
    if (i == 0) {
      acc = t;
    } else {
      acc += wrap_phase(t - prev);
    }
    prev = t;
    c.scan_amp.push_back(a);
    c.scan_theta.push_back(acc);
  }
  int cross = -1;
  for (std::size_t i = 1; i < c.scan_theta.size(); ++i)
    if ((c.scan_theta[i - 1] - kPi) * (c.scan_theta[i] - kPi) <= 0) {
      cross = static_cast<int>(i);
      break;
    }
  if (cross < 0) throw NumericalError("theta_CZ never reaches pi inside the amplitude bracket");
  double a = c.scan_amp[cross - 1], b = c.scan_amp[cross];
  // linear estimate, then a bracket shrinking with k
  double est = a + (kPi - c.scan_theta[cross - 1]) / (c.scan_theta[cross] - c.scan_theta[cross - 1]) * (b - a);
  double width = (b - a);
  for (int k : ks) {
    auto f = [&](double x) {
      try {
        return -jazz_n_fidelity(theta(x), k);
      } catch (const NumericalError&) {
        return 0.0;
      }
    };
    // the (2k+1)-fold fringe has period ~ width / (2k+1) in amplitude; stay inside one fringe
    const double half = std::min(width, 1.5 * (b - a) / (2 * k + 1));
    est = detail::golden_min(f, est - half, est + half, half * 1e-4);
    width = half;
  }
  c.amplitude = est;
  c.theta_cz = theta(est);
  return c;
}

/// Slope of unwrapped accumulated phase vs repetition count (least squares through the origin-free line).
inline double fit_phase_per_cycle(const std::vector<int>& n, const std::vector<double>& wrapped) {
  if (n.size() != wrapped.size() || n.size() < 2) throw ConfigError("need >= 2 Ramsey points");
  std::vector<double> un(wrapped.size());
  un[0] = wrapped[0];
  const double first = wrap_phase(wrapped[0] / std::max(1, n[0]));
  if (std::abs(first) > kPi - 0.05) throw NumericalError("per-cycle phase near +-pi is ambiguous; use a shorter test pulse");
  for (std::size_t i = 1; i < un.size(); ++i) {
    // expected increment from the previous points
    const double expect = first * (n[i] - n[i - 1]);
    un[i] = un[i - 1] + expect + wrap_phase(wrapped[i] - wrapped[i - 1] - expect);
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double cnt = static_cast<double>(n.size());
  for (std::size_t i = 0; i < n.size(); ++i) {
    sx += n[i];
    sy += un[i];
    sxx += static_cast<double>(n[i]) * n[i];
    sxy += n[i] * un[i];
  }
  return (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
}

struct VzCalibration {
  double theta1 = 0, theta2 = 0;            // refined
  double theta1_ramsey = 0, theta2_ramsey = 0;
  double fidelity = 0;
};

/// Ramsey-type extraction of the per-pulse single-qubit phases followed by coordinate golden-section refinement
/// of the VZ-corrected CZ fidelity with the pulse held fixed.
inline VzCalibration calibrate_vz(const DynamicsModel& m, const Waveform& w, int repeats = 8,
                                  const EvolveOptions& eo = {}) {
  const MatC u = evolve(m, w, eo).u;
  auto ramsey = [&](int excited_index) {
    std::vector<int> ns;
    std::vector<double> ph;
    VecC psi = VecC::Zero(m.dim());
    psi(m.comp[0]) = 1 / std::sqrt(2.0);
    psi(m.comp[excited_index]) = 1 / std::sqrt(2.0);
    for (int n = 1; n <= repeats; ++n) {
      psi = u * psi;
      ns.push_back(n);
      ph.push_back(std::arg(psi(m.comp[excited_index]) / psi(m.comp[0])));
    }
    return wrap_phase(fit_phase_per_cycle(ns, ph));
  };
  VzCalibration c;
  c.theta1_ramsey = ramsey(2);  // |10>
  c.theta2_ramsey = ramsey(1);  // |01>
  const auto blk = computational_block(m, u);
  auto fid = [&](double t1, double t2) { return average_gate_fidelity(apply_vz(blk, t1, t2), cz_matrix()); };
  double t1 = c.theta1_ramsey, t2 = c.theta2_ramsey;
  double half = 0.1;
  for (int sweep = 0; sweep < 4; ++sweep) {
    t1 = detail::golden_min([&](double x) { return -fid(x, t2); }, t1 - half, t1 + half, 1e-9);
    t2 = detail::golden_min([&](double x) { return -fid(t1, x); }, t2 - half, t2 + half, 1e-9);
    half *= 0.3;
  }
  c.theta1 = wrap_phase(t1);
  c.theta2 = wrap_phase(t2);
  c.fidelity = fid(t1, t2);
  return c;
}

}  // namespace dtc
