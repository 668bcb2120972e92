#pragma once

#include "dtc/calibration_optim.hpp"
#include "dtc/gate_dynamics.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

namespace dtc {

/// Kraus representation over a d-dimensional space.
struct KrausSet {
  std::vector<MatC> ops;
  std::string label;

  int dim() const { return ops.empty() ? 0 : static_cast<int>(ops.front().rows()); }
  double completeness_error() const {
    const int d = dim();
    MatC s = MatC::Zero(d, d);
    for (const auto& k : ops) s += k.adjoint() * k;
    return (s - MatC::Identity(d, d)).cwiseAbs().maxCoeff();
  }
  void validate(double tol = 1e-9) const {
    if (ops.empty()) throw ConfigError("empty Kraus set");
    for (const auto& k : ops)
      if (k.rows() != dim() || k.cols() != dim()) throw ConfigError("Kraus operators have inconsistent dimensions");
    const double e = completeness_error();
    if (e > tol) throw NumericalError("Kraus set '" + label + "' violates completeness by " + std::to_string(e));
  }
  MatC apply(const MatC& rho) const {
    MatC out = MatC::Zero(rho.rows(), rho.cols());
    for (const auto& k : ops) out += k * rho * k.adjoint();
    return out;
  }
};

namespace detail {
inline void check_probability(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError(std::string(what) + " must lie in [0, 1]");
}
inline Eigen::Matrix2cd pauli(char a) {
  Eigen::Matrix2cd s;
  if (a == 'X') s << 0, 1, 1, 0;
  else if (a == 'Y') s << 0, cplx(0, -1), cplx(0, 1), 0;
  else s << 1, 0, 0, -1;
  return s;
}
inline Eigen::Matrix2cd rotation(char axis, double theta) {
  return std::cos(theta / 2) * Eigen::Matrix2cd::Identity() - cplx(0, 1) * std::sin(theta / 2) * pauli(axis);
}
inline MatC on_qubit(int q, const Eigen::Matrix2cd& op) {
  const Eigen::Matrix2cd id = Eigen::Matrix2cd::Identity();
  if (q == 1) return detail::kron(op, id);
  if (q == 2) return detail::kron(id, op);
  throw ConfigError("qubit index must be 1 or 2");
}
}  // namespace detail

/// Amplitude damping of qubit q (1 or 2) inside the two-qubit space, p1 = 1 - exp(-t/T1).
inline KrausSet relaxation_kraus(int q, double p1) {
  detail::check_probability(p1, "p1");
  Eigen::Matrix2cd k0, k1;
  k0 << 1, 0, 0, std::sqrt(1 - p1);
  k1 << 0, std::sqrt(p1), 0, 0;
  return {{detail::on_qubit(q, k0), detail::on_qubit(q, k1)}, "relaxation Q" + std::to_string(q)};
}

/// Phase flip of qubit q with probability p_phi = (1 - exp(-t/T_phi)) / 2.
inline KrausSet dephasing_kraus(int q, double pphi) {
  detail::check_probability(pphi, "p_phi");
  Eigen::Matrix2cd z;
  z << 1, 0, 0, -1;
  return {{std::sqrt(1 - pphi) * detail::on_qubit(q, Eigen::Matrix2cd::Identity()), std::sqrt(pphi) * detail::on_qubit(q, z)},
          "dephasing Q" + std::to_string(q)};
}

/// Correlated dephasing of |11> against the other three states.
inline KrausSet cz_dephasing_kraus(double pcz) {
  detail::check_probability(pcz, "p_CZ");
  MatC k1 = MatC::Identity(4, 4);
  k1(3, 3) = -1;
  return {{std::sqrt(1 - pcz) * MatC::Identity(4, 4), std::sqrt(pcz) * k1}, "CZ dephasing"};
}

/// Two-qubit Pauli operators, index 4*a + b for sigma_a (x) sigma_b with a, b in {I, X, Y, Z}.
inline std::vector<MatC> two_qubit_paulis() {
  std::array<Eigen::Matrix2cd, 4> s;
  s[0] = Eigen::Matrix2cd::Identity();
  s[1] << 0, 1, 1, 0;
  s[2] << 0, cplx(0, -1), cplx(0, 1), 0;
  s[3] << 1, 0, 0, -1;
  std::vector<MatC> out;
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) out.push_back(detail::kron(s[a], s[b]));
  return out;
}

/// rho -> (1 - p) rho + p I/4.
inline KrausSet depolarizing_kraus(double p) {
  detail::check_probability(p, "p");
  auto ps = two_qubit_paulis();
  KrausSet k;
  k.label = "depolarizing";
  k.ops.push_back(std::sqrt(1 - 15.0 * p / 16.0) * ps[0]);
  for (int i = 1; i < 16; ++i) k.ops.push_back(std::sqrt(p / 16.0) * ps[i]);
  return k;
}

/// Apply `first`, then `second`.
inline KrausSet compose(const KrausSet& first, const KrausSet& second) {
  KrausSet k;
  k.label = second.label + " o " + first.label;
  for (const auto& b : second.ops)
    for (const auto& a : first.ops) k.ops.push_back(b * a);
  return k;
}

/// sum_k [Tr(K^dag K) + |Tr K|^2] / (d (d + 1)).
inline double average_fidelity_of(const KrausSet& k) {
  k.validate();
  const double d = k.dim();
  double s = 0;
  for (const auto& op : k.ops) s += (op.adjoint() * op).trace().real() + std::norm(op.trace());
  return s / (d * (d + 1));
}

/// Mean of <psi|E(|psi><psi|)|psi> over the 20 states of five mutually unbiased two-qubit bases (a 2-design).
inline double two_design_fidelity(const KrausSet& k) {
  auto p = two_qubit_paulis();
  // commuting Pauli pairs whose joint eigenbases are mutually unbiased
  const int pairs[5][2] = {{3, 12}, {1, 4}, {2, 8}, {7, 9}, {6, 11}};
  double s = 0;
  int n = 0;
  for (auto& pr : pairs) {
    auto ep = eigh(MatC(p[pr[0]] + 2.0 * p[pr[1]]));
    for (int j = 0; j < 4; ++j) {
      VecC v = ep.vectors.col(j);
      MatC rho = v * v.adjoint();
      s += (v.adjoint() * k.apply(rho) * v)(0).real();
      ++n;
    }
  }
  return s / n;
}

/// Coherence inputs. Times in microseconds except the gate time (ns); infinity disables a term.
struct NoiseParams {
  std::array<double, 2> t1_us{228.6, 205.3};
  std::array<double, 2> tphi_us{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  double t_cz_us = std::numeric_limits<double>::infinity();
  double gate_ns = 48.0;

  void validate() const {
    for (double t : {t1_us[0], t1_us[1], tphi_us[0], tphi_us[1], t_cz_us})
      if (!(t > 0)) throw ConfigError("coherence times must be > 0");
    if (!(gate_ns >= 0)) throw ConfigError("gate time must be >= 0");
  }
};

/// 1/T_phi = 1/T2 - 1/(2 T1).
inline double tphi_from_t2(double t1, double t2) {
  const double r = 1.0 / t2 - 0.5 / t1;
  if (r <= 0) return std::numeric_limits<double>::infinity();
  return 1.0 / r;
}

/// Coherence at the idle bias point with T_phi from the echo T2.
inline NoiseParams idle_point_noise(double gate_ns = 48.0) {
  NoiseParams n;
  n.t1_us = {228.6, 205.3};
  n.tphi_us = {tphi_from_t2(228.6, 358.9), tphi_from_t2(205.3, 129.8)};
  n.gate_ns = gate_ns;
  return n;
}

struct IncoherentEstimate {
  double t1_q1 = 0, t1_q2 = 0, tphi_q1 = 0, tphi_q2 = 0, cz = 0;
  double total = 0;
  double t_eff_us = 0;
};

/// (2/5) t (1/T1 + 1/T1 + 1/Tphi + 1/Tphi) + (3/10) t / T_CZ, with the equivalent T_eff.
inline IncoherentEstimate incoherent_error_estimate(const NoiseParams& n) {
  n.validate();
  const double t = n.gate_ns * 1e-3;
  IncoherentEstimate e;
  e.t1_q1 = 0.4 * t / n.t1_us[0];
  e.t1_q2 = 0.4 * t / n.t1_us[1];
  e.tphi_q1 = 0.4 * t / n.tphi_us[0];
  e.tphi_q2 = 0.4 * t / n.tphi_us[1];
  e.cz = 0.3 * t / n.t_cz_us;
  e.total = e.t1_q1 + e.t1_q2 + e.tphi_q1 + e.tphi_q2 + e.cz;
  e.t_eff_us = e.total > 0 ? 0.4 * t / e.total : std::numeric_limits<double>::infinity();
  return e;
}

/// (2/5) t / T_eff.
inline double error_from_t_eff(double gate_ns, double t_eff_us) { return 0.4 * gate_ns * 1e-3 / t_eff_us; }

/// Composite channel of both qubits' relaxation and dephasing plus CZ dephasing for one gate.
inline KrausSet incoherent_channel(const NoiseParams& n) {
  n.validate();
  const double t = n.gate_ns * 1e-3;
  KrausSet k = relaxation_kraus(1, 1 - std::exp(-t / n.t1_us[0]));
  k = compose(k, relaxation_kraus(2, 1 - std::exp(-t / n.t1_us[1])));
  k = compose(k, dephasing_kraus(1, (1 - std::exp(-t / n.tphi_us[0])) / 2));
  k = compose(k, dephasing_kraus(2, (1 - std::exp(-t / n.tphi_us[1])) / 2));
  k = compose(k, cz_dephasing_kraus((1 - std::exp(-t / n.t_cz_us)) / 2));
  k.label = "incoherent";
  return k;
}

/// (t/3)(1/T1 + 1/T_phi), t in ns and times in us.
inline double single_qubit_incoherent(double gate_ns, double t1_us, double tphi_us) {
  if (!(gate_ns >= 0) || !(t1_us > 0) || !(tphi_us > 0)) throw ConfigError("single_qubit_incoherent: times must be positive");
  return gate_ns * 1e-3 / 3.0 * (1.0 / t1_us + 1.0 / tphi_us);
}

/// Echo dephasing rate (1/us) from 1/f flux noise: 2 pi sqrt(A ln 2) |d omega / d phi_ex| with sqrt(A) in
/// micro-flux-quanta and the sensitivity given as d(omega/2pi)/d(phi_ex) in MHz per radian.
inline double echo_dephasing_rate(double sqrt_a_uphi0, double sens_mhz_per_rad) {
  return kTwoPi * sqrt_a_uphi0 * 1e-6 * std::sqrt(std::log(2.0)) * kTwoPi * std::abs(sens_mhz_per_rad);
}

/// Least-squares slope through the origin of Gamma vs |sensitivity|, converted back to sqrt(A) in uPhi0.
inline double fit_flux_noise_amplitude(const std::vector<double>& sens_mhz_per_rad, const std::vector<double>& gamma_per_us) {
  if (sens_mhz_per_rad.size() != gamma_per_us.size() || sens_mhz_per_rad.empty())
    throw ConfigError("fit_flux_noise_amplitude: size mismatch");
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < gamma_per_us.size(); ++i) {
    const double x = std::abs(sens_mhz_per_rad[i]);
    sxy += x * gamma_per_us[i];
    sxx += x * x;
  }
  return sxy / sxx / (kTwoPi * kTwoPi * std::sqrt(std::log(2.0)) * 1e-6);
}

struct FluxNoiseParams {
  double sqrt_a_uphi0 = 4.84;
  double f_low_hz = 1.0;
  double f_high_hz = 1e7;
  int samples = 1000;
  std::uint64_t seed = 7;
  int threads = 1;

  void validate() const {
    if (sqrt_a_uphi0 < 0) throw ConfigError("flux-noise amplitude must be >= 0");
    if (!(f_low_hz > 0 && f_high_hz > f_low_hz)) throw ConfigError("flux-noise band must satisfy 0 < f_low < f_high");
    if (samples < 1) throw ConfigError("need at least one flux-noise sample");
    if (threads < 1) throw ConfigError("threads must be >= 1");
  }
  /// Standard deviation of the quasi-static offset in flux quanta: A integrated over +-[f_low, f_high].
  double sigma_phi0() const { return sqrt_a_uphi0 * 1e-6 * std::sqrt(2.0 * std::log(f_high_hz / f_low_hz)); }
};

struct FluxNoiseResult {
  std::vector<double> errors;  // (1 - F_noise) - (1 - F_ideal) per sample, local Z phases re-extracted per sample
  std::vector<double> errors_fixed_vz;  // same, VZ phases held at the noiseless calibration
  double mean = 0, stddev = 0;
  double mean_fixed_vz = 0, stddev_fixed_vz = 0;
  double ideal_fidelity = 0;
  double theta1 = 0, theta2 = 0;
};

namespace detail {
inline void mean_std(const std::vector<double>& x, double& mean, double& sd) {
  mean = sd = 0;
  for (double e : x) mean += e / x.size();
  for (double e : x) sd += sqr(e - mean) / std::max<std::size_t>(1, x.size() - 1);
  sd = std::sqrt(sd);
}
}  // namespace detail

/// Quasi-static 1/f offsets added to the whole pulse (idle level included). Each sample is scored like the
/// ideal gate (single-qubit phases taken from its own propagator) and also with the noiseless VZ phases.
inline FluxNoiseResult flux_noise_mc(const DynamicsModel& m, const Waveform& w, const FluxNoiseParams& fn,
                                     const EvolveOptions& eo = {}) {
  fn.validate();
  FluxNoiseResult r;
  const auto blk0 = computational_block(m, evolve(m, w, eo).u);
  const auto ph = cphase_angles(blk0);
  r.theta1 = ph.theta1();
  r.theta2 = ph.theta2();
  r.ideal_fidelity = average_gate_fidelity(apply_vz(blk0, r.theta1, r.theta2), cz_matrix());
  const double sigma = fn.sigma_phi0();
  r.errors.resize(fn.samples);
  r.errors_fixed_vz.resize(fn.samples);
  parallel_for(fn.samples, fn.threads, [&](int s) {
    std::mt19937_64 rng(fn.seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(s));
    std::normal_distribution<double> nd(0.0, 1.0);
    const double off = sigma * nd(rng);
    Waveform ws = w;
    for (double& x : ws.samples) x += off;
    double f = r.ideal_fidelity, f_fixed = r.ideal_fidelity;
    if (off != 0.0) {
      auto blk = computational_block(m, evolve(m, ws, eo).u);
      const auto p = cphase_angles(blk);
      f = average_gate_fidelity(apply_vz(blk, p.theta1(), p.theta2()), cz_matrix());
      f_fixed = average_gate_fidelity(apply_vz(blk, r.theta1, r.theta2), cz_matrix());
    }
    r.errors[s] = r.ideal_fidelity - f;
    r.errors_fixed_vz[s] = r.ideal_fidelity - f_fixed;
  });
  detail::mean_std(r.errors, r.mean, r.stddev);
  detail::mean_std(r.errors_fixed_vz, r.mean_fixed_vz, r.stddev_fixed_vz);
  return r;
}

}  // namespace dtc
