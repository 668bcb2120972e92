#pragma once

#include "dtc/circuit_model.hpp"
#include "dtc/linalg.hpp"
#include "dtc/pulse_shaping.hpp"

#include <array>
#include <cmath>
#include <string>
#include <vector>

namespace dtc {

/// Reduced propagation space: a K-dimensional subspace expressed in its idle-point eigenbasis.
/// Computational states are ordered |00>, |01>, |10>, |11> (Q1 first, Q2 second).
struct DynamicsModel {
  MatC h0, a, b;          // K x K, GHz
  VecR idle_energies;     // eigenvalues at the idle flux (absolute)
  double idle_flux = 0.309;
  std::array<int, 4> comp{};
  double flux_lo = 0.0, flux_hi = 0.5;

  int dim() const { return static_cast<int>(h0.rows()); }
  MatC at(double flux) const {
    const double ph = kTwoPi * flux;
    return h0 + std::cos(ph) * a + std::sin(ph) * b;
  }
};

/// Span of the lowest ceil(K / n_ref) eigenstates at each dynamics reference flux, re-diagonalised at idle.
inline DynamicsModel build_dynamics_model(const HamiltonianOperator& h, const BasisConfig& basis, double idle_flux) {
  basis.validate();
  const auto& refs = basis.dynamics_reference_fluxes;
  const int nref = static_cast<int>(refs.size());
  const int per = std::min(h.dim(), (basis.kept_total + nref - 1) / nref);
  MatC stack(h.dim(), per * nref);
  for (int r = 0; r < nref; ++r) stack.middleCols(r * per, per) = eigensolve(h, refs[r], per).vectors;
  MatC v = orthonormal_span(stack);
  DynamicsModel m;
  m.idle_flux = idle_flux;
  MatC h0 = v.adjoint() * h.h0 * v, a = v.adjoint() * h.a * v, b = v.adjoint() * h.b * v;
  const double ph = kTwoPi * idle_flux;
  auto ep = eigh(MatC(h0 + std::cos(ph) * a + std::sin(ph) * b));
  const MatC& r = ep.vectors;
  m.h0 = r.adjoint() * h0 * r;
  m.a = r.adjoint() * a * r;
  m.b = r.adjoint() * b * r;
  m.idle_energies = ep.values;
  // computational states: idle-point eigenstates labeled |0000>, |0100>, |1000>, |1100>
  auto sp = eigensolve(h, idle_flux, std::min(h.dim(), 16));
  auto lr = label_states(h, idle_flux, sp.vectors);
  const StateLabel want[4] = {{0, 0, 0, 0}, {0, 1, 0, 0}, {1, 0, 0, 0}, {1, 1, 0, 0}};
  MatC basis_vecs = v * r;
  for (int c = 0; c < 4; ++c) {
    int idx = -1;
    for (int i = 0; i < sp.vectors.cols(); ++i)
      if (lr.labels[i] == want[c]) idx = i;
    if (idx < 0) throw NumericalError("computational state " + want[c].str() + " not found at the idle flux");
    Eigen::Index j;
    (basis_vecs.adjoint() * sp.vectors.col(idx)).cwiseAbs2().maxCoeff(&j);
    m.comp[c] = static_cast<int>(j);
  }
  return m;
}

struct EvolveOptions {
  int substeps = 4;
  double unitarity_tol = 1e-8;
};

/// U in the idle-frame interaction picture (U_idle_frame) and the plain Schrodinger propagator (lab).
struct Propagator {
  MatC u;
  MatC lab;
  double dt = 0;
  int steps = 0;
  double duration = 0;
};

/// Piecewise-constant propagation: each sample interval is split into `substeps` steps with the flux
/// linearly interpolated between samples and evaluated at the step midpoint. Flux = idle + samples.
inline Propagator evolve(const DynamicsModel& m, const Waveform& w, const EvolveOptions& opt = {}) {
  w.validate();
  if (opt.substeps < 1) throw ConfigError("substeps must be >= 1");
  for (double s : w.samples) {
    const double f = m.idle_flux + s;
    if (f < m.flux_lo || f > m.flux_hi)
      throw DomainError("waveform drives the flux to " + std::to_string(f) + ", outside [" + std::to_string(m.flux_lo) +
                        ", " + std::to_string(m.flux_hi) + "]");
  }
  const int k = m.dim();
  const double h = w.dt / opt.substeps;
  MatC u = MatC::Identity(k, k);
  VecC ph(k);
  Propagator p;
  for (std::size_t i = 0; i + 1 < w.size(); ++i) {
    for (int s = 0; s < opt.substeps; ++s) {
      const double fr = (s + 0.5) / opt.substeps;
      const double y = w.samples[i] * (1 - fr) + w.samples[i + 1] * fr;
      if (y == 0.0) {
        for (int j = 0; j < k; ++j) u.row(j) *= std::polar(1.0, -kTwoPi * m.idle_energies(j) * h);
      } else {
        auto ep = eigh(m.at(m.idle_flux + y));
        for (int j = 0; j < k; ++j) ph(j) = std::polar(1.0, -kTwoPi * ep.values(j) * h);
        u = ep.vectors * (ph.asDiagonal() * (ep.vectors.adjoint() * u));
      }
      ++p.steps;
    }
  }
  p.dt = h;
  p.duration = w.duration();
  const double drift = (u.adjoint() * u - MatC::Identity(k, k)).cwiseAbs().maxCoeff();
  if (drift > opt.unitarity_tol)
    throw NumericalError("unitarity drift " + std::to_string(drift) + " exceeds tolerance; reduce the step size");
  p.lab = u;
  p.u = u;
  for (int j = 0; j < k; ++j) p.u.row(j) *= std::polar(1.0, kTwoPi * m.idle_energies(j) * p.duration);
  return p;
}

inline Eigen::Matrix4cd computational_block(const DynamicsModel& m, const MatC& u) {
  Eigen::Matrix4cd b;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) b(i, j) = u(m.comp[i], m.comp[j]);
  return b;
}

struct GatePhases {
  double theta00 = 0, theta01 = 0, theta10 = 0, theta11 = 0;
  double theta_cz() const {
    double t = wrap_phase(theta11 - theta10 - theta01 + theta00);
    return t <= -kPi ? t + kTwoPi : t;
  }
  double theta1() const { return wrap_phase(theta10 - theta00); }  // Q1 single-qubit phase
  double theta2() const { return wrap_phase(theta01 - theta00); }  // Q2 single-qubit phase
};

/// Phases of the diagonal of a 4x4 computational block (|00>, |01>, |10>, |11>).
inline GatePhases cphase_angles(const Eigen::Matrix4cd& block) {
  for (int i = 0; i < 4; ++i)
    if (std::abs(block(i, i)) <= 0.5) {
      std::string d;
      for (int j = 0; j < 4; ++j) d += " " + std::to_string(std::abs(block(j, j)));
      throw NumericalError("non-adiabatic evolution: |U_ii| =" + d);
    }
  return {std::arg(block(0, 0)), std::arg(block(1, 1)), std::arg(block(2, 2)), std::arg(block(3, 3))};
}

struct LeakageReport {
  std::array<double, 4> per_input{};
  double l1 = 0;
};

inline LeakageReport leakage_of(const Eigen::Matrix4cd& block) {
  LeakageReport r;
  for (int j = 0; j < 4; ++j) {
    r.per_input[j] = std::max(0.0, 1.0 - block.col(j).squaredNorm());
    r.l1 += r.per_input[j] / 4.0;
  }
  return r;
}

/// diag(1, e^{-i theta2}, e^{-i theta1}, e^{-i(theta1+theta2)}) * block, global phase fixed by arg(M_00) = 0.
inline Eigen::Matrix4cd apply_vz(const Eigen::Matrix4cd& block, double theta1, double theta2) {
  Eigen::Vector4cd d(1.0, std::polar(1.0, -theta2), std::polar(1.0, -theta1), std::polar(1.0, -(theta1 + theta2)));
  Eigen::Matrix4cd out = d.asDiagonal() * block;
  const double g = std::arg(out(0, 0));
  return out * std::polar(1.0, -g);
}

inline Eigen::Matrix4cd cz_matrix() { return Eigen::Vector4cd(1, 1, 1, -1).asDiagonal(); }

/// (Tr(M^dag M) + |Tr M|^2) / (d (d + 1)) for an already target-referenced block M.
inline double average_gate_fidelity(const MatC& m) {
  const double d = static_cast<double>(m.rows());
  return ((m.adjoint() * m).trace().real() + std::norm(m.trace())) / (d * (d + 1));
}

inline double average_gate_fidelity(const Eigen::Matrix4cd& block, const Eigen::Matrix4cd& target) {
  return average_gate_fidelity(MatC(target.adjoint() * block));
}

struct GateReport {
  double theta_cz = 0, theta1 = 0, theta2 = 0;
  double leakage_l1 = 0;
  double fidelity = 0;  // coherent, after VZ with theta1/theta2
  double dt_ns = 0;
  int steps = 0;
};

/// Report with VZ phases taken from the block itself unless supplied.
inline GateReport gate_report(const DynamicsModel& m, const Propagator& p, const double* vz1 = nullptr,
                              const double* vz2 = nullptr) {
  auto blk = computational_block(m, p.u);
  auto ph = cphase_angles(blk);
  GateReport r;
  r.theta_cz = ph.theta_cz();
  r.theta1 = vz1 ? *vz1 : ph.theta1();
  r.theta2 = vz2 ? *vz2 : ph.theta2();
  r.leakage_l1 = leakage_of(blk).l1;
  r.fidelity = average_gate_fidelity(apply_vz(blk, r.theta1, r.theta2), cz_matrix());
  r.dt_ns = p.dt;
  r.steps = p.steps;
  return r;
}

}  // namespace dtc
