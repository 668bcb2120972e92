#pragma once

#include "dtc/noise_channels.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace dtc {

/// 16x16 real PTM in the normalised Pauli basis {I,X,Y,Z} x {I,X,Y,Z}, index 4a + b.
using PauliTransferMatrix = Eigen::Matrix<double, 16, 16>;

inline const std::array<std::string, 16>& pauli_labels() {
  static const std::array<std::string, 16> l = [] {
    std::array<std::string, 16> out;
    const char* s = "IXYZ";
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) out[4 * a + b] = std::string{s[a], s[b]};
    return out;
  }();
  return l;
}

/// R_ij = Tr(P_i E(P_j)) / 4.
inline PauliTransferMatrix ptm_of(const KrausSet& k) {
  k.validate();
  if (k.dim() != 4) throw ConfigError("ptm_of needs a two-qubit channel");
  const auto p = two_qubit_paulis();
  PauliTransferMatrix r;
  for (int j = 0; j < 16; ++j) {
    const MatC out = k.apply(p[j]);
    for (int i = 0; i < 16; ++i) r(i, j) = (p[i] * out).trace().real() / 4.0;
  }
  return r;
}

inline PauliTransferMatrix ptm_of(const MatC& u) {
  if (u.rows() != 4 || u.cols() != 4) throw ConfigError("ptm_of needs a 4x4 unitary");
  return ptm_of(KrausSet{{u}, "unitary"});
}

/// Choi matrix sum_ij R_ij P_i/2 (x) (P_j/2)^T, output factor first; PSD iff the map is CP.
inline MatC choi_of(const PauliTransferMatrix& r) {
  const auto p = two_qubit_paulis();
  MatC j = MatC::Zero(16, 16);
  for (int a = 0; a < 16; ++a)
    for (int b = 0; b < 16; ++b)
      if (r(a, b) != 0.0) j += r(a, b) * detail::kron(MatC(p[a] / 2.0), MatC(p[b].transpose() / 2.0));
  return j;
}

inline PauliTransferMatrix ptm_from_choi(const MatC& j) {
  const auto p = two_qubit_paulis();
  PauliTransferMatrix r;
  for (int a = 0; a < 16; ++a)
    for (int b = 0; b < 16; ++b)
      r(a, b) = (detail::kron(MatC(p[a] / 2.0), MatC(p[b].transpose() / 2.0)) * j).trace().real();
  return r;
}

/// (Tr(R_ideal^T R) + d) / (d (d + 1)), d = 4.
inline double fidelity_from_ptm(const PauliTransferMatrix& r, const PauliTransferMatrix& ideal) {
  return ((ideal.transpose() * r).trace() + 4.0) / 20.0;
}

/// Readout assignment of one qubit, a(o, t) = P(read o | state t), columns sum to 1.
using Assignment = Eigen::Matrix2d;

inline Assignment column_normalized(Assignment a) {
  for (int c = 0; c < 2; ++c) {
    const double s = a.col(c).sum();
    if (!(s > 0)) throw ConfigError("assignment column sums to zero");
    a.col(c) /= s;
  }
  return a;
}

struct SpamModel {
  Assignment q1 = Assignment::Identity(), q2 = Assignment::Identity();
  std::array<double, 2> prep_excited{0.0, 0.0};  // residual |1> population of the nominal |0> preparation

  /// Measured |0>,|1> assignment of both qubits, restricted to the qubit outcomes and column-normalised.
  static SpamModel measured() {
    SpamModel s;
    Assignment a1, a2;
    a1 << 0.9933, 0.0006, 0.0121, 0.9787;
    a2 << 0.9973, 0.0017, 0.0231, 0.9704;
    s.q1 = column_normalized(a1);
    s.q2 = column_normalized(a2);
    return s;
  }
  /// As measured(), with half of each P(1|0) attributed to residual excited population at preparation.
  static SpamModel measured_with_preparation() {
    SpamModel s = measured();
    s.prep_excited = {0.5 * s.q1(1, 0), 0.5 * s.q2(1, 0)};
    return s;
  }
  void validate() const {
    for (const Assignment* a : {&q1, &q2}) {
      if ((a->array() < 0).any() || (a->colwise().sum().array() - 1).abs().maxCoeff() > 1e-9)
        throw ConfigError("assignment matrices must be column-stochastic");
    }
    for (double e : prep_excited)
      if (!(e >= 0 && e <= 1)) throw ConfigError("preparation error must lie in [0, 1]");
  }
};

/// Single-qubit states along {X+, X-, Y+, Y-, Z+, Z-}, prepared from |0> by {Y/2, -Y/2, -X/2, X/2, I, X}.
inline const std::array<Eigen::Matrix2cd, 6>& axis_gates() {
  static const std::array<Eigen::Matrix2cd, 6> g = [] {
    std::array<Eigen::Matrix2cd, 6> out;
    out[0] = detail::rotation('Y', kPi / 2);
    out[1] = detail::rotation('Y', -kPi / 2);
    out[2] = detail::rotation('X', -kPi / 2);
    out[3] = detail::rotation('X', kPi / 2);
    out[4] = Eigen::Matrix2cd::Identity();
    out[5] = detail::rotation('X', kPi);
    return out;
  }();
  return g;
}

struct QPTDataset {
  Eigen::Matrix<double, 36, 36> probs;  // probs(prep, meas), prep = 6 a + b and meas = 6 a + b over the axis list
  bool with_spam = false;
};

namespace detail {
inline Eigen::Vector2cd axis_state(int k) { return axis_gates()[k] * Eigen::Vector2cd(1, 0); }

/// Ideal frame: Pauli vectors of the 36 preparations (16 x 36) and measurement rows (36 x 16).
inline void qpt_frame(MatR& rin, MatR& meas) {
  const auto p = two_qubit_paulis();
  rin.resize(16, 36);
  meas.resize(36, 16);
  for (int a = 0; a < 6; ++a)
    for (int b = 0; b < 6; ++b) {
      const VecC v = kron(MatC(axis_state(a)), MatC(axis_state(b)));
      const MatC proj = v * v.adjoint();
      for (int i = 0; i < 16; ++i) {
        rin(i, 6 * a + b) = (p[i] * proj).trace().real();
        meas(6 * a + b, i) = (proj * p[i]).trace().real() / 4.0;
      }
    }
}
}  // namespace detail

/// Exact Born probabilities for 36 product preparations x 36 product projections, with optional SPAM.
/// Readout error mixes the outcomes that share a measurement basis (X, Y or Z per qubit).
inline QPTDataset simulate_qpt(const KrausSet& channel, const std::optional<SpamModel>& spam = std::nullopt) {
  channel.validate();
  if (channel.dim() != 4) throw ConfigError("simulate_qpt needs a two-qubit channel");
  if (spam) spam->validate();
  QPTDataset ds;
  ds.with_spam = spam.has_value();
  for (int a = 0; a < 6; ++a)
    for (int b = 0; b < 6; ++b) {
      auto prep1 = [&](int q, int k) {
        Eigen::Matrix2cd r = Eigen::Matrix2cd::Zero();
        const double e = spam ? spam->prep_excited[q] : 0.0;
        const Eigen::Vector2cd s0 = detail::axis_state(k);
        const Eigen::Vector2cd s1 = axis_gates()[k] * Eigen::Vector2cd(0, 1);
        r = (1 - e) * s0 * s0.adjoint() + e * s1 * s1.adjoint();
        return r;
      };
      const MatC rho = channel.apply(detail::kron(prep1(0, a), prep1(1, b)));
      for (int ba = 0; ba < 3; ++ba)
        for (int bb = 0; bb < 3; ++bb) {
          Eigen::Vector4d ideal;
          for (int sa = 0; sa < 2; ++sa)
            for (int sb = 0; sb < 2; ++sb) {
              const VecC v = detail::kron(MatC(detail::axis_state(2 * ba + sa)), MatC(detail::axis_state(2 * bb + sb)));
              ideal(2 * sa + sb) = (v.adjoint() * rho * v)(0).real();
            }
          Eigen::Vector4d got = ideal;
          if (spam) got = detail::kron(MatC(spam->q1.cast<cplx>()), MatC(spam->q2.cast<cplx>())).real() * ideal;
          for (int sa = 0; sa < 2; ++sa)
            for (int sb = 0; sb < 2; ++sb) ds.probs(6 * a + b, 6 * (2 * ba + sa) + (2 * bb + sb)) = got(2 * sa + sb);
        }
    }
  return ds;
}

inline QPTDataset simulate_qpt(const MatC& u, const std::optional<SpamModel>& spam = std::nullopt) {
  return simulate_qpt(KrausSet{{u}, "unitary"}, spam);
}

/// Trace-preserving projection: first row set to (1, 0, ..., 0).
inline PauliTransferMatrix project_tp(PauliTransferMatrix r) {
  r.row(0).setZero();
  r(0, 0) = 1;
  return r;
}

/// Completely-positive projection: negative Choi eigenvalues clipped.
inline PauliTransferMatrix project_cp(const PauliTransferMatrix& r) {
  MatC j = choi_of(r);
  j = (j + j.adjoint()).eval() / 2.0;
  auto ep = eigh(j);
  if (ep.values.minCoeff() >= 0) return r;
  VecR v = ep.values.cwiseMax(0.0);
  return ptm_from_choi(ep.vectors * v.asDiagonal() * ep.vectors.adjoint());
}

struct Reconstruction {
  PauliTransferMatrix raw;  // linear inversion
  PauliTransferMatrix ptm;  // after TP/CP projection
  int iterations = 0;
  double min_choi_eigenvalue = 0;
};

/// Least-squares inversion over the ideal preparation/measurement frame, then alternating TP and CP projections
/// (at most max_iter rounds). The result always has an exact TP first row.
inline Reconstruction reconstruct_ptm(const QPTDataset& ds, int max_iter = 100, double tol = 1e-10) {
  MatR rin, meas;
  detail::qpt_frame(rin, meas);
  Eigen::JacobiSVD<MatR> sm(meas, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Eigen::JacobiSVD<MatR> sr(rin, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const double cond = std::max(sm.singularValues()(0) / sm.singularValues().tail(1)(0),
                               sr.singularValues()(0) / sr.singularValues().tail(1)(0));
  if (!(cond < 1e8)) throw NumericalError("tomography frame is ill-conditioned");
  const MatR minv = meas.completeOrthogonalDecomposition().pseudoInverse();
  const MatR rinv = rin.completeOrthogonalDecomposition().pseudoInverse();
  const MatR data = ds.probs.transpose();  // 36 meas x 36 prep
  Reconstruction rec;
  rec.raw = minv * data * rinv;
  PauliTransferMatrix r = project_tp(rec.raw);
  for (rec.iterations = 0; rec.iterations < max_iter; ++rec.iterations) {
    auto ev = eigh(MatC(choi_of(r)));
    rec.min_choi_eigenvalue = ev.values.minCoeff();
    if (rec.min_choi_eigenvalue >= -tol) break;
    r = project_tp(project_cp(r));
  }
  rec.min_choi_eigenvalue = eigh(MatC(choi_of(r))).values.minCoeff();
  rec.ptm = r;
  return rec;
}

}  // namespace dtc
