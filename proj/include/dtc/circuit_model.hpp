#pragma once

#include "dtc/core.hpp"
#include "dtc/linalg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

namespace dtc {

/// Node/mutual capacitances (fF) and junction critical currents (nA).
/// Nodes 1..4 = Q1, Q2, C3, C4; junction 5 closes the coupler loop between nodes 3 and 4.
struct CircuitParams {
  Eigen::Matrix4d cap = Eigen::Matrix4d::Zero();
  Eigen::Matrix<double, 5, 1> ic = Eigen::Matrix<double, 5, 1>::Zero();

  static CircuitParams reference_device() {
    CircuitParams p;
    p.cap << 91.86, 0.04, 5.73, 0.17,  //
        0.04, 91.79, 0.26, 5.77,       //
        5.73, 0.26, 110.27, 1.73,      //
        0.17, 5.77, 1.73, 106.36;
    p.ic << 26.13, 31.93, 47.73, 47.68, 10.32;
    return p;
  }

  void validate() const {
    if (!cap.allFinite() || !ic.allFinite()) throw ConfigError("circuit parameters must be finite");
    if ((cap - cap.transpose()).cwiseAbs().maxCoeff() > 1e-12 * cap.cwiseAbs().maxCoeff())
      throw ConfigError("capacitance matrix is not symmetric");
    for (int i = 0; i < 4; ++i) {
      if (cap(i, i) <= 0) throw ConfigError("node capacitance C" + std::to_string(i + 1) + std::to_string(i + 1) + " must be > 0");
      for (int j = 0; j < 4; ++j)
        if (i != j && cap(i, j) < 0) throw ConfigError("mutual capacitances must be >= 0");
    }
    for (int i = 0; i < 5; ++i)
      if (ic(i) <= 0) throw ConfigError("critical current I_c" + std::to_string(i + 1) + " must be > 0");
  }

  /// Maxwell matrix: diagonal = sum of the row of C, off-diagonal = -C_ij.
  Eigen::Matrix4d maxwell() const {
    Eigen::Matrix4d m = -cap;
    for (int i = 0; i < 4; ++i) m(i, i) = cap.row(i).sum();
    return m;
  }

  Eigen::Matrix4d inverse_maxwell() const {
    Eigen::Matrix4d m = maxwell();
    Eigen::FullPivLU<Eigen::Matrix4d> lu(m);
    if (!lu.isInvertible() || std::abs(lu.determinant()) < 1e-12 * std::pow(m.cwiseAbs().maxCoeff(), 4))
      throw ConfigError("capacitance matrix is singular");
    return lu.inverse();
  }

  /// Josephson energies E_J/h in GHz.
  Eigen::Matrix<double, 5, 1> ej_ghz() const { return ic * kJosephsonGHzPerNa; }
};

/// Truncation settings. Fluxes are phi_ex / 2pi.
struct BasisConfig {
  int charge_cutoff_qubit = 15;
  int charge_cutoff_coupler = 10;
  int kept_levels_qubit = 6;
  int kept_levels_coupler = 30;
  int kept_total = 60;
  std::vector<double> coupler_reference_fluxes{0.309, 0.5};
  double idle_reference = 0.309;
  std::vector<double> dynamics_reference_fluxes{0.309, 0.35, 0.40, 0.47};
  // coupling mask: drop capacitive terms between qubit and coupler nodes / between the qubits
  bool qubit_coupler_coupling = true;
  bool qubit_qubit_coupling = true;

  void validate() const {
    if (charge_cutoff_qubit < 3 || charge_cutoff_coupler < 3) throw ConfigError("charge cutoffs must be >= 3");
    if (kept_levels_qubit < 3) throw ConfigError("kept_levels_qubit must be >= 3");
    if (kept_levels_coupler < 6) throw ConfigError("kept_levels_coupler must be >= 6");
    if (kept_total < 20) throw ConfigError("kept_total must be >= 20");
    if (kept_levels_qubit > 2 * charge_cutoff_qubit + 1) throw ConfigError("kept_levels_qubit exceeds charge basis");
    if (coupler_reference_fluxes.empty()) throw ConfigError("need at least one coupler reference flux");
    if (dynamics_reference_fluxes.empty()) throw ConfigError("need at least one dynamics reference flux");
    const int per = (kept_levels_coupler + static_cast<int>(coupler_reference_fluxes.size()) - 1) /
                    static_cast<int>(coupler_reference_fluxes.size());
    if (per > (2 * charge_cutoff_coupler + 1) * (2 * charge_cutoff_coupler + 1))
      throw ConfigError("kept_levels_coupler exceeds coupler charge basis");
  }
};

/// Occupation quadruple |Q1,Q2,P,M>.
struct StateLabel {
  int q1 = 0, q2 = 0, p = 0, m = 0;
  bool operator==(const StateLabel&) const = default;
  std::string str() const {
    return "|" + std::to_string(q1) + std::to_string(q2) + std::to_string(p) + std::to_string(m) + ">";
  }
};

namespace detail {

inline MatR charge_op(int n) {
  MatR m = MatR::Zero(2 * n + 1, 2 * n + 1);
  for (int k = 0; k <= 2 * n; ++k) m(k, k) = k - n;
  return m;
}

// e^{i phi}: |n> -> |n+1>
inline MatR raise_op(int n) {
  MatR m = MatR::Zero(2 * n + 1, 2 * n + 1);
  for (int k = 0; k < 2 * n; ++k) m(k + 1, k) = 1.0;
  return m;
}

inline MatR cos_op(int n) {
  MatR e = raise_op(n);
  return 0.5 * (e + e.transpose());
}

template <class A, class B>
MatC kron(const A& a, const B& b) {
  MatC out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = cplx(a(i, j)) * b.template cast<cplx>();
  return out;
}

}  // namespace detail

/// Flux-resolved Hamiltonian H(f) = h0 + cos(2 pi f) a + sin(2 pi f) b in the retained product basis
/// |q1> x |q2> x |c>, c fastest. Energies in GHz.
struct HamiltonianOperator {
  MatC h0, a, b;
  int mq = 0, mc = 0;
  VecR q1_levels, q2_levels;  // bare single-node levels (ground = 0)
  // coupler block in its own retained basis
  MatC coupler_h0, coupler_a, coupler_b;
  MatC coupler_np2, coupler_nm2;  // (n3+n4)^2 and (n3-n4)^2 for P/M occupation estimates

  int dim() const { return static_cast<int>(h0.rows()); }
  int index(int q1, int q2, int c) const { return (q1 * mq + q2) * mc + c; }

  // Negative reduced flux uses the complex-conjugate retained basis (H(-f) = H(f)* in the charge basis),
  // which keeps the truncated spectrum exactly even and 1-periodic.
  MatC at(double flux) const {
    const double w = flux - std::floor(flux);
    if (w > 0.5) return at(1.0 - w).conjugate();
    const double ph = kTwoPi * w;
    return h0 + std::cos(ph) * a + std::sin(ph) * b;
  }
  MatC coupler_at(double flux) const {
    const double w = flux - std::floor(flux);
    if (w > 0.5) return coupler_at(1.0 - w).conjugate();
    const double ph = kTwoPi * w;
    return coupler_h0 + std::cos(ph) * coupler_a + std::sin(ph) * coupler_b;
  }
};

namespace detail {

struct NodeSolution {
  VecR levels;  // absolute, GHz
  MatR n;       // charge operator in the kept eigenbasis
};

inline NodeSolution solve_node(double ec_coeff, double ej, int ncut, int keep) {
  MatR nq = charge_op(ncut);
  MatR h = ec_coeff * nq * nq - ej * cos_op(ncut);
  auto ep = eigh(h, keep);
  NodeSolution s;
  s.levels = ep.values;
  s.n = ep.vectors.transpose() * nq * ep.vectors;
  return s;
}

}  // namespace detail

/// Assemble the H0/A/B decomposition. Two-stage truncation: single-node qubit bases and a coupler
/// basis spanning the low coupler eigenstates at the reference fluxes, re-diagonalised at idle.
inline HamiltonianOperator build_hamiltonian(const CircuitParams& params, const BasisConfig& basis) {
  params.validate();
  basis.validate();
  const Eigen::Matrix4d ci = params.inverse_maxwell();
  const auto ej = params.ej_ghz();
  const double k = kChargingGHzfF;
  const int mq = basis.kept_levels_qubit;

  auto s1 = detail::solve_node(k * ci(0, 0), ej(0), basis.charge_cutoff_qubit, mq);
  auto s2 = detail::solve_node(k * ci(1, 1), ej(1), basis.charge_cutoff_qubit, mq);

  // coupler: nodes 3 (slow index) and 4 (fast index)
  const int nc = basis.charge_cutoff_coupler;
  const int dc = 2 * nc + 1;
  MatR n1d = detail::charge_op(nc);
  MatR id = MatR::Identity(dc, dc);
  MatR c1d = detail::cos_op(nc);
  MatR e1d = detail::raise_op(nc);
  MatC n3 = detail::kron(n1d, id), n4 = detail::kron(id, n1d);
  MatC hc0 = k * (ci(2, 2) * n3 * n3 + ci(3, 3) * n4 * n4 + 2.0 * ci(2, 3) * n3 * n4) -
             ej(2) * detail::kron(c1d, id) - ej(3) * detail::kron(id, c1d);
  // X = e^{i(phi4 - phi3)}
  MatC x = detail::kron(MatR(e1d.transpose()), e1d);
  MatC ac = -0.5 * ej(4) * (x + x.adjoint());
  MatC bc = cplx(0.0, 0.5 * ej(4)) * (x - x.adjoint());

  const int nref = static_cast<int>(basis.coupler_reference_fluxes.size());
  const int per = (basis.kept_levels_coupler + nref - 1) / nref;
  MatC stack(dc * dc, per * nref);
  for (int r = 0; r < nref; ++r) {
    const double ph = kTwoPi * basis.coupler_reference_fluxes[r];
    auto ep = eigh(MatC(hc0 + std::cos(ph) * ac + std::sin(ph) * bc), per);
    stack.middleCols(r * per, per) = ep.vectors;
  }
  MatC q = orthonormal_span(stack);
  if (q.cols() > basis.kept_levels_coupler) q.conservativeResize(Eigen::NoChange, basis.kept_levels_coupler);
  {
    const double ph = kTwoPi * basis.idle_reference;
    MatC hi = q.adjoint() * (hc0 + std::cos(ph) * ac + std::sin(ph) * bc) * q;
    auto ep = eigh(hi);
    q = q * ep.vectors;
  }
  const int mc = static_cast<int>(q.cols());

  HamiltonianOperator h;
  h.mq = mq;
  h.mc = mc;
  h.q1_levels = s1.levels.array() - s1.levels(0);
  h.q2_levels = s2.levels.array() - s2.levels(0);
  h.coupler_h0 = q.adjoint() * hc0 * q;
  h.coupler_a = q.adjoint() * ac * q;
  h.coupler_b = q.adjoint() * bc * q;
  MatC np = n3 + n4, nm = n3 - n4;
  h.coupler_np2 = q.adjoint() * np * np * q;
  h.coupler_nm2 = q.adjoint() * nm * nm * q;
  MatC n3p = q.adjoint() * n3 * q, n4p = q.adjoint() * n4 * q;

  MatR iq = MatR::Identity(mq, mq);
  MatC icc = MatC::Identity(mc, mc);
  MatR w1 = s1.levels.asDiagonal(), w2 = s2.levels.asDiagonal();
  auto k3 = [](const auto& a1, const auto& a2, const MatC& a3) { return detail::kron(detail::kron(a1, a2), a3); };

  h.h0 = k3(w1, iq, icc) + k3(iq, w2, icc) + k3(iq, iq, h.coupler_h0);
  if (basis.qubit_qubit_coupling) h.h0 += 2.0 * k * ci(0, 1) * k3(s1.n, s2.n, icc);
  if (basis.qubit_coupler_coupling) {
    h.h0 += 2.0 * k *
            (ci(0, 2) * k3(s1.n, iq, n3p) + ci(0, 3) * k3(s1.n, iq, n4p) + ci(1, 2) * k3(iq, s2.n, n3p) +
             ci(1, 3) * k3(iq, s2.n, n4p));
  }
  h.a = k3(iq, iq, h.coupler_a);
  h.b = k3(iq, iq, h.coupler_b);
  // symmetrise away rounding
  h.h0 = 0.5 * (h.h0 + h.h0.adjoint()).eval();
  h.a = 0.5 * (h.a + h.a.adjoint()).eval();
  h.b = 0.5 * (h.b + h.b.adjoint()).eval();
  return h;
}

/// Lowest k eigenpairs at a flux; energies relative to the instantaneous ground state.
struct SpectrumPoint {
  double flux = 0;
  double ground = 0;  // absolute ground energy, GHz
  VecR energies;
  MatC vectors;
};

inline SpectrumPoint eigensolve(const HamiltonianOperator& h, double flux, int k) {
  if (k <= 0 || k > h.dim()) throw ConfigError("eigensolve: k out of range");
  MatC hm = h.at(flux);
  auto ep = eigh(hm, k);
  const double scale = std::max(1.0, hm.cwiseAbs().maxCoeff());
  const double res = (hm * ep.vectors - ep.vectors * ep.values.asDiagonal()).cwiseAbs().maxCoeff();
  if (res > 1e-10 * scale * std::sqrt(static_cast<double>(h.dim())))
    throw NumericalError("eigensolve residual " + std::to_string(res) + " above tolerance");
  SpectrumPoint s;
  s.flux = flux;
  s.ground = ep.values(0);
  s.energies = ep.values.array() - ep.values(0);
  s.vectors = std::move(ep.vectors);
  return s;
}

struct LabelResult {
  std::vector<StateLabel> labels;
  std::vector<double> overlap;      // |<bare|state>|^2 of the assigned bare state
  std::vector<int> bare_index;      // (q1*mq+q2)*mc + coupler level at this flux
  std::vector<std::string> warnings;
};

/// P/M occupations of coupler eigenstates at a flux (diabatic coupler basis).
struct CouplerStates {
  VecR energies;
  MatC vectors;  // in the retained coupler basis
  std::vector<std::pair<int, int>> pm;
};

inline CouplerStates coupler_states(const HamiltonianOperator& h, double flux) {
  const double w = flux - std::floor(flux);
  if (w > 0.5) {
    CouplerStates cs = coupler_states(h, 1.0 - w);
    cs.vectors = cs.vectors.conjugate().eval();
    return cs;
  }
  CouplerStates cs;
  auto ep = eigh(h.coupler_at(flux));
  cs.energies = ep.values.array() - ep.values(0);
  cs.vectors = ep.vectors;
  const int mc = h.mc;
  std::vector<double> sp(mc), sm(mc);
  for (int c = 0; c < mc; ++c) {
    sp[c] = (cs.vectors.col(c).adjoint() * h.coupler_np2 * cs.vectors.col(c))(0).real();
    sm[c] = (cs.vectors.col(c).adjoint() * h.coupler_nm2 * cs.vectors.col(c))(0).real();
  }
  std::vector<std::pair<int, int>> used;
  cs.pm.resize(mc);
  for (int c = 0; c < mc; ++c) {
    const double kp = 0.5 * (sp[c] / sp[0] - 1.0), km = 0.5 * (sm[c] / sm[0] - 1.0);
    double best = 1e300;
    std::pair<int, int> pick{0, 0};
    for (int p = 0; p <= mc; ++p)
      for (int m = 0; p + m <= mc; ++m) {
        if (std::find(used.begin(), used.end(), std::make_pair(p, m)) != used.end()) continue;
        const double d = sqr(kp - p) + sqr(km - m);
        if (d < best) {
          best = d;
          pick = {p, m};
        }
      }
    used.push_back(pick);
    cs.pm[c] = pick;
  }
  return cs;
}

/// Injective maximum-overlap assignment of eigenvectors to bare product states |q1,q2,c(flux)>.
/// Ties go to the lower bare energy.
inline LabelResult label_states(const HamiltonianOperator& h, double flux, const MatC& vectors) {
  const double w = flux - std::floor(flux);
  if (w > 0.5) return label_states(h, 1.0 - w, MatC(vectors.conjugate()));
  const int mq = h.mq, mc = h.mc, nb = mq * mq * mc;
  auto cs = coupler_states(h, flux);
  VecR ebare(nb);
  for (int i = 0; i < mq; ++i)
    for (int j = 0; j < mq; ++j)
      for (int c = 0; c < mc; ++c) ebare(h.index(i, j, c)) = h.q1_levels(i) + h.q2_levels(j) + cs.energies(c);

  LabelResult out;
  std::vector<char> taken(nb, 0);
  for (Eigen::Index s = 0; s < vectors.cols(); ++s) {
    Eigen::Map<const MatC> m(vectors.col(s).data(), mc, mq * mq);
    MatC ov = cs.vectors.adjoint() * m;  // (c', q)
    int best = -1;
    double bo = -1;
    for (int q = 0; q < mq * mq; ++q)
      for (int c = 0; c < mc; ++c) {
        const int idx = q * mc + c;
        if (taken[idx]) continue;
        const double o = std::norm(ov(c, q));
        if (o > bo + 1e-12 || (std::abs(o - bo) <= 1e-12 && ebare(idx) < ebare(best))) {
          bo = o;
          best = idx;
        }
      }
    taken[best] = 1;
    const int c = best % mc, q = best / mc;
    StateLabel l{q / mq, q % mq, cs.pm[c].first, cs.pm[c].second};
    out.labels.push_back(l);
    out.overlap.push_back(bo);
    out.bare_index.push_back(best);
    if (bo < 0.25)
      out.warnings.push_back("ambiguous label " + l.str() + " for state " + std::to_string(s) +
                             " (overlap " + std::to_string(bo) + ")");
  }
  return out;
}

struct EnergySpectrum {
  std::vector<double> flux_points;
  MatR energies;                               // (k x points), ascending per column, ground = 0
  std::vector<std::vector<StateLabel>> labels;  // [point][state]
  std::vector<std::vector<double>> overlap;     // [point][state]
  std::vector<std::string> warnings;
};

namespace detail {

// Greedy injective matching of previous vectors to new ones by overlap; returns new index per branch.
inline std::vector<int> match_by_overlap(const MatC& prev, const MatC& next, std::vector<double>& best) {
  MatR o = (prev.adjoint() * next).cwiseAbs2();
  const int nb = static_cast<int>(o.rows()), nn = static_cast<int>(o.cols());
  std::vector<int> assign(nb, -1);
  std::vector<char> used(nn, 0);
  best.assign(nb, 0.0);
  std::vector<int> order(nb);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> rowmax(nb);
  for (int i = 0; i < nb; ++i) rowmax[i] = o.row(i).maxCoeff();
  std::sort(order.begin(), order.end(), [&](int x, int y) { return rowmax[x] > rowmax[y]; });
  for (int i : order) {
    int pick = -1;
    double bo = -1;
    for (int j = 0; j < nn; ++j)
      if (!used[j] && o(i, j) > bo) {
        bo = o(i, j);
        pick = j;
      }
    if (pick >= 0) {
      used[pick] = 1;
      assign[i] = pick;
      best[i] = bo;
    }
  }
  return assign;
}

}  // namespace detail

/// Eigensolve over a sorted flux grid with adiabatic continuity tracking: labels are carried along
/// branches matched by maximum overlap with the previous point.
inline EnergySpectrum spectrum_scan(const HamiltonianOperator& h, const std::vector<double>& grid, int k,
                                    int buffer = 6) {
  if (grid.empty()) throw ConfigError("spectrum_scan: empty grid");
  if (!std::is_sorted(grid.begin(), grid.end())) throw ConfigError("spectrum_scan: grid must be sorted");
  const int kk = std::min(h.dim(), k + buffer);
  EnergySpectrum out;
  out.flux_points = grid;
  out.energies.resize(k, static_cast<Eigen::Index>(grid.size()));
  std::vector<StateLabel> branch_label;
  MatC prev;
  std::vector<int> branch_of;  // eigen index -> branch
  for (std::size_t p = 0; p < grid.size(); ++p) {
    auto sp = eigensolve(h, grid[p], kk);
    out.energies.col(static_cast<Eigen::Index>(p)) = sp.energies.head(k);
    auto lr = label_states(h, grid[p], sp.vectors);
    std::vector<StateLabel> labels(k);
    std::vector<double> ovl(k);
    if (p == 0) {
      branch_label = lr.labels;
      for (int i = 0; i < k; ++i) {
        labels[i] = lr.labels[i];
        ovl[i] = lr.overlap[i];
      }
      for (auto& w : lr.warnings) out.warnings.push_back(w);
    } else {
      std::vector<double> best;
      auto assign = detail::match_by_overlap(prev, sp.vectors, best);
      std::vector<int> owner(kk, -1);
      for (int b = 0; b < kk; ++b)
        if (assign[b] >= 0) owner[assign[b]] = b;
      for (int b = 0; b < kk; ++b)
        if (assign[b] >= 0 && assign[b] < k && best[b] < 0.5)
          throw NumericalError("tracking lost at flux " + std::to_string(grid[p]) + " (overlap " +
                               std::to_string(best[b]) + "); refine the flux grid");
      std::vector<StateLabel> next_label(kk);
      for (int i = 0; i < kk; ++i) next_label[i] = owner[i] >= 0 ? branch_label[owner[i]] : lr.labels[i];
      // states entering the window from above take their max-overlap label if it is free
      branch_label = next_label;
      for (int i = 0; i < k; ++i) {
        labels[i] = branch_label[i];
        ovl[i] = lr.overlap[i];
      }
    }
    out.labels.push_back(labels);
    out.overlap.push_back(ovl);
    prev = sp.vectors;
  }
  return out;
}

}  // namespace dtc
