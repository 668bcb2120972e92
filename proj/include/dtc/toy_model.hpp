#pragma once

#include "dtc/circuit_model.hpp"
#include "dtc/linalg.hpp"

#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace dtc {

/// Reduced two-qubit + p/m-mode description of the DTC. Frequencies in GHz, capacitances in fF.
struct ToyParams {
  double omega1 = 0, omega2 = 0;
  double eta1 = 0, eta2 = 0;
  double omega_p = 0, omega_m = 0;  // omega_m at `flux`
  double flux = 0;
  double g1p = 0, g2p = 0, g1m = 0, g2m = 0;  // magnitudes; the minus sign on g2m is applied in effective_coupling
  double cq_eff = 0, cp_eff = 0, cm_eff = 0, cgp_eff = 0, cgm_eff = 0;
  double alpha = 0;
  double ej = 0;                  // symmetrised coupler junction energy
  double charge_p = 0, charge_m = 0;  // K / C~ (GHz), coefficient of n^2
  // closed-form prefactors g_i = sqrt(omega_i omega_mode) * factor
  double factor1p = 0, factor2p = 0, factor1m = 0, factor2m = 0;
  double asymmetry = 0;           // max relative mismatch of C33/C44, I_c3/I_c4
  std::vector<std::string> warnings;
};

namespace detail {

// Lowest levels of E_n n^2 + V(phi) in a harmonic-oscillator basis centred on phi0.
template <class Pot>
VecR ho_levels(double en, double curvature, double phi0, Pot&& pot, int dim, int keep) {
  const double s2 = std::sqrt(2.0 * en / curvature);  // phi_zpf^2 * 2
  const double s = std::sqrt(s2);
  MatR x = MatR::Zero(dim, dim);
  for (int k = 0; k + 1 < dim; ++k) x(k, k + 1) = x(k + 1, k) = std::sqrt(k + 1.0);
  MatR phi = (s / std::sqrt(2.0)) * x;
  // n = i (a^dag - a) / (s sqrt 2); n^2 is real
  MatR p = MatR::Zero(dim, dim);
  for (int k = 0; k + 1 < dim; ++k) {
    p(k + 1, k) = std::sqrt(k + 1.0);
    p(k, k + 1) = -std::sqrt(k + 1.0);
  }
  MatR n2 = -(p * p) / (2.0 * s2);
  auto ph = eigh(phi);
  VecR vdiag(dim);
  for (int k = 0; k < dim; ++k) vdiag(k) = pot(phi0 + ph.values(k));
  MatR h = en * n2 + ph.vectors * vdiag.asDiagonal() * ph.vectors.transpose();
  return eigh(h, keep).values;
}

inline double golden_min(const std::function<double(double)>& f, double a, double b, double tol = 1e-12) {
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - r * (b - a), d = a + r * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - r * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + r * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace detail

/// phi_m at the minimum of -2 E_J cos(phi_m) - alpha E_J cos(2 phi_m + phi_ex) (phi_p = 0), in radians.
inline double m_mode_minimum(double alpha, double phi_ex) {
  auto v = [&](double m) { return -2.0 * std::cos(m) - alpha * std::cos(2.0 * m + phi_ex); };
  // coarse bracket then golden section, then Newton on the stationarity condition
  double best = 0, bv = 1e300;
  for (int i = 0; i <= 720; ++i) {
    const double m = -kPi + kTwoPi * i / 720.0;
    if (v(m) < bv) {
      bv = v(m);
      best = m;
    }
  }
  double m = detail::golden_min(v, best - kTwoPi / 720.0, best + kTwoPi / 720.0, 1e-10);
  for (int it = 0; it < 20; ++it) {
    const double g = std::sin(m) + alpha * std::sin(2.0 * m + phi_ex);
    const double h = std::cos(m) + 2.0 * alpha * std::cos(2.0 * m + phi_ex);
    if (std::abs(h) < 1e-14) break;
    m -= g / h;
    if (std::abs(g) < 1e-15) break;
  }
  return m;
}

inline double m_mode_frequency(const ToyParams& t, double flux) {
  const double phx = kTwoPi * flux;
  const double m0 = m_mode_minimum(t.alpha, phx);
  auto pot = [&](double m) { return -2.0 * t.ej * std::cos(m) - t.alpha * t.ej * std::cos(2.0 * m + phx); };
  const double curv = 2.0 * t.ej * std::cos(m0) + 4.0 * t.alpha * t.ej * std::cos(2.0 * m0 + phx);
  VecR e = detail::ho_levels(t.charge_m, curv, m0, pot, 40, 2);
  return e(1) - e(0);
}

/// Toy-model reduction at a reference flux (phi_ex / 2pi).
inline ToyParams derive_toy_params(const CircuitParams& params, double flux = 0.309) {
  params.validate();
  ToyParams t;
  const auto& c = params.cap;
  const auto ej = params.ej_ghz();
  const double k = kChargingGHzfF;
  t.asymmetry = std::max(std::abs(c(2, 2) - c(3, 3)) / (0.5 * (c(2, 2) + c(3, 3))),
                         std::abs(params.ic(2) - params.ic(3)) / (0.5 * (params.ic(2) + params.ic(3))));
  if (t.asymmetry > 0.1) t.warnings.push_back("coupler asymmetry " + std::to_string(t.asymmetry) + " exceeds 10%");
  const double cc = 0.5 * (c(2, 2) + c(3, 3));
  t.ej = 0.5 * (ej(2) + ej(3));
  t.alpha = ej(4) / t.ej;
  if (t.alpha <= 0 || t.alpha >= 1) throw DomainError("junction ratio alpha must lie in (0, 1)");

  // kinetic matrix in (phi1, phi2, phi_p, phi_m), symmetrised coupler, C12 = C14 = C23 = 0
  const double c13 = c(0, 2), c24 = c(1, 3), c34 = c(2, 3);
  Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
  m(0, 0) = c(0, 0) + c13;
  m(1, 1) = c(1, 1) + c24;
  m(2, 2) = 2.0 * cc + c13 + c24;
  m(3, 3) = 2.0 * cc + c13 + c24 + 4.0 * c34;
  m(0, 2) = m(2, 0) = -c13;
  m(0, 3) = m(3, 0) = -c13;
  m(1, 2) = m(2, 1) = -c24;
  m(1, 3) = m(3, 1) = c24;
  const Eigen::Matrix4d mi = m.inverse();
  t.cq_eff = 2.0 / (mi(0, 0) + mi(1, 1));
  t.cp_eff = 1.0 / mi(2, 2);
  t.cm_eff = 1.0 / mi(3, 3);
  t.cgp_eff = 2.0 / (mi(0, 2) + mi(1, 2));
  t.cgm_eff = 2.0 / (mi(0, 3) - mi(1, 3));
  t.charge_p = k * mi(2, 2);
  t.charge_m = k * mi(3, 3);

  auto qubit = [&](double en, double e) {
    auto pot = [&](double x) { return -e * std::cos(x); };
    VecR l = detail::ho_levels(en, e, 0.0, pot, 40, 3);
    return std::make_pair(l(1) - l(0), (l(2) - l(1)) - (l(1) - l(0)));
  };
  auto [w1, a1] = qubit(k * mi(0, 0), ej(0));
  auto [w2, a2] = qubit(k * mi(1, 1), ej(1));
  t.omega1 = w1;
  t.omega2 = w2;
  t.eta1 = a1;
  t.eta2 = a2;
  {
    auto pot = [&](double x) { return -2.0 * t.ej * std::cos(x); };
    VecR l = detail::ho_levels(t.charge_p, 2.0 * t.ej, 0.0, pot, 40, 2);
    t.omega_p = l(1) - l(0);
  }
  t.flux = flux;
  t.omega_m = m_mode_frequency(t, flux);

  auto fac = [](double cg, double cq, double cmode) { return cg / (2.0 * std::sqrt((cq + cg) * (cmode + cg))); };
  t.factor1p = fac(c13, c(0, 0), cc);
  t.factor2p = fac(c24, c(1, 1), cc);
  t.factor1m = fac(c13, c(0, 0), cc + 2.0 * c34);
  t.factor2m = fac(c24, c(1, 1), cc + 2.0 * c34);
  t.g1p = std::sqrt(t.omega1 * t.omega_p) * t.factor1p;
  t.g2p = std::sqrt(t.omega2 * t.omega_p) * t.factor2p;
  t.g1m = std::sqrt(t.omega1 * t.omega_m) * t.factor1m;
  t.g2m = std::sqrt(t.omega2 * t.omega_m) * t.factor2m;
  return t;
}

struct EffectiveCoupling {
  double g_eff = 0;  // GHz
  double omega_m = 0;
  bool dispersive = true;  // every |Delta| > 3 g
};

/// Second-order exchange coupling through the p and m modes; couplings g_im re-evaluated at omega_m(flux).
inline EffectiveCoupling effective_coupling(const ToyParams& t, double flux) {
  EffectiveCoupling r;
  r.omega_m = m_mode_frequency(t, flux);
  const double g1m = std::sqrt(t.omega1 * r.omega_m) * t.factor1m;
  const double g2m = std::sqrt(t.omega2 * r.omega_m) * t.factor2m;
  const double d1p = t.omega1 - t.omega_p, d2p = t.omega2 - t.omega_p;
  const double d1m = t.omega1 - r.omega_m, d2m = t.omega2 - r.omega_m;
  const char* names[] = {"Q1-P", "Q2-P", "Q1-M", "Q2-M"};
  const double ds[] = {d1p, d2p, d1m, d2m};
  const double gs[] = {t.g1p, t.g2p, g1m, g2m};
  for (int i = 0; i < 4; ++i) {
    if (ds[i] == 0.0) throw DomainError(std::string("exact resonance in pair ") + names[i]);
    if (std::abs(ds[i]) <= 3.0 * gs[i]) r.dispersive = false;
  }
  r.g_eff = 0.5 * t.g1p * t.g2p * (1.0 / d1p + 1.0 / d2p) - 0.5 * g1m * g2m * (1.0 / d1m + 1.0 / d2m);
  return r;
}

/// Bare formula with explicit couplings and detunings (GHz).
inline double effective_coupling(double g1p, double g2p, double g1m, double g2m, double d1p, double d2p, double d1m,
                                 double d2m) {
  for (double d : {d1p, d2p, d1m, d2m})
    if (d == 0.0) throw DomainError("exact resonance in effective coupling");
  return 0.5 * g1p * g2p * (1.0 / d1p + 1.0 / d2p) - 0.5 * g1m * g2m * (1.0 / d1m + 1.0 / d2m);
}

/// Flux (phi_ex / 2pi, in (0, 0.5)) where 2 phi_m + phi_ex = pi/2 with sin phi_m = -alpha.
inline double idle_point_estimate(double alpha) {
  if (!(alpha >= 0.0) || alpha >= 1.0) throw DomainError("idle_point_estimate requires 0 <= alpha < 1");
  return 0.25 + std::asin(alpha) / kPi;
}

struct PotentialSurface {
  std::vector<double> phi_p, phi_m;  // grid axes (rad)
  MatR v_exact, v_approx, diff;      // (phi_p index, phi_m index), GHz
  double min_phi_m = 0;              // location of the exact minimum (phi_p = 0)
  double min_residual = 0;           // stationarity residual there
};

/// Exact and separable coupler potentials on an n x n grid over [-half_width, half_width]^2.
inline PotentialSurface potential_surface(const CircuitParams& params, double flux, int n = 101,
                                          double half_width = kPi) {
  if (n < 3) throw ConfigError("potential grid needs n >= 3");
  if (half_width < kPi / 2) throw ConfigError("potential grid must cover [-pi/2, pi/2]");
  const auto ej = params.ej_ghz();
  const double e = 0.5 * (ej(2) + ej(3));
  const double alpha = ej(4) / e;
  const double phx = kTwoPi * flux;
  auto vex = [&](double p, double m) { return -2.0 * e * std::cos(p) * std::cos(m) - alpha * e * std::cos(2 * m + phx); };
  auto vap = [&](double p, double m) {
    return -2.0 * e * std::cos(p) - 2.0 * e * std::cos(m) - alpha * e * std::cos(2 * m + phx);
  };
  PotentialSurface s;
  s.min_phi_m = m_mode_minimum(alpha, phx);
  s.min_residual = std::abs(std::sin(s.min_phi_m) + alpha * std::sin(2 * s.min_phi_m + phx));
  const double ex0 = vex(0.0, s.min_phi_m), ap0 = vap(0.0, s.min_phi_m);
  s.v_exact.resize(n, n);
  s.v_approx.resize(n, n);
  for (int i = 0; i < n; ++i) {
    const double x = -half_width + 2.0 * half_width * i / (n - 1);
    s.phi_p.push_back(x);
    s.phi_m.push_back(x);
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      s.v_exact(i, j) = vex(s.phi_p[i], s.phi_m[j]) - ex0;
      s.v_approx(i, j) = vap(s.phi_p[i], s.phi_m[j]) - ap0;
    }
  s.diff = s.v_exact - s.v_approx;
  return s;
}

}  // namespace dtc
