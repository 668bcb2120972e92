#pragma once

#include "dtc/circuit_model.hpp"
#include "dtc/toy_model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace dtc {

struct TrackingOptions {
  double anchor = 0.309;   // flux where the computational states are labeled
  double max_step = 0.001;
  int states = 16;
  double min_overlap = 0.5;
};

/// Follows |0000>, |1000>, |0100>, |1100> adiabatically from the anchor flux.
class ComputationalTracker {
 public:
  static constexpr std::array<StateLabel, 4> kLabels{StateLabel{0, 0, 0, 0}, StateLabel{1, 0, 0, 0},
                                                     StateLabel{0, 1, 0, 0}, StateLabel{1, 1, 0, 0}};

  ComputationalTracker(const HamiltonianOperator& h, TrackingOptions opt = {}) : h_(&h), opt_(opt) {
    if (opt_.max_step <= 0) throw ConfigError("tracking step must be > 0");
    opt_.states = std::min(opt_.states, h.dim());
    auto sp = eigensolve(h, opt_.anchor, opt_.states);
    auto lr = label_states(h, opt_.anchor, sp.vectors);
    std::string diag;
    for (int c = 0; c < 4; ++c) {
      int found = -1;
      for (int i = 0; i < opt_.states; ++i)
        if (lr.labels[i] == kLabels[c]) found = i;
      if (found < 0 || lr.overlap[found] < opt_.min_overlap) {
        for (int i = 0; i < opt_.states; ++i) diag += " " + lr.labels[i].str() + ":" + std::to_string(lr.overlap[i]);
        throw NumericalError("computational state " + kLabels[c].str() + " not identifiable at flux " +
                             std::to_string(opt_.anchor) + "; overlaps" + diag);
      }
      vec_.col(c) = sp.vectors.col(found);
      energy_[c] = sp.energies(found) + sp.ground;
      overlap_[c] = lr.overlap[found];
    }
    flux_ = opt_.anchor;
  }

  void advance_to(double target) {
    const double span = target - flux_;
    const int n = static_cast<int>(std::ceil(std::abs(span) / opt_.max_step - 1e-9));
    const double start = flux_;
    for (int s = 1; s <= n; ++s) step(start + span * s / n);
  }

  double flux() const { return flux_; }
  const std::array<double, 4>& energies() const { return energy_; }
  const std::array<double, 4>& overlaps() const { return overlap_; }
  const Eigen::Matrix<cplx, Eigen::Dynamic, 4>& vectors() const { return vec_; }
  double zeta_mhz() const { return 1e3 * (energy_[3] + energy_[0] - energy_[1] - energy_[2]); }

  /// Solve at `f` and match against the current vectors without moving the tracker.
  std::array<double, 4> probe(double f) const {
    ComputationalTracker copy = *this;
    copy.step(f);
    return copy.energy_;
  }

 private:
  void step(double f) {
    auto sp = eigensolve(*h_, f, opt_.states);
    MatR o = (vec_.adjoint() * sp.vectors).cwiseAbs2();
    std::array<int, 4> pick{};
    for (int c = 0; c < 4; ++c) {
      Eigen::Index j;
      const double best = o.row(c).maxCoeff(&j);
      if (best < opt_.min_overlap)
        throw NumericalError("tracking lost for " + kLabels[c].str() + " at flux " + std::to_string(f) +
                             " (overlap " + std::to_string(best) + "); refine the step");
      pick[c] = static_cast<int>(j);
      for (int d = 0; d < c; ++d)
        if (pick[d] == pick[c]) throw NumericalError("tracked computational states merged at flux " + std::to_string(f));
      overlap_[c] = best;
    }
    for (int c = 0; c < 4; ++c) {
      // fix the global phase to the previous vector
      cplx ph = (vec_.col(c).adjoint() * sp.vectors.col(pick[c]))(0);
      ph = std::abs(ph) > 0 ? std::conj(ph) / std::abs(ph) : cplx(1.0);
      vec_.col(c) = sp.vectors.col(pick[c]) * ph;
      energy_[c] = sp.energies(pick[c]) + sp.ground;
    }
    flux_ = f;
  }

  const HamiltonianOperator* h_;
  TrackingOptions opt_;
  Eigen::Matrix<cplx, Eigen::Dynamic, 4> vec_ = Eigen::Matrix<cplx, Eigen::Dynamic, 4>(h_->dim(), 4);
  std::array<double, 4> energy_{};
  std::array<double, 4> overlap_{};
  double flux_ = 0;
};

/// Folds any reduced flux into [0, 0.5] using periodicity and reflection evenness.
inline double fold_flux(double f) {
  const double w = f - std::floor(f);
  return w > 0.5 ? 1.0 - w : w;
}

/// zeta/2pi in MHz from the four computational energies (any common offset cancels).
inline double zeta_from_energies(double e00, double e10, double e01, double e11) { return 1e3 * (e11 + e00 - e10 - e01); }

/// zeta/2pi (MHz, signed) at one flux, tracking adiabatically from the anchor.
inline double zz_at(const HamiltonianOperator& h, double flux, TrackingOptions opt = {}) {
  ComputationalTracker t(h, opt);
  t.advance_to(fold_flux(flux));
  return t.zeta_mhz();
}

struct ZZCurve {
  std::vector<double> flux_points;
  std::vector<double> zeta_mhz;
  double idle_point = 0, max_point = 0;
  double zeta_min_mhz = 0, zeta_max_mhz = 0;  // signed values at idle_point / max_point
  double onoff_ratio = 1;
};

inline void finalize_curve(ZZCurve& c) {
  std::size_t imin = 0, imax = 0;
  for (std::size_t i = 0; i < c.zeta_mhz.size(); ++i) {
    if (std::abs(c.zeta_mhz[i]) < std::abs(c.zeta_mhz[imin])) imin = i;
    if (std::abs(c.zeta_mhz[i]) > std::abs(c.zeta_mhz[imax])) imax = i;
  }
  c.idle_point = c.flux_points[imin];
  c.max_point = c.flux_points[imax];
  c.zeta_min_mhz = c.zeta_mhz[imin];
  c.zeta_max_mhz = c.zeta_mhz[imax];
  const double lo = std::abs(c.zeta_min_mhz);
  c.onoff_ratio = lo > 0 ? std::abs(c.zeta_max_mhz) / lo : std::numeric_limits<double>::infinity();
}

/// zeta over a grid within [0, 0.5]; one tracker walks up from the anchor, another walks down.
inline ZZCurve zz_scan(const HamiltonianOperator& h, const std::vector<double>& grid, TrackingOptions opt = {}) {
  if (grid.empty()) throw ConfigError("zz_scan: empty grid");
  for (double f : grid)
    if (f < 0 || f > 0.5) throw ConfigError("zz_scan: grid must lie within [0, 0.5]");
  std::vector<std::size_t> order(grid.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return grid[a] < grid[b]; });
  ZZCurve c;
  c.flux_points.resize(grid.size());
  c.zeta_mhz.resize(grid.size());
  ComputationalTracker up(h, opt);
  ComputationalTracker down = up;
  for (std::size_t i : order)
    if (grid[i] >= opt.anchor) {
      up.advance_to(grid[i]);
      c.flux_points[i] = grid[i];
      c.zeta_mhz[i] = up.zeta_mhz();
    }
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if (grid[*it] < opt.anchor) {
      down.advance_to(grid[*it]);
      c.flux_points[*it] = grid[*it];
      c.zeta_mhz[*it] = down.zeta_mhz();
    }
  finalize_curve(c);
  return c;
}

inline std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = n == 1 ? a : a + (b - a) * i / (n - 1);
  return v;
}

struct IdleSearch {
  double flux = 0;
  double zeta_mhz = 0;
  int evaluations = 0;
};

/// argmin |zeta| within [lo, hi]: tracked scan at the tracking step, then golden-section refinement.
inline IdleSearch find_idle_point(const HamiltonianOperator& h, double lo, double hi, TrackingOptions opt = {},
                                  double tol = 1e-5) {
  if (!(lo < hi)) throw ConfigError("find_idle_point: empty bracket");
  opt.anchor = std::clamp(opt.anchor, lo, hi);
  const int n = std::max(2, static_cast<int>(std::ceil((hi - lo) / opt.max_step)) + 1);
  auto grid = linspace(lo, hi, n);
  std::vector<ComputationalTracker> states;
  states.reserve(n);
  ComputationalTracker t(h, opt);
  t.advance_to(lo);
  IdleSearch r;
  std::vector<double> z(n);
  for (int i = 0; i < n; ++i) {
    t.advance_to(grid[i]);
    states.push_back(t);
    z[i] = t.zeta_mhz();
    ++r.evaluations;
  }
  int best = 0;
  for (int i = 1; i < n; ++i)
    if (std::abs(z[i]) < std::abs(z[best])) best = i;
  if (best == 0 || best == n - 1)
    throw NumericalError("no minimum of |zeta| inside [" + std::to_string(lo) + ", " + std::to_string(hi) +
                         "]; closest edge value " + std::to_string(z[best]) + " MHz");
  auto f = [&](double x) {
    ++r.evaluations;
    const auto& ref = states[std::abs(x - grid[best - 1]) < std::abs(x - grid[best + 1]) ? best - 1 : best + 1];
    const auto& nearest = std::abs(x - grid[best]) < std::abs(x - ref.flux()) ? states[best] : ref;
    auto e = nearest.probe(x);
    return std::abs(zeta_from_energies(e[0], e[1], e[2], e[3]));
  };
  r.flux = detail::golden_min(f, grid[best - 1], grid[best + 1], tol);
  auto e = states[best].probe(r.flux);
  r.zeta_mhz = zeta_from_energies(e[0], e[1], e[2], e[3]);
  return r;
}

struct Range {
  double lo = 0, hi = 0;
  int n = 1;
  std::vector<double> values() const { return linspace(lo, hi, n); }
};

/// Staged grid search over coupler design parameters.
struct SearchSpec {
  Range cg{5.75, 5.75, 1};      // fF, C13 = C24
  Range cc{98.3, 118.3, 5};     // fF, C33 = C44
  Range ejc{21.69, 25.69, 5};   // GHz, E_J3 = E_J4
  Range alpha{0.166, 0.266, 5};
  double stage1_alpha = 0.216;
  double target_zeta_min_khz = 20;   // max |zeta_min| tolerated
  double target_zeta_max_mhz = 50;   // min |zeta_max| required
  double c12 = 0.04, c14 = 0.17, c23 = 0.26, c34 = 1.73;
  double c11 = 91.86, c22 = 91.79, ic1 = 26.13, ic2 = 31.93;
  double idle_lo = 0.25, idle_hi = 0.40;
  double max_lo = 0.40, max_hi = 0.50;
  double step = 0.002;
  BasisConfig basis = [] {
    BasisConfig b;
    b.charge_cutoff_qubit = 10;
    b.charge_cutoff_coupler = 8;
    b.kept_levels_qubit = 4;
    b.kept_levels_coupler = 16;
    return b;
  }();

  void validate() const {
    for (const Range* r : {&cg, &cc, &ejc, &alpha}) {
      if (r->n < 1 || r->hi < r->lo) throw ConfigError("search ranges must be non-empty");
    }
    if (alpha.lo <= 0 || alpha.hi >= 1) throw ConfigError("alpha range must lie in (0, 1)");
    if (!(target_zeta_max_mhz > 0)) throw ConfigError("zeta_max target must be positive");
    if (!(step > 0)) throw ConfigError("search flux step must be > 0");
  }
};

struct SearchCandidate {
  int stage = 1;
  double cg = 0, cc = 0, ejc = 0, alpha = 0;
  double zeta_min_khz = 0, zeta_max_mhz = 0;
  double idle_flux = 0, max_flux = 0;
  bool feasible = false;
  bool failed = false;
  std::string note;
  double score = 0;
};

struct SearchResult {
  std::vector<SearchCandidate> ranked;  // feasible first, then by score
  std::vector<SearchCandidate> map_stage1, map_stage2;
  int feasible_count = 0;
  std::string diagnostics;
};

inline CircuitParams search_params(const SearchSpec& s, double cg, double cc, double ejc, double alpha) {
  CircuitParams p;
  p.cap << s.c11, s.c12, cg, s.c14,  //
      s.c12, s.c22, s.c23, cg,       //
      cg, s.c23, cc, s.c34,          //
      s.c14, cg, s.c34, cc;
  const double ic = ejc / kJosephsonGHzPerNa;
  p.ic << s.ic1, s.ic2, ic, ic, alpha * ic;
  return p;
}

inline SearchCandidate evaluate_candidate(const SearchSpec& s, int stage, double cg, double cc, double ejc,
                                          double alpha) {
  SearchCandidate c;
  c.stage = stage;
  c.cg = cg;
  c.cc = cc;
  c.ejc = ejc;
  c.alpha = alpha;
  try {
    auto h = build_hamiltonian(search_params(s, cg, cc, ejc, alpha), s.basis);
    TrackingOptions opt;
    opt.max_step = s.step;
    opt.states = 12;
    opt.anchor = std::clamp(idle_point_estimate(alpha) - 0.01, s.idle_lo, s.idle_hi);
    auto idle = find_idle_point(h, s.idle_lo, s.idle_hi, opt, 1e-5);
    c.idle_flux = idle.flux;
    c.zeta_min_khz = 1e3 * idle.zeta_mhz;
    ComputationalTracker t(h, opt);
    t.advance_to(s.max_lo);
    double best = t.zeta_mhz();
    c.max_flux = s.max_lo;
    while (t.flux() < s.max_hi - 1e-12) {
      t.advance_to(std::min(s.max_hi, t.flux() + s.step));
      if (std::abs(t.zeta_mhz()) > std::abs(best)) {
        best = t.zeta_mhz();
        c.max_flux = t.flux();
      }
    }
    c.zeta_max_mhz = best;
  } catch (const Error& e) {
    c.failed = true;
    c.note = e.what();
  }
  if (!c.failed) {
    c.feasible = std::abs(c.zeta_min_khz) <= s.target_zeta_min_khz && std::abs(c.zeta_max_mhz) >= s.target_zeta_max_mhz;
    c.score = std::abs(c.zeta_max_mhz) / s.target_zeta_max_mhz -
              (s.target_zeta_min_khz > 0 ? std::abs(c.zeta_min_khz) / s.target_zeta_min_khz : std::abs(c.zeta_min_khz));
  } else {
    c.score = -std::numeric_limits<double>::infinity();
  }
  return c;
}

/// Stage 1: (C_c, E_Jc) at fixed alpha. Stage 2: (E_Jc, alpha) at the best stage-1 C_c. Repeated per C_g.
inline SearchResult parameter_search(const SearchSpec& s) {
  s.validate();
  SearchResult r;
  auto better = [](const SearchCandidate& a, const SearchCandidate& b) {
    if (a.feasible != b.feasible) return a.feasible;
    return a.score > b.score;
  };
  for (double cg : s.cg.values()) {
    std::vector<SearchCandidate> st1;
    for (double cc : s.cc.values())
      for (double ej : s.ejc.values()) st1.push_back(evaluate_candidate(s, 1, cg, cc, ej, s.stage1_alpha));
    auto top = *std::min_element(st1.begin(), st1.end(), better);
    for (double ej : s.ejc.values())
      for (double a : s.alpha.values()) r.map_stage2.push_back(evaluate_candidate(s, 2, cg, top.cc, ej, a));
    r.map_stage1.insert(r.map_stage1.end(), st1.begin(), st1.end());
  }
  r.ranked = r.map_stage1;
  r.ranked.insert(r.ranked.end(), r.map_stage2.begin(), r.map_stage2.end());
  std::stable_sort(r.ranked.begin(), r.ranked.end(), better);
  r.feasible_count = static_cast<int>(std::count_if(r.ranked.begin(), r.ranked.end(), [](auto& c) { return c.feasible; }));
  if (r.feasible_count == 0) {
    const SearchCandidate* near = nullptr;
    for (auto& c : r.ranked)
      if (!c.failed && (!near || c.score > near->score)) near = &c;
    r.diagnostics = "no feasible candidate";
    if (near)
      r.diagnostics += "; nearest miss C_c=" + std::to_string(near->cc) + " E_Jc=" + std::to_string(near->ejc) +
                       " alpha=" + std::to_string(near->alpha) + " zeta_min=" + std::to_string(near->zeta_min_khz) +
                       " kHz zeta_max=" + std::to_string(near->zeta_max_mhz) + " MHz";
  }
  return r;
}

}  // namespace dtc
