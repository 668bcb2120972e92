#pragma once

#include "dtc/noise_channels.hpp"

#include <unsupported/Eigen/NonLinearOptimization>

#include <cstdint>
#include <cstring>
#include <deque>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

namespace dtc {

inline constexpr int kCompDim = 4;

/// Clifford group on one or two qubits, stored as unitaries with a phase-insensitive lookup.
class CliffordGroup {
 public:
  int n_qubits = 0;
  std::vector<MatC> elements;
  std::vector<int> inverse;
  std::vector<int> gate_count;  // 1 qubit: physical X/Y pulses (identity is one idle slot); 2 qubits: minimal CZ count
  std::vector<std::vector<int>> table;  // 1 qubit only: table[i][j] = index of U_i U_j

  int size() const { return static_cast<int>(elements.size()); }
  int dim() const { return 1 << n_qubits; }

  /// Index of u up to global phase, or -1.
  int find(const MatC& u) const {
    auto it = lookup_.find(key(u));
    return it == lookup_.end() ? -1 : it->second;
  }
  /// Index of U_i U_j.
  int product(int i, int j) const {
    if (!table.empty()) return table[i][j];
    const int k = find(elements[i] * elements[j]);
    if (k < 0) throw NumericalError("Clifford product left the group");
    return k;
  }
  double average_gate_count() const {
    double s = 0;
    for (int g : gate_count) s += g;
    return s / size();
  }

  static std::string key(const MatC& u) {
    cplx ph = 1;
    for (Eigen::Index i = 0; i < u.size(); ++i)
      if (std::abs(u.data()[i]) > 1e-6) {
        ph = std::conj(u.data()[i]) / std::abs(u.data()[i]);
        break;
      }
    std::string k(u.size() * 2 * sizeof(std::int64_t), '\0');
    for (Eigen::Index i = 0; i < u.size(); ++i) {
      const cplx z = u.data()[i] * ph;
      const std::int64_t v[2] = {std::llround(z.real() * 1e6), std::llround(z.imag() * 1e6)};
      std::memcpy(&k[i * sizeof(v)], v, sizeof(v));
    }
    return k;
  }

  int insert(const MatC& u, int count) {
    const auto k = key(u);
    auto it = lookup_.find(k);
    if (it != lookup_.end()) return -1;
    lookup_.emplace(k, size());
    elements.push_back(u);
    gate_count.push_back(count);
    return size() - 1;
  }
  void finish() {
    inverse.resize(size());
    for (int i = 0; i < size(); ++i) {
      inverse[i] = find(elements[i].adjoint());
      if (inverse[i] < 0) throw NumericalError("Clifford group not closed under inversion");
    }
  }

 private:
  std::unordered_map<std::string, int> lookup_;
};

namespace detail {
/// Gate token such as "X", "-Y/2"; tokens apply left to right.
inline Eigen::Matrix2cd gate_sequence(const std::vector<std::string>& seq) {
  Eigen::Matrix2cd u = Eigen::Matrix2cd::Identity();
  for (const auto& g : seq) {
    const bool neg = g[0] == '-';
    const char axis = g[neg ? 1 : 0];
    double th = g.find("/2") != std::string::npos ? kPi / 2 : kPi;
    if (neg) th = -th;
    u = rotation(axis, th) * u;
  }
  return u;
}
}  // namespace detail

/// The 24 single-qubit Cliffords in the standard X/Y decomposition, or the 11520 two-qubit Cliffords generated
/// from single-qubit Cliffords and CZ.
inline CliffordGroup build_clifford_group(int n_qubits) {
  CliffordGroup g;
  g.n_qubits = n_qubits;
  if (n_qubits == 1) {
    const std::vector<std::vector<std::string>> dec = {
        {"I"}, {"X"}, {"Y"}, {"Y", "X"},
        {"X/2", "Y/2"}, {"X/2", "-Y/2"}, {"-X/2", "Y/2"}, {"-X/2", "-Y/2"},
        {"Y/2", "X/2"}, {"Y/2", "-X/2"}, {"-Y/2", "X/2"}, {"-Y/2", "-X/2"},
        {"X/2"}, {"-X/2"}, {"Y/2"}, {"-Y/2"}, {"-X/2", "Y/2", "X/2"}, {"-X/2", "-Y/2", "X/2"},
        {"X", "Y/2"}, {"X", "-Y/2"}, {"Y", "X/2"}, {"Y", "-X/2"}, {"X/2", "Y/2", "X/2"}, {"-X/2", "Y/2", "-X/2"}};
    for (const auto& d : dec) {
      MatC u = d[0] == "I" ? MatC(Eigen::Matrix2cd::Identity()) : MatC(detail::gate_sequence(d));
      if (g.insert(u, static_cast<int>(d.size())) < 0) throw NumericalError("duplicate single-qubit Clifford");
    }
    g.finish();
    g.table.assign(24, std::vector<int>(24));
    for (int i = 0; i < 24; ++i)
      for (int j = 0; j < 24; ++j) g.table[i][j] = g.find(g.elements[i] * g.elements[j]);
    return g;
  }
  if (n_qubits != 2) throw ConfigError("Clifford groups are provided for 1 or 2 qubits");
  Eigen::Matrix2cd h, s, id = Eigen::Matrix2cd::Identity();
  h << 1, 1, 1, -1;
  h /= std::sqrt(2.0);
  s << 1, 0, 0, cplx(0, 1);
  const std::vector<MatC> local = {detail::kron(h, id), detail::kron(s, id), detail::kron(id, h), detail::kron(id, s)};
  MatC cz = MatC::Identity(4, 4);
  cz(3, 3) = -1;
  // 0-1 breadth-first search: local generators are free, CZ costs one
  std::deque<int> queue;
  queue.push_back(g.insert(MatC::Identity(4, 4), 0));
  std::vector<char> done;
  while (!queue.empty()) {
    const int i = queue.front();
    queue.pop_front();
    if (static_cast<int>(done.size()) <= i) done.resize(i + 1, 0);
    if (done[i]) continue;
    done[i] = 1;
    const MatC u = g.elements[i];
    const int c = g.gate_count[i];
    for (const auto& l : local) {
      const MatC v = l * u;
      const int j = g.find(v);
      if (j < 0) {
        queue.push_front(g.insert(v, c));
      } else if (g.gate_count[j] > c) {
        g.gate_count[j] = c;
        queue.push_front(j);
        if (j < static_cast<int>(done.size())) done[j] = 0;
      }
    }
    const MatC v = cz * u;
    const int j = g.find(v);
    if (j < 0) {
      queue.push_back(g.insert(v, c + 1));
    } else if (g.gate_count[j] > c + 1) {
      g.gate_count[j] = c + 1;
      queue.push_back(j);
      if (j < static_cast<int>(done.size())) done[j] = 0;
    }
  }
  g.finish();
  return g;
}

/// Isotropic leakage/depolarizing error per gate plus the biased SPAM model of the measured probabilities.
struct LeakageErrorModel {
  double p_d = 0, l1 = 0, l2 = 0;
  double gamma = 0, l20 = 0;
  double p_id0 = 1, p_x1_0 = 1;

  void validate() const {
    for (double v : {p_d, l1, l2, gamma, l20, p_id0, p_x1_0})
      if (!(v >= 0 && v <= 1)) throw ConfigError("leakage model rates and probabilities must lie in [0, 1]");
    if (l1 + l2 > 1) throw ConfigError("L1 + L2 must be <= 1");
    if (p_id0 > p_x1_0) throw ConfigError("P_id(0) cannot exceed P_X1(0)");
  }
  double lambda_l() const { return 1 - l1 - l2; }
  double lambda_r() const { return (1 - l1) * (1 - p_d); }
};

/// Per-gate map written as rho1 -> a rho1 + (b Tr rho1 + c (1 - Tr rho1)) I/d.
struct IsotropicMap {
  double a = 1, b = 0, c = 0;
  static IsotropicMap of(const LeakageErrorModel& m) { return {(1 - m.l1) * (1 - m.p_d), (1 - m.l1) * m.p_d, m.l2}; }
  /// this, then `next`
  IsotropicMap then(const IsotropicMap& n) const {
    IsotropicMap r;
    r.a = a * n.a;
    const double keep = a + b - c;  // d Tr / d Tr of this map
    r.c = c * (n.a + n.b - n.c) + n.c;
    const double coef = n.a * (b - c) + (n.b - n.c) * keep;
    r.b = coef + r.c;
    return r;
  }
};

/// Error rates of gate `first` followed by gate `second`; SPAM fields are taken from `first`.
inline LeakageErrorModel compose_rates(const LeakageErrorModel& first, const LeakageErrorModel& second) {
  const auto m = IsotropicMap::of(first).then(IsotropicMap::of(second));
  LeakageErrorModel r = first;
  r.l1 = 1 - (m.a + m.b);
  r.p_d = (m.a + m.b) > 0 ? m.b / (m.a + m.b) : 0;
  r.l2 = m.c;
  return r;
}

struct SurvivalCurve {
  std::vector<int> m;
  std::vector<double> p_x1, p_id;  // measured (SPAM-biased) probabilities
};

namespace detail {
inline void apply_spam(const LeakageErrorModel& e, double px, double pid, double& mx, double& mid) {
  mx = px + e.l20 * (1 - px);
  mid = pid + e.l20 * (1 - px) + e.gamma * (px - pid);
}
}  // namespace detail

/// Closed-form measured survival probabilities after m gates of the model.
inline SurvivalCurve recursion_survival(const LeakageErrorModel& e, const std::vector<int>& m_values) {
  e.validate();
  const double d = kCompDim;
  const double ll = e.lambda_l(), lr = e.lambda_r();
  const double a = (e.l1 + e.l2) > 0 ? e.l2 / (e.l1 + e.l2) : 0;
  SurvivalCurve s;
  for (int m : m_values) {
    if (m < 0) throw ConfigError("sequence lengths must be >= 0");
    const double px = (e.l1 + e.l2) > 0 ? a + (e.p_x1_0 - a) * std::pow(ll, m) : e.p_x1_0;
    const double pid = px / d + (e.p_id0 - e.p_x1_0 / d) * std::pow(lr, m);
    double mx, mid;
    detail::apply_spam(e, px, pid, mx, mid);
    s.m.push_back(m);
    s.p_x1.push_back(mx);
    s.p_id.push_back(mid);
  }
  return s;
}

/// Step-by-step iteration of the per-gate population updates (oracle for the closed form).
inline SurvivalCurve iterate_survival(const LeakageErrorModel& e, const std::vector<int>& m_values) {
  e.validate();
  const double d = kCompDim;
  SurvivalCurve s;
  for (int m : m_values) {
    double px = e.p_x1_0, pid = e.p_id0;
    for (int k = 0; k < m; ++k) {
      const double pid_next = (1 - e.l1) * (1 - e.p_d) * pid + (((1 - e.l1) * e.p_d - e.l2) * px + e.l2) / d;
      px = (1 - e.l1 - e.l2) * px + e.l2;
      pid = pid_next;
    }
    double mx, mid;
    detail::apply_spam(e, px, pid, mx, mid);
    s.m.push_back(m);
    s.p_x1.push_back(mx);
    s.p_id.push_back(mid);
  }
  return s;
}

/// Computational block plus one lumped leakage level (index 4) from a 4x4 block of a propagator, CZ included.
/// Population lost from the block is sent to the leakage level; nothing returns.
inline KrausSet leaky_gate_channel(const Eigen::Matrix4cd& block) {
  MatC k0 = MatC::Zero(5, 5);
  k0.topLeftCorner(4, 4) = block;
  k0(4, 4) = 1;
  Eigen::Matrix4cd rest = Eigen::Matrix4cd::Identity() - block.adjoint() * block;
  rest = (rest + rest.adjoint()).eval() / 2.0;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4cd> es(rest);
  KrausSet k{{k0}, "leaky gate"};
  for (int j = 0; j < 4; ++j) {
    const double mu = es.eigenvalues()(j);
    if (mu < -1e-10) throw DomainError("gate block is not a contraction");
    if (mu <= 1e-15) continue;
    MatC kj = MatC::Zero(5, 5);
    kj.row(4).head(4) = std::sqrt(mu) * es.eigenvectors().col(j).adjoint();
    k.ops.push_back(kj);
  }
  return k;
}

struct RBRecord {
  int m = 0, seq = 0;
  double p_id = 0, p_x1 = 0;
};

struct RBDataset {
  std::string variant = "SRB";
  std::vector<int> m;
  std::vector<double> mean_id, sd_id, mean_x1, sd_x1;
  std::vector<RBRecord> records;
  int sequences = 0, shots = 0;

  void validate() const {
    if (m.size() != mean_id.size() || m.size() != mean_x1.size()) throw ConfigError("RB dataset columns differ in length");
    for (std::size_t i = 1; i < m.size(); ++i)
      if (m[i] <= m[i - 1]) throw ConfigError("RB sequence lengths must be strictly increasing");
    for (std::size_t i = 0; i < m.size(); ++i)
      if (mean_id[i] < 0 || mean_id[i] > 1 || mean_x1[i] < 0 || mean_x1[i] > 1) throw ConfigError("RB probabilities outside [0, 1]");
  }
};

struct RBOptions {
  std::vector<int> m_values;
  int sequences = 10;
  int shots = 0;  // 0: exact probabilities (density-matrix mode)
  std::uint64_t seed = 1;
  int threads = 1;
  std::optional<LeakageErrorModel> cz_rates;  // interleaved ideal CZ followed by this isotropic error
  std::optional<KrausSet> cz_channel;         // interleaved 5-level channel (gate included)
};

namespace detail {
inline void apply_unitary5(MatC& rho, const MatC& u4) {
  MatC u = MatC::Identity(5, 5);
  u.topLeftCorner(4, 4) = u4;
  rho = u * rho * u.adjoint();
}
inline void apply_isotropic5(MatC& rho, const IsotropicMap& e) {
  const double t = rho.topLeftCorner(4, 4).trace().real();
  MatC out = MatC::Zero(5, 5);
  out.topLeftCorner(4, 4) = e.a * rho.topLeftCorner(4, 4);
  out.topLeftCorner(4, 4).diagonal().array() += (e.b * t + e.c * (1 - t)) / kCompDim;
  out(4, 4) = 1 - out.topLeftCorner(4, 4).trace().real();
  rho = out;
}
}  // namespace detail

/// Randomized benchmarking of two-qubit Cliffords with the isotropic per-Clifford error model. SRB when no
/// interleaved gate is given, IRB otherwise. Each (m, sequence) pair draws its own seeded random sequence.
inline RBDataset simulate_rb(const LeakageErrorModel& clifford_error, const CliffordGroup& group, const RBOptions& o) {
  clifford_error.validate();
  if (group.n_qubits != 2) throw ConfigError("simulate_rb needs the two-qubit Clifford group");
  if (o.sequences < 1 || o.shots < 0 || o.m_values.empty()) throw ConfigError("RB budget must be positive");
  if (o.cz_rates && o.cz_channel) throw ConfigError("give either cz_rates or cz_channel, not both");
  if (o.cz_rates) o.cz_rates->validate();
  if (o.cz_channel) {
    if (o.cz_channel->dim() != 5) throw ConfigError("interleaved channel must act on 4 computational + 1 leakage level");
    o.cz_channel->validate();
  }
  const bool interleaved = o.cz_rates || o.cz_channel;
  MatC cz = MatC::Identity(4, 4);
  cz(3, 3) = -1;
  const int cz_idx = group.find(cz);
  const auto emap = IsotropicMap::of(clifford_error);
  RBDataset ds;
  ds.variant = interleaved ? "IRB" : "SRB";
  ds.sequences = o.sequences;
  ds.shots = o.shots;
  ds.m = o.m_values;
  const int nm = static_cast<int>(o.m_values.size());
  ds.records.resize(static_cast<std::size_t>(nm) * o.sequences);
  parallel_for(nm * o.sequences, o.threads, [&](int job) {
    const int im = job / o.sequences, s = job % o.sequences;
    const int m = o.m_values[im];
    std::mt19937_64 rng(o.seed * 0x9E3779B97F4A7C15ULL + (interleaved ? 0x5bd1e995ULL : 0) +
                        static_cast<std::uint64_t>(m) * 1000003ULL + static_cast<std::uint64_t>(s));
    std::uniform_int_distribution<int> pick(0, group.size() - 1);
    MatC rho = MatC::Zero(5, 5);
    const double q = (clifford_error.p_x1_0 - clifford_error.p_id0) / 3.0;
    rho(0, 0) = clifford_error.p_id0;
    rho(1, 1) = rho(2, 2) = rho(3, 3) = q;
    rho(4, 4) = 1 - clifford_error.p_x1_0;
    int cur = 0;
    for (int k = 0; k < m; ++k) {
      const int c = pick(rng);
      detail::apply_unitary5(rho, group.elements[c]);
      detail::apply_isotropic5(rho, emap);
      cur = group.product(c, cur);
      if (o.cz_rates) {
        detail::apply_unitary5(rho, cz);
        detail::apply_isotropic5(rho, IsotropicMap::of(*o.cz_rates));
      } else if (o.cz_channel) {
        rho = o.cz_channel->apply(rho);
      }
      if (interleaved) cur = group.product(cz_idx, cur);
    }
    detail::apply_unitary5(rho, group.elements[group.inverse[cur]]);
    const double px = std::clamp(rho.topLeftCorner(4, 4).trace().real(), 0.0, 1.0);
    const double pid = std::clamp(rho(0, 0).real(), 0.0, 1.0);
    double mx, mid;
    detail::apply_spam(clifford_error, px, pid, mx, mid);
    if (o.shots > 0) {
      std::binomial_distribution<int> b0(o.shots, std::clamp(mid, 0.0, 1.0));
      const int n0 = b0(rng);
      const double rest = 1 - mid;
      const double pc = rest > 0 ? std::clamp((mx - mid) / rest, 0.0, 1.0) : 0.0;
      std::binomial_distribution<int> b1(o.shots - n0, pc);
      const int n1 = b1(rng);
      mid = static_cast<double>(n0) / o.shots;
      mx = static_cast<double>(n0 + n1) / o.shots;
    }
    ds.records[job] = {m, s, mid, mx};
  });
  for (int im = 0; im < nm; ++im) {
    std::vector<double> a, b;
    for (int s = 0; s < o.sequences; ++s) {
      a.push_back(ds.records[im * o.sequences + s].p_id);
      b.push_back(ds.records[im * o.sequences + s].p_x1);
    }
    double ma, sa, mb, sb;
    detail::mean_std(a, ma, sa);
    detail::mean_std(b, mb, sb);
    if (o.sequences == 1) sa = sb = 0;
    ds.mean_id.push_back(ma);
    ds.sd_id.push_back(sa);
    ds.mean_x1.push_back(mb);
    ds.sd_x1.push_back(sb);
  }
  ds.validate();
  return ds;
}

struct ExpFit {
  double a = 0, b = 0, lambda = 1;  // y = a + b lambda^m
  double se_a = 0, se_b = 0, se_lambda = 0;
  double rms = 0;
  bool identifiable = true;
};

/// Weighted least squares of y = a + b lambda^m. Start from a grid over lambda with (a, b) solved linearly,
/// then Levenberg-Marquardt on all three.
inline ExpFit fit_exponential(const std::vector<int>& m, const std::vector<double>& y, const std::vector<double>& sigma) {
  const int n = static_cast<int>(m.size());
  if (n < 4 || y.size() != m.size() || sigma.size() != m.size()) throw ConfigError("exponential fit needs >= 4 points");
  {
    std::vector<int> sm = m;
    std::sort(sm.begin(), sm.end());
    if (std::unique(sm.begin(), sm.end()) - sm.begin() < 4) throw ConfigError("exponential fit needs >= 4 distinct m values");
  }
  VecR w(n);
  for (int i = 0; i < n; ++i) w(i) = sigma[i] > 0 ? 1.0 / sigma[i] : 1.0;
  bool uniform = true;
  for (double s : sigma) uniform = uniform && s <= 0;
  if (!uniform)
    for (int i = 0; i < n; ++i)
      if (sigma[i] <= 0) w(i) = 1.0 / *std::min_element(sigma.begin(), sigma.end(), [](double p, double q) {
        return (p > 0 ? p : 1e300) < (q > 0 ? q : 1e300);
      });
  ExpFit f;
  const double ymean = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double spread = 0;
  for (double v : y) spread = std::max(spread, std::abs(v - ymean));
  if (spread < 1e-9) {
    f.a = ymean;
    f.identifiable = false;
    return f;
  }
  auto linear = [&](double lam, double& a, double& b) {
    MatR x(n, 2);
    VecR yy(n);
    for (int i = 0; i < n; ++i) {
      x(i, 0) = w(i);
      x(i, 1) = w(i) * std::pow(lam, m[i]);
      yy(i) = w(i) * y[i];
    }
    VecR p = x.colPivHouseholderQr().solve(yy);
    a = p(0);
    b = p(1);
    return (x * p - yy).squaredNorm();
  };
  double best = 1e300, lam0 = 0.5, a0 = 0, b0 = 0;
  for (int k = 0; k <= 400; ++k) {
    const double lam = 1 - std::pow(10.0, -7.0 + 6.7 * k / 400.0);
    double a, b;
    const double c = linear(lam, a, b);
    if (c < best) {
      best = c;
      lam0 = lam;
      a0 = a;
      b0 = b;
    }
  }
  struct Functor {
    const std::vector<int>* m;
    const std::vector<double>* y;
    const VecR* w;
    int inputs() const { return 3; }
    int values() const { return static_cast<int>(m->size()); }
    int operator()(const VecR& p, VecR& r) const {
      for (int i = 0; i < values(); ++i) r(i) = (*w)(i) * (p(0) + p(1) * std::pow(p(2), (*m)[i]) - (*y)[i]);
      return 0;
    }
    int df(const VecR& p, MatR& j) const {
      for (int i = 0; i < values(); ++i) {
        const int mi = (*m)[i];
        j(i, 0) = (*w)(i);
        j(i, 1) = (*w)(i) * std::pow(p(2), mi);
        j(i, 2) = mi == 0 ? 0.0 : (*w)(i) * p(1) * mi * std::pow(p(2), mi - 1);
      }
      return 0;
    }
  };
  Functor fn{&m, &y, &w};
  Eigen::LevenbergMarquardt<Functor> lm(fn);
  lm.parameters.xtol = 1e-15;
  lm.parameters.ftol = 1e-15;
  lm.parameters.maxfev = 2000;
  VecR p(3);
  p << a0, b0, lam0;
  const auto info = lm.minimize(p);
  VecR r(n);
  fn(p, r);
  if (!p.allFinite() || info == Eigen::LevenbergMarquardtSpace::ImproperInputParameters)
    throw NumericalError("exponential fit did not converge, residual rms " + std::to_string(std::sqrt(r.squaredNorm() / n)));
  if (r.squaredNorm() > best * (1 + 1e-9) + 1e-30) {
    p << a0, b0, lam0;
    fn(p, r);
  }
  f.a = p(0);
  f.b = p(1);
  f.lambda = p(2);
  f.rms = std::sqrt(r.squaredNorm() / n);
  MatR j(n, 3);
  fn.df(p, j);
  const double chi2 = r.squaredNorm() / std::max(1, n - 3);
  MatR cov = (j.transpose() * j).completeOrthogonalDecomposition().pseudoInverse() * chi2;
  f.se_a = std::sqrt(std::max(0.0, cov(0, 0)));
  f.se_b = std::sqrt(std::max(0.0, cov(1, 1)));
  f.se_lambda = std::sqrt(std::max(0.0, cov(2, 2)));
  if (std::abs(f.b) < 1e-9) f.identifiable = false;
  return f;
}

struct FitResult {
  double lambda_l = 1, a_m = 1, b_m = 0;
  double lambda_r = 1, c_m = 0, d_m = 0;
  double se_lambda_l = 0, se_a_m = 0, se_b_m = 0, se_lambda_r = 0, se_c_m = 0, se_d_m = 0;
  bool leakage_identifiable = true;

  double l1() const { return (1 - a_m) * (1 - lambda_l); }
  double l2() const { return a_m * (1 - lambda_l); }
  double r() const { return (1 - lambda_r) * (1 - 1.0 / kCompDim); }
  double p_d() const { return 1 - lambda_r / (1 - l1()); }
};

/// Fits P_X1 = A_M + B_M lambda_L^m, then P_id - P_X1/d = C_M lambda_r^m + D_M. Points are weighted by the
/// standard error of the per-m mean when the dataset has sequence spread.
inline FitResult fit_lrb(const RBDataset& ds) {
  ds.validate();
  const int n = static_cast<int>(ds.m.size());
  const double rt = std::sqrt(static_cast<double>(std::max(1, ds.sequences)));
  std::vector<double> sx(n), y2(n), s2(n);
  for (int i = 0; i < n; ++i) {
    sx[i] = ds.sd_x1[i] / rt;
    y2[i] = ds.mean_id[i] - ds.mean_x1[i] / kCompDim;
    std::vector<double> diff;
    for (const auto& rec : ds.records)
      if (rec.m == ds.m[i]) diff.push_back(rec.p_id - rec.p_x1 / kCompDim);
    double mu = 0, sd = 0;
    if (diff.size() > 1) detail::mean_std(diff, mu, sd);
    s2[i] = sd / rt;
  }
  FitResult r;
  auto fl = fit_exponential(ds.m, ds.mean_x1, sx);
  r.leakage_identifiable = fl.identifiable;
  if (fl.identifiable) {
    r.a_m = fl.a;
    r.b_m = fl.b;
    r.lambda_l = fl.lambda;
    r.se_a_m = fl.se_a;
    r.se_b_m = fl.se_b;
    r.se_lambda_l = fl.se_lambda;
  } else {
    r.a_m = fl.a;
    r.b_m = 0;
    r.lambda_l = 1;
  }
  auto fr = fit_exponential(ds.m, y2, s2);
  if (!fr.identifiable) throw NumericalError("P_id - P_X1/d shows no decay; lambda_r is not identifiable");
  r.d_m = fr.a;
  r.c_m = fr.b;
  r.lambda_r = fr.lambda;
  r.se_d_m = fr.se_a;
  r.se_c_m = fr.se_b;
  r.se_lambda_r = fr.se_lambda;
  return r;
}

struct CZMetrics {
  double l1_cz = 0;
  double lambda_r_cz = 1;  // 1 - d/(d-1) r_CZ, consistent with the fidelity identity
  double lambda_ratio = 1;  // lambda_r(IRB) / lambda_r(SRB)
  double r_cz = 0;
  double p_d_cz = 0;
  double r_d_cz = 0;
  double f_bar = 1;
  double se_r_cz = 0, se_l1_cz = 0, se_r_d_cz = 0;
};

/// CZ metrics from the leakage error and the CZ error rate.
inline CZMetrics cz_metrics_from_errors(double l1_cz, double r_cz) {
  const double d = kCompDim;
  CZMetrics c;
  c.l1_cz = l1_cz;
  c.r_cz = r_cz;
  c.lambda_r_cz = 1 - d / (d - 1) * r_cz;
  c.lambda_ratio = c.lambda_r_cz;
  c.f_bar = 1 - l1_cz / d - r_cz;
  c.p_d_cz = 1 - c.lambda_r_cz / (1 - l1_cz);
  c.r_d_cz = r_cz - (d - 1) / d * l1_cz;
  return c;
}

/// CZ metrics from the reference (SRB) and interleaved (IRB) fits.
inline CZMetrics cz_metrics(const FitResult& srb, const FitResult& irb) {
  const double d = kCompDim;
  const double l1s = srb.l1(), l1i = irb.l1();
  const double rs = srb.r(), ri = irb.r();
  CZMetrics c = cz_metrics_from_errors(1 - (1 - l1i) / (1 - l1s), 1 - (1 - ri) / (1 - rs));
  c.lambda_ratio = irb.lambda_r / srb.lambda_r;
  // first-order error propagation, fits treated as independent
  const double f = (d - 1) / d;
  c.se_r_cz = f * std::hypot(irb.se_lambda_r / (1 - rs), (1 - ri) / sqr(1 - rs) * srb.se_lambda_r);
  auto se_l1 = [](const FitResult& x) { return std::hypot((1 - x.lambda_l) * x.se_a_m, (1 - x.a_m) * x.se_lambda_l); };
  c.se_l1_cz = std::hypot(se_l1(irb) / (1 - l1s), (1 - l1i) / sqr(1 - l1s) * se_l1(srb));
  c.se_r_d_cz = std::hypot(c.se_r_cz, f * c.se_l1_cz);
  return c;
}

struct SingleQubitRB {
  double r = 0, r_sq = 0;
};

/// r = (1 - p)(1 - 1/2); per physical gate r / 1.875.
inline SingleQubitRB single_qubit_rb_error(double p) {
  if (!(p > 0 && p <= 1)) throw DomainError("RB decay parameter must lie in (0, 1]");
  const double per_clifford = build_clifford_group(1).average_gate_count();
  return {(1 - p) * 0.5, (1 - p) * 0.5 / per_clifford};
}

struct LinearFit {
  double slope = 0, intercept = 0, se_slope = 0, se_intercept = 0;
  double pearson = 0;
};

/// Weighted straight line; unit weights where sigma <= 0.
inline LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y, const std::vector<double>& sigma) {
  const int n = static_cast<int>(x.size());
  if (n < 2 || y.size() != x.size() || sigma.size() != x.size()) throw ConfigError("line fit needs >= 2 points");
  MatR a(n, 2);
  VecR b(n);
  for (int i = 0; i < n; ++i) {
    const double w = sigma[i] > 0 ? 1.0 / sigma[i] : 1.0;
    a(i, 0) = w * x[i];
    a(i, 1) = w;
    b(i) = w * y[i];
  }
  VecR p = a.colPivHouseholderQr().solve(b);
  LinearFit f;
  f.slope = p(0);
  f.intercept = p(1);
  const double chi2 = n > 2 ? (a * p - b).squaredNorm() / (n - 2) : 0.0;
  MatR cov = (a.transpose() * a).inverse() * chi2;
  f.se_slope = std::sqrt(std::max(0.0, cov(0, 0)));
  f.se_intercept = std::sqrt(std::max(0.0, cov(1, 1)));
  double mx = 0, my = 0;
  for (int i = 0; i < n; ++i) {
    mx += x[i] / n;
    my += y[i] / n;
  }
  double sxy = 0, sxx = 0, syy = 0;
  for (int i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += sqr(x[i] - mx);
    syy += sqr(y[i] - my);
  }
  f.pearson = (sxx > 0 && syy > 0) ? sxy / std::sqrt(sxx * syy) : 0.0;
  return f;
}

struct GateLengthPoint {
  double length_ns = 0;
  double r_cz = 0, l1_cz = 0, r_d = 0, se_r_d = 0;
  bool outlier = false;
};

struct GateLengthStudy {
  std::vector<GateLengthPoint> points;
  LinearFit all;     // every point
  LinearFit inliers; // flagged outliers removed
  double t_eff_us = 0, r0 = 0, se_r0 = 0;  // from the inlier fit
  int outliers = 0;
};

struct OutlierOptions {
  double threshold = 4.0;   // in combined standard deviations
  double min_deviation = 5e-5;
};

/// Linear fit r_D = (2/5) t / T_eff + r0 with leave-one-out outlier flagging.
inline GateLengthStudy fit_gate_length(std::vector<GateLengthPoint> pts, const OutlierOptions& oo = {}) {
  const int n = static_cast<int>(pts.size());
  if (n < 3) throw ConfigError("gate-length study needs >= 3 lengths");
  auto columns = [&](auto keep, std::vector<double>& x, std::vector<double>& y, std::vector<double>& s) {
    x.clear();
    y.clear();
    s.clear();
    for (int i = 0; i < n; ++i)
      if (keep(i)) {
        x.push_back(pts[i].length_ns * 1e-3);
        y.push_back(pts[i].r_d);
        s.push_back(pts[i].se_r_d);
      }
  };
  std::vector<double> x, y, s;
  GateLengthStudy g;
  columns([](int) { return true; }, x, y, s);
  g.all = fit_line(x, y, s);
  if (n >= 4) {
    for (int i = 0; i < n; ++i) {
      columns([&](int k) { return k != i; }, x, y, s);
      const auto f = fit_line(x, y, s);
      double rss = 0;
      for (std::size_t k = 0; k < x.size(); ++k) rss += sqr(y[k] - f.slope * x[k] - f.intercept);
      const double res_sd = x.size() > 2 ? std::sqrt(rss / (x.size() - 2)) : 0.0;
      const double t = pts[i].length_ns * 1e-3;
      const double dev = std::abs(pts[i].r_d - f.slope * t - f.intercept);
      const double sd = std::sqrt(sqr(pts[i].se_r_d) + sqr(res_sd) + sqr(f.se_slope * t) + sqr(f.se_intercept));
      pts[i].outlier = dev > oo.min_deviation && dev > oo.threshold * sd;
    }
  }
  for (const auto& p : pts) g.outliers += p.outlier;
  if (n - g.outliers < 2) throw NumericalError("too many gate lengths flagged as outliers");
  columns([&](int k) { return !pts[k].outlier; }, x, y, s);
  g.inliers = fit_line(x, y, s);
  g.t_eff_us = g.inliers.slope > 0 ? 0.4 / g.inliers.slope : std::numeric_limits<double>::infinity();
  g.r0 = g.inliers.intercept;
  g.se_r0 = g.inliers.se_intercept;
  g.points = std::move(pts);
  return g;
}

/// SRB once, IRB per gate length with that length's CZ error model, then the linear fit.
inline GateLengthStudy gate_length_study(const std::vector<double>& lengths_ns, const std::vector<LeakageErrorModel>& cz,
                                         const LeakageErrorModel& clifford_error, const CliffordGroup& group,
                                         RBOptions o, const OutlierOptions& oo = {}) {
  if (lengths_ns.size() != cz.size()) throw ConfigError("one CZ model per gate length");
  if (lengths_ns.size() < 3) throw ConfigError("gate-length study needs >= 3 lengths");
  o.cz_rates.reset();
  o.cz_channel.reset();
  const auto srb = fit_lrb(simulate_rb(clifford_error, group, o));
  std::vector<GateLengthPoint> pts;
  for (std::size_t i = 0; i < cz.size(); ++i) {
    RBOptions oi = o;
    oi.cz_rates = cz[i];
    oi.seed = o.seed + 7919 * (i + 1);
    const auto met = cz_metrics(srb, fit_lrb(simulate_rb(clifford_error, group, oi)));
    pts.push_back({lengths_ns[i], met.r_cz, met.l1_cz, met.r_d_cz, met.se_r_d_cz, false});
  }
  return fit_gate_length(std::move(pts), oo);
}

/// CZ error model for a gate of the given length whose depolarizing part is the incoherent estimate
/// (2/5) t / T_eff + r0.
inline LeakageErrorModel cz_model_from_t_eff(double length_ns, double t_eff_us, double l1 = 3e-4, double r0 = 0.0) {
  const double rd = error_from_t_eff(length_ns, t_eff_us) + r0;
  LeakageErrorModel m;
  m.l1 = l1;
  m.p_d = rd * kCompDim / (kCompDim - 1.0);
  m.validate();
  return m;
}

}  // namespace dtc
