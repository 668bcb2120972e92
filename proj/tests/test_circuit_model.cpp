#include "dtc/circuit_model.hpp"
#include "dtc/zz_analysis.hpp"

#include <gtest/gtest.h>

using namespace dtc;

namespace {

const HamiltonianOperator& reference_h() {
  static const HamiltonianOperator h = build_hamiltonian(CircuitParams::reference_device(), BasisConfig{});
  return h;
}

int find_label(const LabelResult& lr, const std::string& s) {
  for (std::size_t i = 0; i < lr.labels.size(); ++i)
    if (lr.labels[i].str() == s) return static_cast<int>(i);
  return -1;
}

// Dense single-node transmon levels, built independently of the library.
std::vector<double> transmon_levels(double ec_coeff, double ej, int n, int keep) {
  const int d = 2 * n + 1;
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(d, d);
  for (int k = 0; k < d; ++k) {
    h(k, k) = ec_coeff * (k - n) * (k - n);
    if (k + 1 < d) h(k, k + 1) = h(k + 1, k) = -0.5 * ej;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
  std::vector<double> v(es.eigenvalues().data(), es.eigenvalues().data() + keep);
  return v;
}

}  // namespace

TEST(CircuitModel, IdleTransitionFrequencies) {
  auto sp = eigensolve(reference_h(), 0.309, 12);
  const double expect[] = {4.314, 4.778, 5.373, 5.495};
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(sp.energies(i + 1), expect[i], 0.01 * expect[i]) << i;
  auto lr = label_states(reference_h(), 0.309, sp.vectors);
  const int q1 = find_label(lr, "|1000>"), q1b = find_label(lr, "|2000>");
  const int q2 = find_label(lr, "|0100>"), q2b = find_label(lr, "|0200>");
  ASSERT_TRUE(q1 >= 0 && q1b >= 0 && q2 >= 0 && q2b >= 0);
  EXPECT_NEAR((sp.energies(q1b) - 2 * sp.energies(q1)) * 1e3, -212.0, 15.0);
  EXPECT_NEAR((sp.energies(q2b) - 2 * sp.energies(q2)) * 1e3, -199.0, 15.0);
}

TEST(CircuitModel, JosephsonEnergyConversion) {
  // E_J / h = I_c * Phi0 / (2 pi h) from CODATA constants
  const double h = 6.62607015e-34, e = 1.602176634e-19;
  const double phi0 = h / (2 * e);
  const double ghz_per_na = 1e-9 * phi0 / (2 * kPi) / h / 1e9;
  EXPECT_NEAR(ghz_per_na, kJosephsonGHzPerNa, 1e-6);
  EXPECT_NEAR(CircuitParams::reference_device().ej_ghz()(0), 12.98, 0.01);
}

TEST(CircuitModel, Hermitian) {
  const auto& h = reference_h();
  for (double f : {0.0, 0.13, 0.309, 0.47, 0.81}) {
    MatC m = h.at(f);
    EXPECT_LT((m - m.adjoint()).cwiseAbs().maxCoeff(), 1e-12 * m.cwiseAbs().maxCoeff()) << f;
  }
}

TEST(CircuitModel, PeriodicAndEven) {
  const auto& h = reference_h();
  for (double f : {0.05, 0.2, 0.309, 0.45}) {
    auto a = eigensolve(h, f, 8), b = eigensolve(h, f + 1.0, 8), c = eigensolve(h, -f, 8);
    EXPECT_LT((a.energies - b.energies).cwiseAbs().maxCoeff(), 1e-9) << f;
    EXPECT_LT((a.energies - c.energies).cwiseAbs().maxCoeff(), 1e-9) << f;
  }
}

TEST(CircuitModel, DecoupledLimitFactorizes) {
  CircuitParams p = CircuitParams::reference_device();
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      if (i != j) p.cap(i, j) = 0;
  BasisConfig b;
  auto h = build_hamiltonian(p, b);
  const double f = b.idle_reference;
  auto sp = eigensolve(h, f, 10);
  auto lr = label_states(h, f, sp.vectors);
  for (double o : lr.overlap) EXPECT_NEAR(o, 1.0, 1e-9);

  // independent levels: two transmons plus the two-node coupler in its full charge basis
  const auto ej = p.ej_ghz();
  auto l1 = transmon_levels(kChargingGHzfF / p.cap(0, 0), ej(0), b.charge_cutoff_qubit, 4);
  auto l2 = transmon_levels(kChargingGHzfF / p.cap(1, 1), ej(1), b.charge_cutoff_qubit, 4);
  const int n = b.charge_cutoff_coupler, d = 2 * n + 1;
  MatC hc = MatC::Zero(d * d, d * d);
  for (int a = 0; a < d; ++a)
    for (int c = 0; c < d; ++c) {
      const int r = a * d + c;
      hc(r, r) = kChargingGHzfF * (sqr(a - n) / p.cap(2, 2) + sqr(c - n) / p.cap(3, 3));
      if (a + 1 < d) hc(r + d, r) = hc(r, r + d) = -0.5 * ej(2);
      if (c + 1 < d) hc(r + 1, r) = hc(r, r + 1) = -0.5 * ej(3);
      if (a >= 1 && c + 1 < d) {
        const cplx v = -0.5 * ej(4) * std::polar(1.0, -kTwoPi * f);
        hc(r - d + 1, r) += v;
        hc(r, r - d + 1) += std::conj(v);
      }
    }
  Eigen::SelfAdjointEigenSolver<MatC> es(hc);
  std::vector<double> sums;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      for (int c = 0; c < 6; ++c) sums.push_back(l1[i] + l2[j] + es.eigenvalues()(c));
  std::sort(sums.begin(), sums.end());
  for (int k = 0; k < 10; ++k) EXPECT_NEAR(sp.energies(k), sums[k] - sums[0], 1e-9) << k;
}

TEST(CircuitModel, CutoffConvergenceBelowOneKilohertz) {
  BasisConfig big;
  big.charge_cutoff_qubit += 2;
  big.charge_cutoff_coupler += 2;
  big.kept_levels_qubit += 2;
  big.kept_levels_coupler += 2;
  auto hb = build_hamiltonian(CircuitParams::reference_device(), big);
  for (double f : {0.309, 0.40, 0.47}) {
    auto a = eigensolve(reference_h(), f, 12), b = eigensolve(hb, f, 12);
    EXPECT_LT((a.energies - b.energies).cwiseAbs().maxCoeff(), 1e-6) << f;
  }
}

TEST(CircuitModel, IdleLabels) {
  auto sp = eigensolve(reference_h(), 0.309, 12);
  auto lr = label_states(reference_h(), 0.309, sp.vectors);
  EXPECT_EQ(lr.labels[0].str(), "|0000>");
  EXPECT_EQ(lr.labels[1].str(), "|1000>");
  EXPECT_EQ(lr.labels[2].str(), "|0100>");
}

TEST(CircuitModel, HybridizedNearMaximumCoupling) {
  auto sp = eigensolve(reference_h(), 0.47, 14);
  auto lr = label_states(reference_h(), 0.47, sp.vectors);
  const int i = find_label(lr, "|1100>");
  ASSERT_GE(i, 0);
  EXPECT_LT(lr.overlap[i], 0.9);
  EXPECT_GT(lr.overlap[i], 0.25);
}

TEST(CircuitModel, SinglePointScanMatchesEigensolve) {
  auto sc = spectrum_scan(reference_h(), {0.309}, 8);
  auto sp = eigensolve(reference_h(), 0.309, 8);
  auto lr = label_states(reference_h(), 0.309, sp.vectors);
  for (int i = 0; i < 8; ++i) {
    EXPECT_NEAR(sc.energies(i, 0), sp.energies(i), 1e-12);
    EXPECT_EQ(sc.labels[0][i], lr.labels[i]);
  }
}

TEST(CircuitModel, AvoidedCrossingInRegionB) {
  // The |1001> and |0002> labels exchange order while the levels themselves never meet.
  double first = 0, last = 0, min_gap = 1e9;
  bool have_first = false;
  for (double f : linspace(0.40, 0.48, 9)) {
    auto sp = eigensolve(reference_h(), f, 14);
    auto lr = label_states(reference_h(), f, sp.vectors);
    const int a = find_label(lr, "|1001>"), b = find_label(lr, "|0002>");
    ASSERT_TRUE(a >= 0 && b >= 0) << f;
    const double diff = sp.energies(a) - sp.energies(b);
    if (!have_first) {
      first = diff;
      have_first = true;
    }
    last = diff;
    min_gap = std::min(min_gap, std::abs(diff));
  }
  EXPECT_LT(first * last, 0.0);
  EXPECT_GT(min_gap, 0.05);
}

TEST(CircuitModel, InvalidParametersRejected) {
  CircuitParams p = CircuitParams::reference_device();
  p.cap(0, 0) = 0;
  EXPECT_THROW(build_hamiltonian(p, BasisConfig{}), ConfigError);
  p = CircuitParams::reference_device();
  p.ic(4) = -1;
  EXPECT_THROW(p.validate(), ConfigError);
  BasisConfig b;
  b.charge_cutoff_qubit = 2;
  EXPECT_THROW(b.validate(), ConfigError);
}
