#include "dtc/tomography.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace dtc;

namespace {

MatC cz() {
  MatC u = MatC::Identity(4, 4);
  u(3, 3) = -1;
  return u;
}

// random CPTP map from a Haar-like isometry into 4 x r Kraus operators
KrausSet random_channel(std::mt19937_64& rng, int rank) {
  std::normal_distribution<double> nd;
  MatC g(4 * rank, 4);
  for (int i = 0; i < g.rows(); ++i)
    for (int j = 0; j < 4; ++j) g(i, j) = cplx(nd(rng), nd(rng));
  Eigen::HouseholderQR<MatC> qr(g);
  MatC v = qr.householderQ() * MatC::Identity(4 * rank, 4);
  KrausSet k;
  k.label = "random";
  for (int r = 0; r < rank; ++r) k.ops.push_back(v.middleRows(4 * r, 4));
  return k;
}

}  // namespace

TEST(Tomography, PTMOfCZIsSignedPermutation) {
  auto r = ptm_of(cz());
  EXPECT_NEAR(r.cwiseAbs().sum(), 16.0, 1e-12);
  for (int i = 0; i < 16; ++i) EXPECT_NEAR(r.row(i).cwiseAbs().sum(), 1.0, 1e-12);
  EXPECT_NEAR(r(0, 0), 1.0, 1e-15);
  // CZ maps XI to XZ (index 4*1 + 3)
  EXPECT_NEAR(r(7, 4), 1.0, 1e-12);
  EXPECT_NEAR(fidelity_from_ptm(r, r), 1.0, 1e-12);
}

TEST(Tomography, PTMLabels) {
  EXPECT_EQ(pauli_labels()[0], "II");
  EXPECT_EQ(pauli_labels()[7], "XZ");
  EXPECT_EQ(pauli_labels()[15], "ZZ");
}

TEST(Tomography, DepolarizingPTM) {
  auto r = ptm_of(depolarizing_kraus(0.1));
  EXPECT_NEAR(r(0, 0), 1.0, 1e-14);
  for (int i = 1; i < 16; ++i) EXPECT_NEAR(r(i, i), 0.9, 1e-14);
  EXPECT_NEAR(fidelity_from_ptm(r, PauliTransferMatrix::Identity()), 1 - 0.75 * 0.1, 1e-14);
  EXPECT_NEAR(fidelity_from_ptm(ptm_of(depolarizing_kraus(1.0)), PauliTransferMatrix::Identity()), 0.25, 1e-14);
}

TEST(Tomography, CompositionIsMatrixProduct) {
  auto a = depolarizing_kraus(0.05);
  KrausSet b{{cz()}, "cz"};
  auto c = ptm_of(compose(a, b));
  EXPECT_LT((c - ptm_of(b) * ptm_of(a)).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(Tomography, FidelityAgreesWithKrausFormula) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 5; ++t) {
    auto k = random_channel(rng, 1 + t % 3);
    EXPECT_NEAR(fidelity_from_ptm(ptm_of(k), PauliTransferMatrix::Identity()), average_fidelity_of(k), 1e-12);
  }
}

TEST(Tomography, ChoiRoundTrip) {
  std::mt19937_64 rng(9);
  auto r = ptm_of(random_channel(rng, 2));
  EXPECT_LT((ptm_from_choi(choi_of(r)) - r).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_GT(eigh(MatC(choi_of(r))).values.minCoeff(), -1e-12);
  EXPECT_NEAR(choi_of(r).trace().real(), 4.0, 1e-12);
}

TEST(Tomography, NoiselessReconstructionIsExact) {
  auto rec = reconstruct_ptm(simulate_qpt(cz()));
  EXPECT_LT((rec.raw - ptm_of(cz())).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_NEAR(fidelity_from_ptm(rec.ptm, ptm_of(cz())), 1.0, 1e-10);
}

TEST(Tomography, RandomChannelsRoundTrip) {
  std::mt19937_64 rng(17);
  for (int t = 0; t < 20; ++t) {
    auto k = random_channel(rng, 1 + t % 4);
    auto truth = ptm_of(k);
    auto rec = reconstruct_ptm(simulate_qpt(k));
    EXPECT_LT((rec.ptm - truth).cwiseAbs().maxCoeff(), 1e-9) << t;
  }
}

TEST(Tomography, ProbabilitiesAreNormalised) {
  auto ds = simulate_qpt(compose(KrausSet{{cz()}, "cz"}, incoherent_channel(idle_point_noise())), SpamModel::measured());
  for (int p = 0; p < 36; ++p)
    for (int ba = 0; ba < 3; ++ba)
      for (int bb = 0; bb < 3; ++bb) {
        double s = 0;
        for (int sa = 0; sa < 2; ++sa)
          for (int sb = 0; sb < 2; ++sb) s += ds.probs(p, 6 * (2 * ba + sa) + 2 * bb + sb);
        EXPECT_NEAR(s, 1.0, 1e-12);
      }
  EXPECT_GE(ds.probs.minCoeff(), -1e-15);
}

TEST(Tomography, ReadoutErrorLowersApparentFidelity) {
  auto ideal = ptm_of(cz());
  auto rec = reconstruct_ptm(simulate_qpt(cz(), SpamModel::measured()));
  const double f = fidelity_from_ptm(rec.ptm, ideal);
  EXPECT_LT(f, 0.99);
  EXPECT_GT(f, 0.95);
  EXPECT_EQ(rec.ptm(0, 0), 1.0);
  EXPECT_EQ(rec.ptm.row(0).tail(15).cwiseAbs().sum(), 0.0);
  EXPECT_GT(rec.min_choi_eigenvalue, -1e-9);
  auto prep = reconstruct_ptm(simulate_qpt(cz(), SpamModel::measured_with_preparation()));
  EXPECT_LT(fidelity_from_ptm(prep.ptm, ideal), f);
}

TEST(Tomography, ProjectionsAreIdempotentOnPhysicalMaps) {
  std::mt19937_64 rng(23);
  auto r = ptm_of(random_channel(rng, 3));
  EXPECT_LT((project_cp(r) - r).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((project_tp(r) - r).cwiseAbs().maxCoeff(), 1e-12);
  PauliTransferMatrix bad = r;
  bad(5, 5) += 0.5;
  auto fixed = project_cp(bad);
  EXPECT_GT(eigh(MatC(choi_of(fixed))).values.minCoeff(), -1e-12);
}

TEST(Tomography, InvalidInputsRejected) {
  SpamModel s;
  s.q1(0, 0) = 0.5;
  EXPECT_THROW(s.validate(), ConfigError);
  EXPECT_THROW(simulate_qpt(cz(), s), ConfigError);
  EXPECT_THROW(column_normalized(Assignment::Zero()), ConfigError);
  EXPECT_THROW(ptm_of(MatC(MatC::Identity(2, 2))), ConfigError);
}
