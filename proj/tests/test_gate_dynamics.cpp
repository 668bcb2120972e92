#include "dtc/gate_dynamics.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace dtc;

namespace {

constexpr double kAmp = 0.0975925;

const HamiltonianOperator& reference_h() {
  static const HamiltonianOperator h = build_hamiltonian(CircuitParams::reference_device(), BasisConfig{});
  return h;
}

const DynamicsModel& model() {
  static const DynamicsModel m = build_dynamics_model(reference_h(), BasisConfig{}, 0.309);
  return m;
}

Waveform cz_pulse() { return slepian_unit_pulse({}).scaled(kAmp); }

Eigen::Matrix4cd diag4(double a, double b, double c, double d) {
  return Eigen::Vector4cd(std::polar(1.0, a), std::polar(1.0, b), std::polar(1.0, c), std::polar(1.0, d)).asDiagonal();
}

}  // namespace

TEST(GateDynamics, ModelShape) {
  const auto& m = model();
  EXPECT_EQ(m.dim(), 60);
  EXPECT_LT((m.h0 - m.h0.adjoint()).cwiseAbs().maxCoeff(), 1e-10);
  // idle frame: the model Hamiltonian is diagonal at the idle flux
  MatC hi = m.at(m.idle_flux);
  MatC off = hi - MatC(hi.diagonal().asDiagonal());
  EXPECT_LT(off.cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_NEAR(m.idle_energies(m.comp[1]) - m.idle_energies(m.comp[0]), 4.778, 0.05);
  EXPECT_NEAR(m.idle_energies(m.comp[2]) - m.idle_energies(m.comp[0]), 4.314, 0.05);
}

TEST(GateDynamics, ZeroWaveformIsIdentity) {
  Waveform w;
  w.samples.assign(105, 0.0);
  auto p = evolve(model(), w);
  EXPECT_LT((p.u - MatC::Identity(model().dim(), model().dim())).cwiseAbs().maxCoeff(), 1e-10);
  auto r = gate_report(model(), p);
  EXPECT_NEAR(r.theta_cz, 0.0, 1e-10);
  EXPECT_NEAR(r.leakage_l1, 0.0, 1e-12);
}

TEST(GateDynamics, UnitarityAndComposition) {
  const auto w = cz_pulse();
  auto p = evolve(model(), w);
  const int k = model().dim();
  EXPECT_LT((p.lab.adjoint() * p.lab - MatC::Identity(k, k)).cwiseAbs().maxCoeff(), 1e-10);
  // two pulses back to back share their zero boundary sample
  Waveform two = w;
  two.samples.insert(two.samples.end(), w.samples.begin() + 1, w.samples.end());
  auto p2 = evolve(model(), two);
  EXPECT_LT((p2.lab - p.lab * p.lab).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_EQ(p2.steps, 2 * p.steps);
}

TEST(GateDynamics, CalibratedPulseIsCZ) {
  auto r = gate_report(model(), evolve(model(), cz_pulse()));
  EXPECT_NEAR(std::abs(r.theta_cz), kPi, 2e-3);
  EXPECT_LT(r.leakage_l1, 1e-3);
  EXPECT_GT(r.fidelity, 0.9999);
}

TEST(GateDynamics, ConditionalPhaseCases) {
  EXPECT_NEAR(cphase_angles(cz_matrix()).theta_cz(), kPi, 1e-15);
  // product of single-qubit phases carries no conditional phase
  const double a = 0.7, b = -1.9;
  EXPECT_NEAR(cphase_angles(diag4(0, b, a, a + b)).theta_cz(), 0.0, 1e-12);
  EXPECT_NEAR(cphase_angles(diag4(0.3, 0.3 + b, 0.3 + a, 0.3 + a + b + 1.1)).theta_cz(), 1.1, 1e-12);
  Eigen::Matrix4cd swapish = Eigen::Matrix4cd::Zero();
  swapish(0, 1) = swapish(1, 0) = swapish(2, 2) = swapish(3, 3) = 1;
  EXPECT_THROW(cphase_angles(swapish), NumericalError);
}

TEST(GateDynamics, ThetaCZInvariantUnderVirtualZ) {
  auto blk = computational_block(model(), evolve(model(), cz_pulse()).u);
  const double t0 = cphase_angles(blk).theta_cz();
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-kPi, kPi);
  for (int i = 0; i < 100; ++i) {
    const double t = cphase_angles(apply_vz(blk, u(rng), u(rng))).theta_cz();
    EXPECT_NEAR(wrap_phase(t - t0), 0.0, 1e-10);
  }
}

TEST(GateDynamics, LeakageOfClosedBlock) {
  EXPECT_EQ(leakage_of(cz_matrix()).l1, 0.0);
  EXPECT_NEAR(leakage_of(diag4(0.1, 0.2, 0.3, 0.4)).l1, 0.0, 1e-15);
  Eigen::Matrix4cd half = Eigen::Matrix4cd::Identity();
  half(3, 3) = std::sqrt(0.5);
  EXPECT_NEAR(leakage_of(half).l1, 0.125, 1e-15);
}

TEST(GateDynamics, SquarePulseLeaksMore) {
  const auto w = cz_pulse();
  double area = 0;
  for (double s : w.samples) area += s;
  Waveform sq = w;
  const int pad = w.pad_samples;
  const int n = static_cast<int>(w.size()) - 2 * pad;
  for (int i = 0; i < static_cast<int>(w.size()); ++i) sq.samples[i] = (i > pad && i < pad + n - 1) ? 1.0 : 0.0;
  double sq_area = 0;
  for (double s : sq.samples) sq_area += s;
  for (double& s : sq.samples) s *= area / sq_area;
  const double ls = leakage_of(computational_block(model(), evolve(model(), w).u)).l1;
  const double lq = leakage_of(computational_block(model(), evolve(model(), sq).u)).l1;
  EXPECT_GE(lq, 10 * ls) << ls << " " << lq;
}

TEST(GateDynamics, FidelityCases) {
  EXPECT_NEAR(average_gate_fidelity(MatC(MatC::Identity(4, 4))), 1.0, 1e-15);
  EXPECT_EQ(average_gate_fidelity(MatC(MatC::Zero(4, 4))), 0.0);
  for (double p : {0.0, 0.01, 0.3}) {
    MatC m = std::sqrt(1 - p) * MatC::Identity(4, 4);
    EXPECT_NEAR(average_gate_fidelity(m), 1 - p, 1e-14);
  }
  EXPECT_NEAR(average_gate_fidelity(cz_matrix(), cz_matrix()), 1.0, 1e-15);
  // a bare single-qubit Z on an ideal CZ: |Tr|^2 = 0, so F = 4 / 20
  EXPECT_NEAR(average_gate_fidelity(Eigen::Matrix4cd(diag4(0, 0, kPi, kPi) * cz_matrix()), cz_matrix()), 0.2, 1e-14);
}

TEST(GateDynamics, VirtualZPhasesApplied) {
  const double t1 = 0.4, t2 = -1.2;
  auto blk = diag4(0.5, 0.5 + t2, 0.5 + t1, 0.5 + t1 + t2 + kPi);
  EXPECT_NEAR(average_gate_fidelity(apply_vz(blk, t1, t2), cz_matrix()), 1.0, 1e-14);
  EXPECT_NEAR(std::arg(apply_vz(blk, t1, t2)(0, 0)), 0.0, 1e-15);
}

TEST(GateDynamics, ConvergedInKeptDimension) {
  BasisConfig b;
  b.kept_total = 80;
  auto big = build_dynamics_model(reference_h(), b, 0.309);
  const auto w = cz_pulse();
  const double t60 = cphase_angles(computational_block(model(), evolve(model(), w).u)).theta_cz();
  const double t80 = cphase_angles(computational_block(big, evolve(big, w).u)).theta_cz();
  EXPECT_LT(std::abs(wrap_phase(t80 - t60)), 1e-5);
}

TEST(GateDynamics, ConvergedInTimeStep) {
  const auto w = cz_pulse();
  EvolveOptions fine;
  fine.substeps = 8;
  auto a = gate_report(model(), evolve(model(), w));
  auto b = gate_report(model(), evolve(model(), w, fine));
  EXPECT_LT(std::abs(wrap_phase(a.theta_cz - b.theta_cz)), 1e-3);
  EXPECT_NEAR(a.leakage_l1, b.leakage_l1, 1e-5);
  EXPECT_EQ(b.steps, 2 * a.steps);
}

TEST(GateDynamics, FluxOutsideModelRangeRejected) {
  EXPECT_THROW(evolve(model(), slepian_unit_pulse({}).scaled(0.3)), DomainError);
  EXPECT_THROW(evolve(model(), slepian_unit_pulse({}).scaled(-0.4)), DomainError);
  EvolveOptions bad;
  bad.substeps = 0;
  EXPECT_THROW(evolve(model(), cz_pulse(), bad), ConfigError);
}
