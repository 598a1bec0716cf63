#include <gtest/gtest.h>

#include "oracles.hpp"
#include "vbeat/vbeat.hpp"

using namespace vbeat;

namespace {

DriveField cw(double rabi, double pol = 0.0, double detuning_ueV = 0.0) {
  DriveField d;
  d.envelope = Cw{};
  d.peak_rabi_rad_per_ps = rabi;
  d.pol_angle_rad = pol;
  d.detuning_ueV = detuning_ueV;
  return d;
}

}  // namespace

TEST(LindbladRhs, GroundStateIsStationary) {
  const auto m = EmitterModel::v_system(13, 0.001);
  const Mat3 d = lindblad_rhs(m, DensityMatrix::ground(), hamiltonian_at(m, cw(0.0), 0.0));
  EXPECT_LT(d.cwiseAbs().maxCoeff(), 1e-18);
}

TEST(LindbladRhs, PureDecay) {
  const auto m = EmitterModel::v_system(13, 0.001);
  const auto e1 = DensityMatrix::pure(Eigen::Vector3cd(0, 1, 0));
  const Mat3 d = lindblad_rhs(m, e1, hamiltonian_at(m, cw(0.0), 0.0));
  EXPECT_NEAR(d(kE1, kE1).real(), -0.001, 1e-15);
  EXPECT_NEAR(d(kG, kG).real(), 0.001, 1e-15);
}

TEST(LindbladRhs, CoherenceEquationOfMotion) {
  auto m = EmitterModel::v_system(13, 0.001);
  const auto s = DensityMatrix::pure(Eigen::Vector3cd(0, 1, 1));
  const Mat3 d = lindblad_rhs(m, s, hamiltonian_at(m, cw(0.0), 0.0));
  // rho_12 = <e1|rho|e2>, evolving as e^{+i delta0 t} in this frame.
  oracle::Params p;
  p.delta0 = oracle::ueV_to_rad(13.0);
  p.g1 = p.g2 = 0.001;
  const oracle::M3 ref = oracle::rhs(p, s.matrix());
  EXPECT_LT((d - ref).cwiseAbs().maxCoeff(), 1e-16);
  EXPECT_NEAR(std::abs(d(kE1, kE2)), std::abs(cplx(-0.001, -m.fss_rad_per_ps()) * 0.5), 1e-15);
  EXPECT_NEAR(d(kE1, kE2).real(), -0.001 * 0.5, 1e-15);
}

TEST(LindbladRhs, MatchesVectorizedGenerator) {
  const auto m = EmitterModel::v_system(13, 0.002, 0.0005);
  const DriveField d = cw(0.02, 0.3, 2.0);
  std::mt19937_64 rng(3);
  const Mat3 rho = oracle::random_state(rng, false);
  const Mat3 h = hamiltonian_at(m, d, 0.0);
  const Mat3 direct = lindblad_rhs(m, rho, h);
  const Liouvillian gen = liouvillian(m, h, 3);
  Eigen::VectorXcd v(9);
  for (int c = 0; c < 3; ++c)
    for (int r = 0; r < 3; ++r) v(3 * c + r) = rho(r, c);
  const Eigen::VectorXcd dv = gen * v;
  for (int c = 0; c < 3; ++c)
    for (int r = 0; r < 3; ++r) EXPECT_NEAR(std::abs(dv(3 * c + r) - direct(r, c)), 0.0, 1e-16);
}

TEST(Evolve, GroundStaysGroundWithoutDrive) {
  const auto m = EmitterModel::v_system(13, 0.001);
  const auto tr = evolve(m, cw(0.0), DensityMatrix::ground(), {0, 1000});
  for (const auto& r : tr.states) EXPECT_NEAR(r.population(kG), 1.0, 1e-14);
}

TEST(Evolve, GridArithmetic) {
  const auto m = EmitterModel::two_level(0.001);
  const auto tr = evolve(m, cw(0.0), DensityMatrix::ground(), {0, 4000});
  ASSERT_EQ(tr.size(), 2001u);
  EXPECT_EQ(tr.times_ps.front(), 0.0);
  EXPECT_EQ(tr.times_ps.back(), 4000.0);
}

TEST(Evolve, ResonantRabiPiTime) {
  const auto m = EmitterModel::two_level(0.0);
  IntegratorConfig c;
  c.dt_out_ps = 62.832;
  const auto tr = evolve(m, cw(0.05), DensityMatrix::ground(), {0, 62.832}, c);
  EXPECT_NEAR(tr.states.back().population(kE1), 1.0, 1e-6);
  EXPECT_NEAR(tr.states.back().population(kE1), oracle::rabi_population(0.05, 0.0, 62.832), 1e-6);
}

TEST(Evolve, DetunedRabiMatchesClosedForm) {
  const auto m = EmitterModel::two_level(0.0);
  const double delta_ueV = 10.0;
  const auto tr = evolve(m, cw(0.02, 0.0, delta_ueV), DensityMatrix::ground(), {0, 1000});
  const double delta = oracle::ueV_to_rad(delta_ueV);
  for (std::size_t k = 0; k < tr.size(); k += 25)
    EXPECT_NEAR(tr.states[k].population(kE1), oracle::rabi_population(0.02, delta, tr.times_ps[k]), 1e-6);
}

TEST(Evolve, UndrivenSuperpositionBeat) {
  const auto m = EmitterModel::v_system(13, 0.001);
  const double period = 2 * std::numbers::pi / oracle::ueV_to_rad(13.0);
  IntegratorConfig c;
  c.dt_out_ps = period;
  const auto tr = evolve(m, cw(0.0), DensityMatrix::pure(Eigen::Vector3cd(0, 1, 1)), {0, period}, c);
  EXPECT_NEAR(period, 318.13, 0.01);
  EXPECT_NEAR(tr.states.back()(kE1, kE2).real(), 0.5 * std::exp(-0.001 * period), 1e-6);
  EXPECT_NEAR(tr.states.back()(kE1, kE2).real(), 0.3637, 1e-4);
}

TEST(Evolve, AgreesWithReferenceStepper) {
  const auto m = EmitterModel::v_system(13, 0.002, 0.0007);
  const DriveField d = cw(0.015, 0.4, -4.0);
  oracle::Params p;
  p.delta0 = m.fss_rad_per_ps();
  p.g1 = p.g2 = 0.002;
  p.gd = 0.0007;
  p.det = oracle::ueV_to_rad(4.0);
  p.w1 = 0.015 * std::cos(0.4);
  p.w2 = 0.015 * std::cos(0.4 - std::numbers::pi / 2);
  const auto ref = oracle::rk4(p, oracle::M3(DensityMatrix::ground().matrix()), 600, 20);
  IntegratorConfig c;
  c.dt_out_ps = 20;
  const auto tr = evolve(m, d, DensityMatrix::ground(), {0, 600}, c);
  ASSERT_EQ(tr.size(), ref.size());
  for (std::size_t k = 0; k < ref.size(); ++k) EXPECT_LT((tr.states[k].matrix() - ref[k]).cwiseAbs().maxCoeff(), 1e-7);
}

TEST(Evolve, RejectsTwoLevelStateWithSecondExcitedLevel) {
  const auto m = EmitterModel::two_level(0.001);
  EXPECT_THROW(evolve(m, cw(0.0), DensityMatrix::pure(Eigen::Vector3cd(0, 1, 1)), {0, 10}), Error);
}

TEST(Evolve, StepFailureOnImpossibleTolerance) {
  const auto m = EmitterModel::two_level(0.001);
  IntegratorConfig c;
  c.rel_tol = 1e-30;
  c.abs_tol = 1e-30;
  c.min_step_ps = 1e-3;
  try {
    evolve(m, cw(0.5), DensityMatrix::ground(), {0, 100}, c);
    FAIL() << "expected StepFailure";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::StepFailure);
  }
}

TEST(SteadyState, DarkWithoutDrive) {
  const auto rho = steady_state(EmitterModel::v_system(13, 0.001), cw(0.0));
  EXPECT_NEAR(rho.population(kG), 1.0, 1e-12);
}

TEST(SteadyState, ResonantTwoLevelFormula) {
  const auto rho = steady_state(EmitterModel::two_level(0.001), cw(0.1));
  const double om = 0.1, g = 0.001;
  EXPECT_NEAR(rho.population(kE1), (om * om / 4) / (g * g / 4 + om * om / 2), 1e-9);
  EXPECT_NEAR(rho.population(kE1), 0.499975, 1e-6);
}

TEST(SteadyState, MatchesBlochSolution) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 20; ++i) {
    const double g = 1e-3 * (0.5 + u(rng));
    const double gd = 1e-3 * u(rng);
    const double om = 0.05 * u(rng);
    const double det = 20.0 * (u(rng) - 0.5);
    const auto rho = steady_state(EmitterModel::two_level(g, gd), cw(om, 0.0, det));
    EXPECT_NEAR(rho.population(kE1), oracle::bloch_steady_population(om, oracle::ueV_to_rad(det), g, g / 2 + gd), 1e-10);
  }
}

TEST(SteadyState, FarDetunedPerturbativeLimit) {
  const double om = 0.002, det_ueV = 50.0;
  const auto rho = steady_state(EmitterModel::two_level(0.001), cw(om, 0.0, det_ueV));
  const double delta = oracle::ueV_to_rad(det_ueV);
  EXPECT_NEAR(rho.population(kE1) / (om * om / 4 / (delta * delta)), 1.0, 0.01);
}

TEST(SteadyState, LongTimeLimitOfEvolution) {
  const auto m = EmitterModel::v_system(13, 0.001);
  const DriveField d = cw(0.01, std::numbers::pi / 4, 3.0);
  IntegratorConfig c;
  c.dt_out_ps = 1000;
  const auto tr = evolve(m, d, DensityMatrix::ground(), {0, 40000}, c);
  const auto rho = steady_state(m, d);
  EXPECT_LT((tr.states.back().matrix() - rho.matrix()).cwiseAbs().maxCoeff(), 1e-7);
}
