#include <gtest/gtest.h>

#include "oracles.hpp"
#include "random_configs.hpp"
#include "vbeat/vbeat.hpp"

using namespace vbeat;

TEST(Property, StatesStayPhysical) {
  std::mt19937_64 rng(101);
  for (int i = 0; i < 12; ++i) {
    const auto c = gen::random_case(rng);
    const auto tr = evolve(c.model, c.drive, DensityMatrix::ground(), {0, 3000});
    for (const auto& r : tr.states) {
      ASSERT_LT(std::abs(r.trace() - 1.0), 1e-9);
      ASSERT_LT(r.hermiticity_error(), 1e-10);
      ASSERT_GT(r.min_eigenvalue(), -1e-8);
    }
  }
}

TEST(Property, ClosedSystemPreservesPurity) {
  std::mt19937_64 rng(102);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 6; ++i) {
    auto c = gen::random_case(rng);
    c.model.gamma1_per_ps = 0;
    c.model.gamma2_per_ps = 0;
    c.model.dephasing_per_ps = 0;
    const auto tr = evolve(c.model, c.drive, DensityMatrix::ground(), {0, 2000});
    for (const auto& r : tr.states) ASSERT_NEAR(r.purity(), 1.0, 1e-8);
  }
}

TEST(Property, DetunedRabiOracle) {
  std::mt19937_64 rng(103);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 20; ++i) {
    const double om = 0.005 + 0.05 * u(rng);
    const double det_ueV = 20.0 * (u(rng) - 0.5);
    const double t = 10.0 + 1000.0 * u(rng);
    DriveField d;
    d.envelope = Cw{};
    d.peak_rabi_rad_per_ps = om;
    d.pol_angle_rad = 0.0;
    d.detuning_ueV = det_ueV;
    IntegratorConfig cfg;
    cfg.dt_out_ps = t;
    const auto tr = evolve(EmitterModel::two_level(0.0), d, DensityMatrix::ground(), {0, t}, cfg);
    EXPECT_NEAR(tr.states.back().population(kE1), oracle::rabi_population(om, oracle::ueV_to_rad(det_ueV), t), 1e-6);
  }
}

TEST(Property, PolarizationCompleteness) {
  std::mt19937_64 rng(104);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 8; ++i) {
    const auto c = gen::random_case(rng);
    const auto tr = evolve(c.model, c.drive, DensityMatrix::ground(), {0, 1500});
    const double th = 2 * std::numbers::pi * u(rng);
    const auto a = projected_intensity(tr, th);
    const auto b = projected_intensity(tr, th + std::numbers::pi / 2);
    const auto t = total_intensity(tr);
    for (std::size_t k = 0; k < t.size(); ++k) {
      ASSERT_NEAR(a.values[k] + b.values[k], t.values[k], 1e-12);
      ASSERT_GT(a.values[k], -1e-10);
    }
  }
}

TEST(Property, ProjectionNonNegativeForRandomStates) {
  std::mt19937_64 rng(105);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 500; ++i) {
    const DensityMatrix rho(oracle::random_state(rng, false));
    EXPECT_GT(projected_intensity(rho, 2 * std::numbers::pi * u(rng)), -1e-12);
  }
}

TEST(Property, SteadyStateIsLongTimeLimit) {
  std::mt19937_64 rng(106);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 6; ++i) {
    auto c = gen::random_case(rng);
    c.drive.envelope = Cw{};
    c.model.gamma1_per_ps = 2e-3 + 3e-3 * u(rng);
    if (!c.model.is_two_level()) c.model.gamma2_per_ps = 2e-3 + 3e-3 * u(rng);
    const double slowest = std::min(c.model.gamma1_per_ps, c.model.is_two_level() ? 1.0 : c.model.gamma2_per_ps);
    IntegratorConfig cfg;
    cfg.dt_out_ps = 20.0 / slowest;
    const auto tr = evolve(c.model, c.drive, DensityMatrix::ground(), {0, 20.0 / slowest}, cfg);
    const auto ss = steady_state(c.model, c.drive);
    EXPECT_LT((tr.states.back().matrix() - ss.matrix()).cwiseAbs().maxCoeff(), 1e-7);
  }
}

TEST(Property, IrfAttenuationIsGaussianFactor) {
  std::mt19937_64 rng(107);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 20; ++i) {
    const double fwhm = 50.0 + 150.0 * u(rng);
    const double sigma = fwhm / units::kFwhmPerSigma;
    const double w = (0.2 + 2.0 * u(rng)) / sigma;  // attenuations down to ~0.1
    const double dt = 2.0;
    IntensityTrace t;
    for (int k = 0; k < 4000; ++k) {
      t.times_ps.push_back(k * dt);
      t.values.push_back(std::cos(w * k * dt));
    }
    const auto c = convolve_irf(t, fwhm);
    // amplitude from a linear least-squares fit of cos, sin on the interior
    Eigen::MatrixXd x(2000, 2);
    Eigen::VectorXd y(2000);
    for (int k = 1000; k < 3000; ++k) {
      x(k - 1000, 0) = std::cos(w * k * dt);
      x(k - 1000, 1) = std::sin(w * k * dt);
      y(k - 1000) = c.values[k];
    }
    const Eigen::Vector2d cs = (x.transpose() * x).ldlt().solve(x.transpose() * y);
    const double amp = cs.norm();
    const double expect = std::exp(-0.5 * sigma * sigma * w * w);
    EXPECT_NEAR(amp / expect, 1.0, 0.01);
  }
}

TEST(Property, SingleBeatRoundTrip) {
  std::mt19937_64 rng(108);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 25; ++i) {
    const double w = 0.008 + 0.05 * u(rng);
    const double t1 = 500 + 1500 * u(rng);
    const double a = 0.5 + u(rng), b = (0.2 + 0.7 * u(rng)) * a, ph = 2 * std::numbers::pi * (u(rng) - 0.5);
    std::vector<double> ts, ys;
    oracle::synth(2000, 2, t1, a, {{b, w, ph}}, ts, ys);
    IntensityTrace tr;
    tr.times_ps = ts;
    tr.values = ys;
    const auto f = fit_fss_beat(tr);
    EXPECT_NEAR(f.omega_rad_per_ps / w, 1.0, 1e-3);
    EXPECT_NEAR(f.t1_ps / t1, 1.0, 1e-2);
    EXPECT_NEAR(f.components[0].amplitude / b, 1.0, 1e-2);
    EXPECT_NEAR(f.baseline / a, 1.0, 1e-2);
    EXPECT_GT(f.t1_ps, 0.0);
  }
}

TEST(Property, TripleBeatRoundTripAndOrdering) {
  std::mt19937_64 rng(109);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 15; ++i) {
    const double d0 = units::energy_to_angular(8 + 20 * u(rng));
    const double om = (0.7 + 0.8 * u(rng)) * d0;
    const auto f = triple_frequencies(om, d0);
    std::vector<oracle::Tone> tones;
    std::vector<double> amps;
    for (int j = 0; j < 3; ++j) {
      amps.push_back(0.1 + 0.3 * u(rng));
      tones.push_back({amps.back(), f[j], 2 * std::numbers::pi * u(rng)});
    }
    std::vector<double> ts, ys;
    oracle::synth(4000, 2, 1500, 1.0, tones, ts, ys);
    IntensityTrace tr;
    tr.times_ps = ts;
    tr.values = ys;
    FitOptions fo;
    fo.omega_seed = om * (1 + 0.002 * (u(rng) - 0.5));
    const auto r = fit_triple_beat(tr, d0, fo);
    EXPECT_NEAR(r.omega_rad_per_ps / om, 1.0, 1e-3);
    for (std::size_t j = 1; j < r.components.size(); ++j)
      EXPECT_LE(r.components[j - 1].omega_rad_per_ps, r.components[j].omega_rad_per_ps);
    EXPECT_EQ(r.component(BeatRole::Lower)->omega_rad_per_ps, std::abs(r.omega_rad_per_ps - 0.5 * d0));
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(r.components[j].amplitude / amps[j], 1.0, 1e-2);
  }
}

TEST(Property, EmissionSpectrumNonNegative) {
  std::mt19937_64 rng(110);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 10; ++i) {
    auto c = gen::random_case(rng);
    c.drive.envelope = Cw{};
    c.model.gamma1_per_ps = 5e-4 + 3e-3 * u(rng);
    if (!c.model.is_two_level()) c.model.gamma2_per_ps = 5e-4 + 3e-3 * u(rng);
    const auto s = emission_spectrum(c.model, c.drive, -12, 12, 481, {std::nullopt, false});
    for (double v : s.values) EXPECT_GT(v, -1e-9);
    EXPECT_NEAR(s.coherent_power + s.incoherent_power, s.steady_state_intensity, 1e-6);
  }
}
