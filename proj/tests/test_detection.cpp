#include <gtest/gtest.h>

#include "oracles.hpp"
#include "vbeat/vbeat.hpp"

using namespace vbeat;

namespace {

DensityMatrix make(double r11, double r22, cplx r12) {
  Mat3 m = Mat3::Zero();
  m(kE1, kE1) = r11;
  m(kE2, kE2) = r22;
  m(kE1, kE2) = r12;
  m(kE2, kE1) = std::conj(r12);
  m(kG, kG) = 1.0 - r11 - r22;
  return DensityMatrix(m);
}

IntensityTrace sampled(double dt, std::size_t n, const std::function<double(double)>& f) {
  IntensityTrace t;
  for (std::size_t k = 0; k < n; ++k) {
    t.times_ps.push_back(k * dt);
    t.values.push_back(f(k * dt));
  }
  return t;
}

}  // namespace

TEST(TotalIntensity, IgnoresCoherence) {
  EXPECT_EQ(total_intensity(DensityMatrix::ground()), 0.0);
  EXPECT_NEAR(total_intensity(make(0.3, 0.2, 0.25)), 0.5, 1e-15);
}

TEST(ProjectedIntensity, Examples) {
  EXPECT_NEAR(projected_intensity(make(0.0, 1.0, 0.0), 0.0), 0.0, 1e-16);
  EXPECT_NEAR(projected_intensity(make(0.5, 0.5, 0.5), std::numbers::pi / 4), 1.0, 1e-15);
  EXPECT_NEAR(projected_intensity(make(0.5, 0.5, 0.5), -std::numbers::pi / 4), 0.0, 1e-15);
}

TEST(ProjectedIntensity, UndrivenSuperpositionBeat) {
  const auto m = EmitterModel::v_system(13, 0.001);
  DriveField d;
  d.envelope = Cw{};
  const auto tr = evolve(m, d, DensityMatrix::pure(Eigen::Vector3cd(0, 1, 1)), {0, 3000});
  const auto total = total_intensity(tr);
  const auto proj = projected_intensity(tr, std::numbers::pi / 4);
  const double w = oracle::ueV_to_rad(13.0);
  for (std::size_t k = 0; k < tr.size(); k += 7) {
    const double t = tr.times_ps[k];
    EXPECT_NEAR(total.values[k], std::exp(-0.001 * t), 1e-8);
    EXPECT_NEAR(proj.values[k], 0.5 * std::exp(-0.001 * t) * (1 + std::cos(w * t)), 1e-8);
  }
}

TEST(Irf, ZeroWidthIsIdentity) {
  const auto t = sampled(2.0, 100, [](double x) { return std::sin(0.01 * x); });
  const auto c = convolve_irf(t, 0.0);
  EXPECT_EQ(c.values, t.values);
}

TEST(Irf, ConstantInteriorUnchanged) {
  const auto t = sampled(2.0, 1000, [](double) { return 0.7; });
  const auto c = convolve_irf(t, 150.0);
  for (std::size_t k = 300; k < 700; ++k) EXPECT_NEAR(c.values[k], 0.7, 1e-9);
}

TEST(Irf, GaussianAttenuationOfFssBeat) {
  const double w = oracle::ueV_to_rad(13.0);
  const auto t = sampled(2.0, 3000, [w](double x) { return 1.0 + std::cos(w * x); });
  const auto c = convolve_irf(t, 150.0);
  double hi = -1e9, lo = 1e9;
  for (std::size_t k = 1000; k < 2000; ++k) {
    hi = std::max(hi, c.values[k]);
    lo = std::min(lo, c.values[k]);
  }
  const double sigma = 150.0 / (2 * std::sqrt(2 * std::log(2.0)));
  EXPECT_NEAR(sigma, 63.70, 0.01);
  EXPECT_NEAR(0.5 * (hi - lo), std::exp(-0.5 * sigma * sigma * w * w), 2e-3);
  EXPECT_NEAR(0.5 * (hi - lo), 0.453, 0.01);
}

TEST(Irf, LinearAndScaleCovariant) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  const auto a = sampled(2.0, 500, [&](double) { return u(rng); });
  const auto b = sampled(2.0, 500, [&](double) { return u(rng); });
  IntensityTrace s = a;
  for (std::size_t k = 0; k < s.size(); ++k) s.values[k] = 2.5 * a.values[k] - 0.5 * b.values[k];
  const auto ca = convolve_irf(a, 80.0), cb = convolve_irf(b, 80.0), cs = convolve_irf(s, 80.0);
  for (std::size_t k = 0; k < s.size(); ++k)
    EXPECT_NEAR(cs.values[k], 2.5 * ca.values[k] - 0.5 * cb.values[k], 1e-13);
}

TEST(Irf, RejectsCoarseGrid) {
  const auto t = sampled(50.0, 100, [](double) { return 1.0; });
  try {
    convolve_irf(t, 150.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::GridTooCoarse);
  }
  EXPECT_THROW(convolve_irf(t, -1.0), Error);
}

TEST(Detect, DefaultsToCrossedAnalyzerAndIrf) {
  DetectionConfig c;
  ASSERT_TRUE(c.pol_angle_rad.has_value());
  EXPECT_NEAR(*c.pol_angle_rad, -std::numbers::pi / 4, 0.0);
  EXPECT_EQ(c.irf_fwhm_ps, 150.0);
}

TEST(IntensityTraceTest, WindowIsInclusive) {
  const auto t = sampled(2.0, 11, [](double x) { return x; });
  const auto w = t.window(4.0, 10.0);
  ASSERT_EQ(w.size(), 4u);
  EXPECT_EQ(w.times_ps.front(), 4.0);
  EXPECT_EQ(w.times_ps.back(), 10.0);
}
