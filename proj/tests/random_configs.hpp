#pragma once

#include <numbers>
#include <random>

#include "vbeat/vbeat.hpp"

namespace gen {

struct Case {
  vbeat::EmitterModel model;
  vbeat::DriveField drive;
};

/// Random emitter and drive: either kind, rates up to 5e-3/ps, CW, square
/// or Gaussian envelopes, peak Rabi rates up to 0.05 rad/ps.
inline Case random_case(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Case c;
  if (u(rng) < 0.5) {
    c.model = vbeat::EmitterModel::two_level(5e-3 * u(rng), 2e-3 * u(rng));
  } else {
    c.model = vbeat::EmitterModel::v_system(40.0 * u(rng), 5e-3 * u(rng), 2e-3 * u(rng));
    c.model.gamma2_per_ps = 5e-3 * u(rng);
  }
  const double pick = u(rng);
  if (pick < 1.0 / 3)
    c.drive.envelope = vbeat::Cw{};
  else if (pick < 2.0 / 3)
    c.drive.envelope = vbeat::SquarePulse{50.0 + 3000.0 * u(rng)};
  else
    c.drive.envelope = vbeat::GaussianPulse{20.0 + 300.0 * u(rng)};
  c.drive.peak_rabi_rad_per_ps = 0.05 * u(rng);
  c.drive.detuning_ueV = 30.0 * (u(rng) - 0.5);
  c.drive.pol_angle_rad = std::numbers::pi * u(rng);
  c.drive.t0_ps = 1000.0 * u(rng);
  return c;
}

}  // namespace gen
