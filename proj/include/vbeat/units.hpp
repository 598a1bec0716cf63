#pragma once

#include <numbers>

namespace vbeat::units {

// Internal unit system: time in ps, angular rates in rad/ps, energies in ueV.
inline constexpr double kHbarUeVps = 658.2119;  // ueV * ps
inline constexpr double kPlanckUeVps = 4135.667;  // ueV * ps
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

constexpr double energy_to_angular(double e_ueV) { return e_ueV / kHbarUeVps; }
constexpr double angular_to_energy(double w_rad_per_ps) { return w_rad_per_ps * kHbarUeVps; }

/// rad/ps -> GHz (cycles per ns).
constexpr double angular_to_ghz(double w_rad_per_ps) { return 1000.0 * w_rad_per_ps / kTwoPi; }
constexpr double ghz_to_angular(double f_ghz) { return f_ghz * kTwoPi / 1000.0; }

constexpr double energy_to_ghz(double e_ueV) { return 1000.0 * e_ueV / kPlanckUeVps; }

inline constexpr double kFwhmPerSigma = 2.3548200450309493;  // 2 sqrt(2 ln 2)

}  // namespace vbeat::units
