#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "vbeat/core.hpp"
#include "vbeat/dynamics.hpp"

namespace vbeat {

struct DetectionConfig {
  /// Analyzer angle relative to the H dipole; nullopt = no polarizer.
  std::optional<double> pol_angle_rad = -std::numbers::pi / 4;
  double irf_fwhm_ps = 150.0;
};

/// Detected intensity in excited-population units on a uniform grid.
struct IntensityTrace {
  std::vector<double> times_ps;
  std::vector<double> values;
  DetectionConfig config;

  std::size_t size() const { return values.size(); }
  double dt_ps() const { return times_ps.size() > 1 ? times_ps[1] - times_ps[0] : 0.0; }

  /// Samples with t in [t_begin, t_end].
  IntensityTrace window(double t_begin, double t_end) const {
    IntensityTrace out;
    out.config = config;
    for (std::size_t k = 0; k < times_ps.size(); ++k) {
      if (times_ps[k] >= t_begin - 1e-9 && times_ps[k] <= t_end + 1e-9) {
        out.times_ps.push_back(times_ps[k]);
        out.values.push_back(values[k]);
      }
    }
    return out;
  }
};

/// Unpolarized detection: rho_11 + rho_22.
inline double total_intensity(const DensityMatrix& rho) { return rho.population(kE1) + rho.population(kE2); }

/// Intensity behind an analyzer at `theta` (relative to the H dipole):
/// cos^2 rho_11 + sin^2 rho_22 + sin cos (rho_12 + rho_21).
inline double projected_intensity(const DensityMatrix& rho, double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  return c * c * rho.population(kE1) + s * s * rho.population(kE2) + 2.0 * s * c * rho(kE1, kE2).real();
}

inline IntensityTrace total_intensity(const Trajectory& traj) {
  IntensityTrace out;
  out.times_ps = traj.times_ps;
  out.config.pol_angle_rad = std::nullopt;
  out.config.irf_fwhm_ps = 0.0;
  out.values.reserve(traj.size());
  for (const auto& rho : traj.states) out.values.push_back(total_intensity(rho));
  return out;
}

inline IntensityTrace projected_intensity(const Trajectory& traj, double theta) {
  IntensityTrace out;
  out.times_ps = traj.times_ps;
  out.config.pol_angle_rad = theta;
  out.config.irf_fwhm_ps = 0.0;
  out.values.reserve(traj.size());
  for (const auto& rho : traj.states) out.values.push_back(projected_intensity(rho, theta));
  return out;
}

/// Convolution with a unit-area Gaussian instrument response, zero padded
/// outside the grid.
inline IntensityTrace convolve_irf(const IntensityTrace& trace, double fwhm_ps) {
  if (!(fwhm_ps >= 0)) throw Error(ErrorKind::InvalidArgument, "irf fwhm must be >= 0");
  IntensityTrace out = trace;
  out.config.irf_fwhm_ps = fwhm_ps;
  if (fwhm_ps == 0.0 || trace.size() < 2) return out;

  const double dt = trace.dt_ps();
  if (dt > fwhm_ps / 4) throw Error(ErrorKind::GridTooCoarse, "dt_out exceeds irf fwhm / 4");

  const double sigma = fwhm_ps / units::kFwhmPerSigma;
  const auto half = static_cast<std::ptrdiff_t>(std::ceil(8.0 * sigma / dt));
  std::vector<double> kernel(2 * half + 1);
  double norm = 0.0;
  for (std::ptrdiff_t j = -half; j <= half; ++j) {
    const double x = static_cast<double>(j) * dt / sigma;
    kernel[j + half] = std::exp(-0.5 * x * x);
    norm += kernel[j + half];
  }
  for (double& k : kernel) k /= norm;

  const auto n = static_cast<std::ptrdiff_t>(trace.size());
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    double acc = 0.0;
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(-half, i - (n - 1));
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(half, i);
    for (std::ptrdiff_t j = lo; j <= hi; ++j) acc += kernel[j + half] * trace.values[i - j];
    out.values[i] = acc;
  }
  return out;
}

/// Applies the configured projection and IRF to a trajectory.
inline IntensityTrace detect(const Trajectory& traj, const DetectionConfig& cfg) {
  IntensityTrace raw = cfg.pol_angle_rad ? projected_intensity(traj, *cfg.pol_angle_rad) : total_intensity(traj);
  return convolve_irf(raw, cfg.irf_fwhm_ps);
}

}  // namespace vbeat
