#pragma once

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "vbeat/beatfit.hpp"
#include "vbeat/core.hpp"
#include "vbeat/detection.hpp"
#include "vbeat/dynamics.hpp"

namespace vbeat {

// ---------------------------------------------------------------------------
// Pulse calibration

/// sqrt(pi / (4 ln 2)): area of a unit-peak Gaussian per unit FWHM.
inline constexpr double kGaussianAreaPerFwhm = 1.0644670194312262;

struct PiPulseCalibration {
  double peak_rabi_rad_per_ps = 0.0;  // channel Rabi rate giving area pi
  double final_inversion = 0.0;       // simulated rho_11 after the pulse
  bool inversion_ok = false;          // final_inversion >= 0.99
  std::string warning;
};

/// Peak rate for a pulse of area pi on the e1 channel, checked by simulating
/// the two-level embedding of `model`.
inline PiPulseCalibration pi_pulse_calibrate(const EmitterModel& model, const Envelope& envelope,
                                             const IntegratorConfig& cfg = {}) {
  require_valid(model);
  PiPulseCalibration out;
  DriveField d;
  d.envelope = envelope;
  d.pol_angle_rad = model.dipole_angles_rad[0];
  if (const auto* sq = std::get_if<SquarePulse>(&envelope)) {
    out.peak_rabi_rad_per_ps = std::numbers::pi / sq->duration_ps;
    d.t0_ps = 0.0;
  } else if (const auto* g = std::get_if<GaussianPulse>(&envelope)) {
    out.peak_rabi_rad_per_ps = std::numbers::pi / (g->fwhm_ps * kGaussianAreaPerFwhm);
    d.t0_ps = 4.0 * g->fwhm_ps;
  } else {
    throw Error(ErrorKind::InvalidArgument, "pi-pulse calibration needs a finite pulse");
  }
  d.peak_rabi_rad_per_ps = out.peak_rabi_rad_per_ps;

  const EmitterModel tls = EmitterModel::two_level(model.gamma1_per_ps, model.dephasing_per_ps);
  const double t_end = std::holds_alternative<SquarePulse>(envelope) ? d.pulse_end_ps() + kSquareRampPs
                                                                      : d.t0_ps + 2.0 * d.envelope_width_ps();
  IntegratorConfig c = cfg;
  c.dt_out_ps = t_end;
  const Trajectory tr = evolve(tls, d, DensityMatrix::ground(), {0.0, t_end}, c);
  out.final_inversion = tr.states.back().population(kE1);
  out.inversion_ok = out.final_inversion >= 0.99;
  if (!out.inversion_ok)
    out.warning = "inversion " + std::to_string(out.final_inversion) + " < 0.99: decay during the pulse";
  return out;
}

// ---------------------------------------------------------------------------
// Sweeps

struct SweepPoint {
  double param = 0.0;
  double value_ghz = std::numeric_limits<double>::quiet_NaN();
  double stderr_ghz = std::numeric_limits<double>::quiet_NaN();
  bool converged = false;
  std::string error;  // empty on success
  std::optional<BeatFitResult> fit;
  IntensityTrace trace;       // detected (post-IRF) trace, full span
  double window_start_ps = 0.0;
  double window_end_ps = 0.0;
  /// B / A of single-beat fits, with and without the IRF.
  double visibility = std::numeric_limits<double>::quiet_NaN();
  double visibility_raw = std::numeric_limits<double>::quiet_NaN();
};

struct SweepResult {
  std::string param_name;  // "fss_ueV" or "power"
  std::string value_name;  // "beat_GHz" or "omega_GHz"
  std::vector<SweepPoint> points;

  std::size_t converged_count() const {
    std::size_t n = 0;
    for (const auto& p : points) n += p.converged ? 1 : 0;
    return n;
  }
};

/// Worker count: VBEAT_THREADS when set, else hardware concurrency.
inline unsigned default_thread_count() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("VBEAT_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) n = static_cast<unsigned>(v);
  }
  return n;
}

/// Runs fn(i) for i in [0, n) on up to `threads` workers; results land by index.
inline void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  for (auto& th : pool) th.join();
}

struct ExperimentConfig {
  double exc_angle_rad = std::numbers::pi / 4;
  DetectionConfig detection{};
  IntegratorConfig integrator{};
  unsigned threads = default_thread_count();

  // pi-pulse (FSS beat) runs
  double pi_fwhm_ps = 100.0;
  double pi_center_ps = 300.0;
  double pi_span_ps = 4000.0;

  // long-pulse (Rabi) runs
  double long_duration_ps = 2000.0;
  double long_start_ps = 0.0;
  double long_span_ps = 3000.0;
  double rabi_per_sqrt_power = 1.0;  // peak Rabi rate = c sqrt(P)
};

namespace detail {

inline DriveField pi_drive(const EmitterModel& model, const ExperimentConfig& cfg) {
  const Envelope env = GaussianPulse{cfg.pi_fwhm_ps};
  const PiPulseCalibration cal = pi_pulse_calibrate(model, env, cfg.integrator);
  DriveField d;
  d.envelope = env;
  d.t0_ps = cfg.pi_center_ps;
  d.pol_angle_rad = cfg.exc_angle_rad;
  d.peak_rabi_rad_per_ps = cal.peak_rabi_rad_per_ps / std::cos(cfg.exc_angle_rad - model.dipole_angles_rad[0]);
  return d;
}

/// Free-decay window: one envelope width plus two IRF widths after the pulse
/// ends, up to two IRF widths before the zero-padded edge of the convolution.
inline std::pair<double, double> free_decay_window(const DriveField& d, const ExperimentConfig& cfg) {
  const double irf = cfg.detection.irf_fwhm_ps;
  return {d.pulse_end_ps() + d.envelope_width_ps() + 2.0 * irf, cfg.pi_span_ps - 2.0 * irf};
}

/// Driven window: the pulse duration. Two-level fits trim one IRF width at
/// each edge; V-system fits keep the full pulse.
inline std::pair<double, double> driven_window(const EmitterModel& m, const DriveField& d,
                                               const ExperimentConfig& cfg) {
  const double trim = m.is_two_level() ? cfg.detection.irf_fwhm_ps : 0.0;
  return {d.t0_ps + trim, d.pulse_end_ps() - trim};
}

inline double visibility_of(const BeatFitResult& f) {
  return f.baseline != 0.0 ? f.components.front().amplitude / std::abs(f.baseline) : 0.0;
}

}  // namespace detail

/// FSS beats after a 100-ps pi pulse on e1, one point per splitting.
inline SweepResult run_fss_beat_experiment(const EmitterModel& base, const std::vector<double>& fss_list_ueV,
                                           const ExperimentConfig& cfg = {}) {
  if (fss_list_ueV.empty()) throw Error(ErrorKind::InvalidArgument, "empty fss sweep");
  SweepResult out;
  out.param_name = "fss_ueV";
  out.value_name = "beat_GHz";
  out.points.resize(fss_list_ueV.size());

  parallel_for(fss_list_ueV.size(), cfg.threads, [&](std::size_t i) {
    SweepPoint& pt = out.points[i];
    pt.param = fss_list_ueV[i];
    try {
      EmitterModel m = base;
      m.kind = EmitterKind::VSystem;
      m.fss_ueV = fss_list_ueV[i];
      const DriveField d = detail::pi_drive(m, cfg);
      const Trajectory tr = evolve(m, d, DensityMatrix::ground(), {0.0, cfg.pi_span_ps}, cfg.integrator);
      DetectionConfig raw_cfg = cfg.detection;
      raw_cfg.irf_fwhm_ps = 0.0;
      const IntensityTrace raw = detect(tr, raw_cfg);
      pt.trace = convolve_irf(raw, cfg.detection.irf_fwhm_ps);
      std::tie(pt.window_start_ps, pt.window_end_ps) = detail::free_decay_window(d, cfg);

      const BeatFitResult fit = fit_fss_beat(pt.trace.window(pt.window_start_ps, pt.window_end_ps));
      pt.value_ghz = units::angular_to_ghz(fit.omega_rad_per_ps);
      pt.stderr_ghz = units::angular_to_ghz(fit.omega_stderr);
      pt.converged = fit.converged;
      pt.visibility = detail::visibility_of(fit);
      try {
        pt.visibility_raw = detail::visibility_of(fit_fss_beat(raw.window(pt.window_start_ps, pt.window_end_ps)));
      } catch (const Error&) {
      }
      pt.fit = fit;
    } catch (const Error& e) {
      pt.error = e.what();
      pt.converged = false;
    }
  });
  return out;
}

/// Driven-transient fit: SingleBeat for a two-level emitter, TripleBeat
/// (delta0 from the model) for a V system.
inline BeatFitResult fit_driven(const EmitterModel& m, const IntensityTrace& window) {
  FitOptions fo;
  fo.baseline_decay = BaselineDecay::Independent;
  if (m.is_two_level()) return fit_fss_beat(window, fo);
  return fit_triple_beat(window, m.fss_rad_per_ps(), fo);
}

inline DriveField long_pulse(double peak_rabi, const ExperimentConfig& cfg) {
  DriveField d;
  d.envelope = SquarePulse{cfg.long_duration_ps};
  d.t0_ps = cfg.long_start_ps;
  d.pol_angle_rad = cfg.exc_angle_rad;
  d.peak_rabi_rad_per_ps = peak_rabi;
  return d;
}

/// Rabi frequency versus excitation power under a long square pulse.
inline SweepResult run_power_sweep(const EmitterModel& model, const std::vector<double>& powers,
                                   const ExperimentConfig& cfg = {}) {
  if (powers.empty()) throw Error(ErrorKind::InvalidArgument, "empty power sweep");
  for (double p : powers)
    if (!(p > 0)) throw Error(ErrorKind::InvalidArgument, "powers must be > 0");
  require_valid(model);
  SweepResult out;
  out.param_name = "power";
  out.value_name = "omega_GHz";
  out.points.resize(powers.size());

  parallel_for(powers.size(), cfg.threads, [&](std::size_t i) {
    SweepPoint& pt = out.points[i];
    pt.param = powers[i];
    try {
      const DriveField d = long_pulse(cfg.rabi_per_sqrt_power * std::sqrt(powers[i]), cfg);
      const Trajectory tr = evolve(model, d, DensityMatrix::ground(), {0.0, cfg.long_span_ps}, cfg.integrator);
      pt.trace = detect(tr, cfg.detection);
      std::tie(pt.window_start_ps, pt.window_end_ps) = detail::driven_window(model, d, cfg);
      const BeatFitResult fit = fit_driven(model, pt.trace.window(pt.window_start_ps, pt.window_end_ps));
      pt.value_ghz = units::angular_to_ghz(fit.omega_rad_per_ps);
      pt.stderr_ghz = units::angular_to_ghz(fit.omega_stderr);
      pt.converged = fit.converged;
      pt.fit = fit;
    } catch (const Error& e) {
      pt.error = e.what();
      pt.converged = false;
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Simulation quartet

struct Fig4Panel {
  std::string label;
  EmitterModel model;
  DriveField drive;
  IntensityTrace trace;
  double window_start_ps = 0.0;
  double window_end_ps = 0.0;
  std::optional<BeatFitResult> fit;
  std::string fit_error;
};

struct Fig4Result {
  std::array<Fig4Panel, 4> panels;  // (a) TLS pi, (b) V pi, (c) TLS long, (d) V long
};

/// Simulation panels carry no detector blur.
inline ExperimentConfig fig4_config() {
  ExperimentConfig cfg;
  cfg.detection.irf_fwhm_ps = 0.0;
  return cfg;
}

/// The four master-equation transients: 100-ps pi pulses and 2-ns drives on a
/// two-level (trion) and a V-type (neutral exciton) emitter.
inline Fig4Result reproduce_fig4(const EmitterModel& tls, const EmitterModel& vsys, double rabi_rad_per_ps,
                                 const ExperimentConfig& cfg = fig4_config()) {
  require_valid(tls);
  require_valid(vsys);
  Fig4Result out;
  const char* labels[4] = {"a", "b", "c", "d"};
  parallel_for(4, cfg.threads, [&](std::size_t i) {
    Fig4Panel& p = out.panels[i];
    p.label = labels[i];
    p.model = (i % 2 == 0) ? tls : vsys;
    const bool pi = i < 2;
    double span = 0.0;
    if (pi) {
      p.drive = detail::pi_drive(p.model, cfg);
      span = cfg.pi_span_ps;
      std::tie(p.window_start_ps, p.window_end_ps) = detail::free_decay_window(p.drive, cfg);
    } else {
      const double peak = rabi_rad_per_ps / std::cos(cfg.exc_angle_rad - p.model.dipole_angles_rad[0]);
      p.drive = long_pulse(peak, cfg);
      span = cfg.long_span_ps;
      std::tie(p.window_start_ps, p.window_end_ps) = detail::driven_window(p.model, p.drive, cfg);
    }
    const Trajectory tr = evolve(p.model, p.drive, DensityMatrix::ground(), {0.0, span}, cfg.integrator);
    p.trace = detect(tr, cfg.detection);
    const IntensityTrace w = p.trace.window(p.window_start_ps, p.window_end_ps);
    try {
      if (pi)
        p.fit = fit_fss_beat(w);
      else
        p.fit = fit_driven(p.model, w);
    } catch (const Error& e) {
      p.fit_error = e.what();
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Regression helpers

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

inline LinearFit linear_regression(const std::vector<double>& x, const std::vector<double>& y) {
  const auto n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
    syy += y[i] * y[i];
  }
  LinearFit f;
  const double den = n * sxx - sx * sx;
  f.slope = (n * sxy - sx * sy) / den;
  f.intercept = (sy - f.slope * sx) / n;
  const double ss_tot = syy - sy * sy / n;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (f.slope * x[i] + f.intercept);
    ss_res += r * r;
  }
  f.r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
  return f;
}

/// Phenomenological field dependence of the splitting, sqrt(d0^2 + (k B)^2).
inline double fss_from_field(double fss0_ueV, double kappa_ueV_per_T, double field_T) {
  return std::hypot(fss0_ueV, kappa_ueV_per_T * field_T);
}

}  // namespace vbeat
