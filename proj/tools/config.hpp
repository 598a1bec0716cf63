#pragma once

// Strict JSON run configuration for the vbeat CLI. Every section is an
// object whose keys are checked against a fixed list; unknown keys are an
// error naming the dotted path.

#include "json.hpp"

#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "vbeat/vbeat.hpp"

namespace vbeat::cli {

using json = nlohmann::ordered_json;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Key-checked view of one JSON object.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + " must be an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  double number(const std::string& key, double fallback) {
    seen_.insert(key);
    if (!j_.contains(key)) return fallback;
    return as_number(key);
  }
  double number(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw ConfigError(where(key) + " required");
    return as_number(key);
  }
  std::optional<double> nullable_number(const std::string& key, std::optional<double> fallback) {
    seen_.insert(key);
    if (!j_.contains(key)) return fallback;
    if (j_.at(key).is_null()) return std::nullopt;
    return as_number(key);
  }
  bool boolean(const std::string& key, bool fallback) {
    seen_.insert(key);
    if (!j_.contains(key)) return fallback;
    if (!j_.at(key).is_boolean()) throw ConfigError(where(key) + " must be a boolean");
    return j_.at(key).get<bool>();
  }
  std::string string(const std::string& key, const std::string& fallback) {
    seen_.insert(key);
    if (!j_.contains(key)) return fallback;
    if (!j_.at(key).is_string()) throw ConfigError(where(key) + " must be a string");
    return j_.at(key).get<std::string>();
  }
  std::string string(const std::string& key) {
    if (!j_.contains(key)) throw ConfigError(where(key) + " required");
    return string(key, "");
  }
  std::vector<double> numbers(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw ConfigError(where(key) + " required");
    const json& a = j_.at(key);
    if (!a.is_array()) throw ConfigError(where(key) + " must be an array of numbers");
    std::vector<double> out;
    for (const auto& v : a) {
      if (!v.is_number()) throw ConfigError(where(key) + " must be an array of numbers");
      out.push_back(v.get<double>());
    }
    return out;
  }
  Section child(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw ConfigError(where(key) + " required");
    return Section(j_.at(key), where(key));
  }
  std::optional<Section> optional_child(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) return std::nullopt;
    return Section(j_.at(key), where(key));
  }

  /// Throws on the first key that was never read.
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown key " + where(it.key()));
  }

 private:
  double as_number(const std::string& key) const {
    const json& v = j_.at(key);
    if (!v.is_number()) throw ConfigError(where(key) + " must be a number");
    return v.get<double>();
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

// ---------------------------------------------------------------------------
// Sections

inline EmitterModel parse_emitter(Section s) {
  EmitterModel m;
  const std::string kind = s.string("kind");
  if (kind == "TwoLevel") {
    m.kind = EmitterKind::TwoLevel;
    m.fss_ueV = s.number("fss_ueV", 0.0);
    m.gamma2_per_ps = 0.0;
  } else if (kind == "VSystem") {
    m.kind = EmitterKind::VSystem;
    m.fss_ueV = s.number("fss_ueV");
  } else {
    throw ConfigError(s.where("kind") + " must be TwoLevel or VSystem");
  }
  m.gamma1_per_ps = s.number("gamma1_per_ps", m.gamma1_per_ps);
  m.gamma2_per_ps = s.number("gamma2_per_ps", m.gamma2_per_ps);
  m.dephasing_per_ps = s.number("dephasing_per_ps", m.dephasing_per_ps);
  if (s.has("dipole_angles_rad")) {
    const auto a = s.numbers("dipole_angles_rad");
    if (a.size() != 2) throw ConfigError(s.where("dipole_angles_rad") + " must have 2 entries");
    m.dipole_angles_rad = {a[0], a[1]};
  }
  s.finish();
  const ValidationReport rep = validate(m);
  if (!rep.ok()) throw ConfigError("emitter: " + rep.violations.front());
  return m;
}

inline Envelope parse_envelope(Section s) {
  const std::string type = s.string("type");
  Envelope e;
  if (type == "cw") {
    e = Cw{};
  } else if (type == "square") {
    e = SquarePulse{s.number("duration_ps")};
  } else if (type == "gaussian") {
    e = GaussianPulse{s.number("fwhm_ps")};
  } else {
    throw ConfigError(s.where("type") + " must be cw, square or gaussian");
  }
  s.finish();
  return e;
}

/// A drive section either states the peak Rabi rate or asks for a calibrated
/// pi pulse on the e1 channel (`pi_pulse: true`).
inline DriveField parse_drive(Section s, const EmitterModel& m, const IntegratorConfig& integ) {
  DriveField d;
  d.envelope = parse_envelope(s.child("envelope"));
  d.detuning_ueV = s.number("detuning_ueV", 0.0);
  d.pol_angle_rad = s.number("pol_angle_rad", d.pol_angle_rad);
  d.t0_ps = s.number("t0_ps", 0.0);
  const bool pi = s.boolean("pi_pulse", false);
  if (pi) {
    if (s.has("peak_rabi_rad_per_ps"))
      throw ConfigError(s.where("pi_pulse") + " and peak_rabi_rad_per_ps are exclusive");
    if (d.is_cw()) throw ConfigError(s.where("pi_pulse") + " needs a finite envelope");
    const PiPulseCalibration cal = pi_pulse_calibrate(m, d.envelope, integ);
    const double proj = std::cos(d.pol_angle_rad - m.dipole_angles_rad[0]);
    if (std::abs(proj) < 1e-9) throw ConfigError(s.where("pol_angle_rad") + " is orthogonal to the e1 dipole");
    d.peak_rabi_rad_per_ps = cal.peak_rabi_rad_per_ps / proj;
  } else {
    d.peak_rabi_rad_per_ps = s.number("peak_rabi_rad_per_ps");
  }
  s.finish();
  try {
    require_valid(d);
  } catch (const Error& e) {
    throw ConfigError(std::string("drive: ") + e.what());
  }
  return d;
}

inline DetectionConfig parse_detection(std::optional<Section> s) {
  DetectionConfig c;
  if (!s) return c;
  c.pol_angle_rad = s->nullable_number("pol_angle_rad", c.pol_angle_rad);
  c.irf_fwhm_ps = s->number("irf_fwhm_ps", c.irf_fwhm_ps);
  s->finish();
  if (!(c.irf_fwhm_ps >= 0)) throw ConfigError("detection.irf_fwhm_ps must be >= 0");
  return c;
}

inline IntegratorConfig parse_integrator(std::optional<Section> s) {
  IntegratorConfig c;
  if (!s) return c;
  c.rel_tol = s->number("rel_tol", c.rel_tol);
  c.abs_tol = s->number("abs_tol", c.abs_tol);
  c.dt_out_ps = s->number("dt_out_ps", c.dt_out_ps);
  c.max_step_ps = s->number("max_step_ps", c.max_step_ps);
  c.min_step_ps = s->number("min_step_ps", c.min_step_ps);
  s->finish();
  if (!(c.rel_tol > 0) || !(c.abs_tol > 0)) throw ConfigError("integrator tolerances must be > 0");
  if (!(c.dt_out_ps > 0)) throw ConfigError("integrator.dt_out_ps must be > 0");
  if (!(c.max_step_ps > 0) || !(c.min_step_ps > 0)) throw ConfigError("integrator step bounds must be > 0");
  return c;
}

// ---------------------------------------------------------------------------
// Serialization of the resolved configuration

inline json to_json(const EmitterModel& m) {
  return {{"kind", m.is_two_level() ? "TwoLevel" : "VSystem"},
          {"fss_ueV", m.fss_ueV},
          {"gamma1_per_ps", m.gamma1_per_ps},
          {"gamma2_per_ps", m.gamma2_per_ps},
          {"dephasing_per_ps", m.dephasing_per_ps},
          {"dipole_angles_rad", {m.dipole_angles_rad[0], m.dipole_angles_rad[1]}}};
}

inline json to_json(const Envelope& e) {
  if (const auto* sq = std::get_if<SquarePulse>(&e)) return {{"type", "square"}, {"duration_ps", sq->duration_ps}};
  if (const auto* g = std::get_if<GaussianPulse>(&e)) return {{"type", "gaussian"}, {"fwhm_ps", g->fwhm_ps}};
  return {{"type", "cw"}};
}

inline json to_json(const DriveField& d) {
  return {{"envelope", to_json(d.envelope)},
          {"peak_rabi_rad_per_ps", d.peak_rabi_rad_per_ps},
          {"detuning_ueV", d.detuning_ueV},
          {"pol_angle_rad", d.pol_angle_rad},
          {"t0_ps", d.t0_ps}};
}

inline json to_json(const DetectionConfig& c) {
  json j;
  j["pol_angle_rad"] = c.pol_angle_rad ? json(*c.pol_angle_rad) : json(nullptr);
  j["irf_fwhm_ps"] = c.irf_fwhm_ps;
  return j;
}

inline json to_json(const IntegratorConfig& c) {
  return {{"rel_tol", c.rel_tol},
          {"abs_tol", c.abs_tol},
          {"dt_out_ps", c.dt_out_ps},
          {"max_step_ps", c.max_step_ps},
          {"min_step_ps", c.min_step_ps}};
}

inline json to_json(const BeatFitResult& f) {
  json comps = json::array();
  for (const auto& c : f.components)
    comps.push_back({{"role", to_string(c.role)},
                     {"amplitude", c.amplitude},
                     {"omega_rad_per_ps", c.omega_rad_per_ps},
                     {"frequency_GHz", units::angular_to_ghz(c.omega_rad_per_ps)},
                     {"phase_rad", c.phase_rad}});
  json cov = json::array();
  for (Eigen::Index r = 0; r < f.covariance.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < f.covariance.cols(); ++c) row.push_back(f.covariance(r, c));
    cov.push_back(row);
  }
  json params = {{"T1_ps", f.t1_ps},
                 {"baseline_A", f.baseline},
                 {"baseline_T1_ps", f.baseline_t1_ps},
                 {"omega_rad_per_ps", f.omega_rad_per_ps},
                 {"omega_GHz", units::angular_to_ghz(f.omega_rad_per_ps)},
                 {"omega_stderr_rad_per_ps", f.omega_stderr},
                 {"T1_stderr_ps", f.t1_stderr},
                 {"components", comps}};
  if (f.kind == BeatModelKind::TripleBeat) params["delta0_rad_per_ps"] = f.delta0_rad_per_ps;
  return {{"model_kind", to_string(f.kind)},
          {"baseline_decay", f.baseline_decay == BaselineDecay::Shared ? "shared" : "independent"},
          {"params", params},
          {"covariance", {{"param_names", f.param_names}, {"t_ref_ps", f.t_ref_ps}, {"matrix", cov}}},
          {"residual_rms", f.residual_rms},
          {"converged", f.converged},
          {"iterations", f.iterations}};
}

}  // namespace vbeat::cli
