#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "vbeat/units.hpp"

namespace vbeat {

using cplx = std::complex<double>;
using Mat3 = Eigen::Matrix3cd;

enum class ErrorKind {
  InvalidModel,
  InvalidArgument,
  StepFailure,
  DegenerateSteadyState,
  NonDiagonalizableGenerator,
  GridTooCoarse,
  TraceTooShort,
  AmbiguousSeed,
  DegenerateOmega,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::InvalidModel: return "InvalidModel";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::StepFailure: return "StepFailure";
    case ErrorKind::DegenerateSteadyState: return "DegenerateSteadyState";
    case ErrorKind::NonDiagonalizableGenerator: return "NonDiagonalizableGenerator";
    case ErrorKind::GridTooCoarse: return "GridTooCoarse";
    case ErrorKind::TraceTooShort: return "TraceTooShort";
    case ErrorKind::AmbiguousSeed: return "AmbiguousSeed";
    case ErrorKind::DegenerateOmega: return "DegenerateOmega";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Basis ordering of every 3x3 operator in the library.
enum Level : int { kG = 0, kE1 = 1, kE2 = 2 };

// ---------------------------------------------------------------------------
// Emitter

enum class EmitterKind { TwoLevel, VSystem };

/// Level structure and incoherent rates of a quantum emitter with one ground
/// state and one (trion) or two (neutral exciton) excited states.
struct EmitterModel {
  EmitterKind kind = EmitterKind::VSystem;
  double fss_ueV = 0.0;
  double gamma1_per_ps = 1e-3;
  double gamma2_per_ps = 1e-3;
  double dephasing_per_ps = 0.0;
  /// H and V dipoles.
  std::array<double, 2> dipole_angles_rad{0.0, std::numbers::pi / 2};

  static EmitterModel two_level(double gamma_per_ps, double dephasing_per_ps = 0.0) {
    EmitterModel m;
    m.kind = EmitterKind::TwoLevel;
    m.fss_ueV = 0.0;
    m.gamma1_per_ps = gamma_per_ps;
    m.gamma2_per_ps = 0.0;
    m.dephasing_per_ps = dephasing_per_ps;
    return m;
  }

  static EmitterModel v_system(double fss_ueV, double gamma_per_ps, double dephasing_per_ps = 0.0) {
    EmitterModel m;
    m.kind = EmitterKind::VSystem;
    m.fss_ueV = fss_ueV;
    m.gamma1_per_ps = gamma_per_ps;
    m.gamma2_per_ps = gamma_per_ps;
    m.dephasing_per_ps = dephasing_per_ps;
    return m;
  }

  bool is_two_level() const { return kind == EmitterKind::TwoLevel; }
  double fss_rad_per_ps() const { return units::energy_to_angular(fss_ueV); }
};

struct ValidationReport {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
  explicit operator bool() const { return ok(); }
};

inline ValidationReport validate(const EmitterModel& m) {
  ValidationReport r;
  auto finite = [](double v) { return std::isfinite(v); };
  if (!finite(m.fss_ueV) || m.fss_ueV < 0) r.violations.emplace_back("fss_ueV >= 0");
  if (!finite(m.gamma1_per_ps) || m.gamma1_per_ps < 0) r.violations.emplace_back("gamma1_per_ps >= 0");
  if (!finite(m.gamma2_per_ps) || m.gamma2_per_ps < 0) r.violations.emplace_back("gamma2_per_ps >= 0");
  if (!finite(m.dephasing_per_ps) || m.dephasing_per_ps < 0)
    r.violations.emplace_back("dephasing_per_ps >= 0");
  if (m.kind == EmitterKind::TwoLevel && m.fss_ueV != 0.0)
    r.violations.emplace_back("TwoLevel requires fss_ueV == 0");
  const double sep = std::abs(m.dipole_angles_rad[1] - m.dipole_angles_rad[0]);
  if (std::abs(sep - std::numbers::pi / 2) > 1e-12) r.violations.emplace_back("dipole angles must differ by pi/2");
  return r;
}

inline void require_valid(const EmitterModel& m) {
  const auto r = validate(m);
  if (r.ok()) return;
  std::string msg = "emitter model violates:";
  for (const auto& v : r.violations) msg += " [" + v + "]";
  throw Error(ErrorKind::InvalidModel, msg);
}

// ---------------------------------------------------------------------------
// Drive

struct Cw {};
struct SquarePulse {
  double duration_ps = 2000.0;
};
struct GaussianPulse {
  double fwhm_ps = 100.0;
};
using Envelope = std::variant<Cw, SquarePulse, GaussianPulse>;

/// Width of the cosine edge ramps applied to square pulses; centred on the
/// nominal edges so the pulse area stays peak * duration.
inline constexpr double kSquareRampPs = 1.0;

struct DriveField {
  Envelope envelope = Cw{};
  double peak_rabi_rad_per_ps = 0.0;
  double detuning_ueV = 0.0;
  double pol_angle_rad = std::numbers::pi / 4;
  /// Gaussian centre or square start.
  double t0_ps = 0.0;

  bool is_cw() const { return std::holds_alternative<Cw>(envelope); }

  /// f(t) in [0, 1].
  double envelope_at(double t) const {
    return std::visit(
        [&](const auto& e) -> double {
          using E = std::decay_t<decltype(e)>;
          if constexpr (std::is_same_v<E, Cw>) {
            return 1.0;
          } else if constexpr (std::is_same_v<E, GaussianPulse>) {
            const double sigma = e.fwhm_ps / units::kFwhmPerSigma;
            const double x = (t - t0_ps) / sigma;
            return std::exp(-0.5 * x * x);
          } else {
            const double half = 0.5 * kSquareRampPs;
            const double start = t0_ps;
            const double stop = t0_ps + e.duration_ps;
            auto ramp = [&](double x) {  // 0 at x=-half, 1 at x=+half
              if (x <= -half) return 0.0;
              if (x >= half) return 1.0;
              return 0.5 * (1.0 - std::cos(std::numbers::pi * (x + half) / kSquareRampPs));
            };
            return std::min(ramp(t - start), ramp(stop - t));
          }
        },
        envelope);
  }

  /// Channel Rabi rate Omega_i(t) for a dipole at `dipole_angle`.
  double rabi_on(double dipole_angle, double t) const {
    return peak_rabi_rad_per_ps * envelope_at(t) * std::cos(pol_angle_rad - dipole_angle);
  }

  /// Times where the envelope changes character; integration is split there.
  std::vector<double> breakpoints() const {
    if (const auto* sq = std::get_if<SquarePulse>(&envelope)) {
      const double h = 0.5 * kSquareRampPs;
      return {t0_ps - h, t0_ps + h, t0_ps + sq->duration_ps - h, t0_ps + sq->duration_ps + h};
    }
    if (const auto* g = std::get_if<GaussianPulse>(&envelope)) return {t0_ps - 4 * g->fwhm_ps, t0_ps, t0_ps + 4 * g->fwhm_ps};
    return {};
  }

  /// End of the pulse (centre + fwhm for Gaussian); +inf for CW.
  double pulse_end_ps() const {
    if (const auto* sq = std::get_if<SquarePulse>(&envelope)) return t0_ps + sq->duration_ps;
    if (const auto* g = std::get_if<GaussianPulse>(&envelope)) return t0_ps + g->fwhm_ps;
    return std::numeric_limits<double>::infinity();
  }

  /// Duration (square) or FWHM (Gaussian); 0 for CW.
  double envelope_width_ps() const {
    if (const auto* sq = std::get_if<SquarePulse>(&envelope)) return sq->duration_ps;
    if (const auto* g = std::get_if<GaussianPulse>(&envelope)) return g->fwhm_ps;
    return 0.0;
  }
};

inline void require_valid(const DriveField& d) {
  if (!std::isfinite(d.peak_rabi_rad_per_ps) || d.peak_rabi_rad_per_ps < 0)
    throw Error(ErrorKind::InvalidArgument, "drive.peak_rabi_rad_per_ps must be >= 0");
  if (!std::isfinite(d.detuning_ueV) || !std::isfinite(d.pol_angle_rad) || !std::isfinite(d.t0_ps))
    throw Error(ErrorKind::InvalidArgument, "drive fields must be finite");
  if (const auto* sq = std::get_if<SquarePulse>(&d.envelope); sq && !(sq->duration_ps > 0))
    throw Error(ErrorKind::InvalidArgument, "drive.duration_ps must be > 0");
  if (const auto* g = std::get_if<GaussianPulse>(&d.envelope); g && !(g->fwhm_ps > 0))
    throw Error(ErrorKind::InvalidArgument, "drive.fwhm_ps must be > 0");
}

// ---------------------------------------------------------------------------
// Density matrix

/// 3x3 state over {g, e1, e2}.
class DensityMatrix {
 public:
  DensityMatrix() : m_(Mat3::Zero()) { m_(kG, kG) = 1.0; }
  explicit DensityMatrix(const Mat3& m) : m_(m) {}

  static DensityMatrix ground() { return DensityMatrix{}; }

  static DensityMatrix pure(const Eigen::Vector3cd& psi) {
    const Eigen::Vector3cd n = psi.normalized();
    return DensityMatrix(n * n.adjoint());
  }

  const Mat3& matrix() const { return m_; }
  cplx operator()(int i, int j) const { return m_(i, j); }

  double population(int i) const { return m_(i, i).real(); }
  double trace() const { return m_.trace().real(); }
  double purity() const { return (m_ * m_).trace().real(); }

  double hermiticity_error() const { return (m_ - m_.adjoint()).cwiseAbs().maxCoeff(); }

  double min_eigenvalue() const {
    const Mat3 h = 0.5 * (m_ + m_.adjoint());
    Eigen::SelfAdjointEigenSolver<Mat3> es(h, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
  }

  DensityMatrix hermitized() const { return DensityMatrix(0.5 * (m_ + m_.adjoint())); }

 private:
  Mat3 m_;
};

}  // namespace vbeat
