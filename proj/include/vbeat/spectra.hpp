#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "vbeat/core.hpp"
#include "vbeat/detection.hpp"
#include "vbeat/dynamics.hpp"

namespace vbeat {

enum class SpectrumKind { DetuningScan, EmissionSpectrum };

struct Spectrum {
  SpectrumKind kind = SpectrumKind::DetuningScan;
  std::vector<double> axis;
  std::vector<double> values;
  std::string axis_unit;

  // Emission spectra only. Powers are in excited-population units; the
  // continuous part integrates (over rad/ps) to incoherent_power.
  double coherent_power = 0.0;
  double incoherent_power = 0.0;
  double steady_state_intensity = 0.0;
  bool used_fallback = false;
};

inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
  if (n < 2 || !(hi > lo)) throw Error(ErrorKind::InvalidArgument, "linspace needs n >= 2 and hi > lo");
  std::vector<double> v(n);
  for (std::size_t k = 0; k < n; ++k) v[k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(n - 1);
  return v;
}

/// Steady-state total excited population versus laser detuning.
inline Spectrum detuning_spectrum(const EmitterModel& model, const DriveField& drive_template, double min_ueV,
                                  double max_ueV, std::size_t n_points) {
  if (!drive_template.is_cw()) throw Error(ErrorKind::InvalidArgument, "detuning_spectrum requires a CW drive");
  Spectrum s;
  s.kind = SpectrumKind::DetuningScan;
  s.axis_unit = "ueV";
  s.axis = linspace(min_ueV, max_ueV, n_points);
  s.values.reserve(n_points);
  for (double det : s.axis) {
    DriveField d = drive_template;
    d.detuning_ueV = det;
    s.values.push_back(total_intensity(steady_state(model, d)));
  }
  return s;
}

namespace detail {

/// vec(rho) for the leading dim x dim block, column stacked.
inline Eigen::VectorXcd vectorize(const Mat3& m, int dim) {
  Eigen::VectorXcd v(dim * dim);
  for (int c = 0; c < dim; ++c)
    for (int r = 0; r < dim; ++r) v(c * dim + r) = m(r, c);
  return v;
}

/// Row vector b with b . vec(M) = Tr(A M).
inline Eigen::RowVectorXcd trace_functional(const Mat3& a, int dim) {
  Eigen::RowVectorXcd b(dim * dim);
  for (int c = 0; c < dim; ++c)
    for (int r = 0; r < dim; ++r) b(c * dim + r) = a(c, r);
  return b;
}

/// Residue expansion g(tau) = sum_k weights_k exp(rates_k tau) of the
/// stationary correlation <E-(0) E+(tau)>.
struct CorrelationModes {
  std::vector<cplx> rates;
  std::vector<cplx> weights;
  cplx coherent = 0.0;
};

inline CorrelationModes correlation_modes(const Liouvillian& gen, const Eigen::VectorXcd& x0,
                                          const Eigen::RowVectorXcd& b, double scale) {
  Eigen::ComplexEigenSolver<Liouvillian> es(gen);
  if (es.info() != Eigen::Success)
    throw Error(ErrorKind::NonDiagonalizableGenerator, "eigendecomposition failed");
  const Liouvillian& v = es.eigenvectors();
  Eigen::FullPivLU<Liouvillian> lu(v);
  const double rcond = lu.rcond();
  if (!lu.isInvertible() || rcond < 1e-10)
    throw Error(ErrorKind::NonDiagonalizableGenerator, "eigenvector matrix is ill-conditioned");
  const Eigen::VectorXcd left = (b * v).transpose();
  const Eigen::VectorXcd right = lu.solve(x0);

  CorrelationModes out;
  const Eigen::Index n = gen.rows();
  std::vector<bool> used(n, false);
  for (Eigen::Index k = 0; k < n; ++k) {
    if (used[k]) continue;
    const cplx lam = es.eigenvalues()(k);
    cplx w = left(k) * right(k);
    cplx lam_sum = lam;
    int count = 1;
    for (Eigen::Index j = k + 1; j < n; ++j) {
      if (!used[j] && std::abs(es.eigenvalues()(j) - lam) < 1e-9 * std::max(scale, 1.0)) {
        used[j] = true;
        w += left(j) * right(j);
        lam_sum += es.eigenvalues()(j);
        ++count;
      }
    }
    const cplx lam_c = lam_sum / static_cast<double>(count);
    if (std::abs(lam_c) < 1e-10 * std::max(scale, 1e-12)) {
      out.coherent += w;
      continue;
    }
    if (lam_c.real() > 1e-10)
      throw Error(ErrorKind::NonDiagonalizableGenerator, "generator has a growing mode");
    out.rates.push_back(lam_c);
    out.weights.push_back(w);
  }
  return out;
}

}  // namespace detail

/// Projection operator E+ for a detection angle; nullopt means the two
/// orthogonal channels are detected and summed incoherently.
struct EmissionOptions {
  std::optional<double> pol_angle_rad = -std::numbers::pi / 4;
  bool force_fallback = false;
};

namespace detail {

inline std::vector<Mat3> emission_channels(const EmitterModel& model, const EmissionOptions& opt) {
  Mat3 s1 = Mat3::Zero(), s2 = Mat3::Zero();
  s1(kG, kE1) = 1.0;
  s2(kG, kE2) = 1.0;
  if (opt.pol_angle_rad) {
    const double th = *opt.pol_angle_rad;
    const double a1 = std::cos(th - model.dipole_angles_rad[0]);
    const double a2 = std::cos(th - model.dipole_angles_rad[1]);
    return {a1 * s1 + a2 * s2};
  }
  return {s1, s2};
}

/// Incoherent part of the spectrum by direct propagation of the correlation
/// function and trapezoidal Fourier integration.
inline std::vector<double> spectrum_by_integration(const Liouvillian& gen, const Eigen::VectorXcd& x0,
                                                   const Eigen::RowVectorXcd& b, cplx coherent,
                                                   const std::vector<double>& omegas) {
  Eigen::ComplexEigenSolver<Liouvillian> es(gen, false);
  double slowest = std::numeric_limits<double>::infinity();
  double fastest = 0.0;
  for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k) {
    const cplx l = es.eigenvalues()(k);
    fastest = std::max(fastest, std::abs(l));
    if (std::abs(l) > 1e-10 * std::max(1.0, fastest) && -l.real() > 1e-14) slowest = std::min(slowest, -l.real());
  }
  double w_max = 0.0;
  for (double w : omegas) w_max = std::max(w_max, std::abs(w));
  const double dtau = 0.02 / std::max(fastest + w_max, 1e-12);
  const double tau_max = 40.0 / slowest;
  const auto n_tau = static_cast<std::size_t>(std::ceil(tau_max / dtau));

  const Liouvillian step = (gen * dtau).exp();
  std::vector<cplx> g(n_tau + 1);
  Eigen::VectorXcd x = x0;
  for (std::size_t k = 0; k <= n_tau; ++k) {
    g[k] = (b * x)(0) - coherent;
    x = step * x;
  }
  std::vector<double> out(omegas.size());
  for (std::size_t i = 0; i < omegas.size(); ++i) {
    const cplx rot = std::exp(cplx(0.0, omegas[i] * dtau));
    cplx phase = 1.0, acc = 0.0;
    for (std::size_t k = 0; k <= n_tau; ++k) {
      const double wgt = (k == 0 || k == n_tau) ? 0.5 : 1.0;
      acc += wgt * phase * g[k];
      phase *= rot;
    }
    out[i] = (acc * dtau).real() / std::numbers::pi;
  }
  return out;
}

}  // namespace detail

/// Resonance-fluorescence spectrum S(w) = (1/pi) Re int_0^inf e^{i w tau}
/// <E-(0) E+(tau)>_ss dtau with the elastic (coherent) line removed. The axis
/// is the offset from the laser in GHz; positive means above the laser.
inline Spectrum emission_spectrum(const EmitterModel& model, const DriveField& drive, double min_ghz,
                                  double max_ghz, std::size_t n_points, const EmissionOptions& opt = {}) {
  const DensityMatrix rho_ss = steady_state(model, drive);
  const int n = active_dimension(model);
  const Liouvillian gen = liouvillian(model, hamiltonian_at(model, drive, 0.0), n);
  const double scale = gen.cwiseAbs().maxCoeff();

  Spectrum s;
  s.kind = SpectrumKind::EmissionSpectrum;
  s.axis_unit = "GHz";
  s.axis = linspace(min_ghz, max_ghz, n_points);
  s.values.assign(n_points, 0.0);

  std::vector<double> omegas(n_points);
  for (std::size_t k = 0; k < n_points; ++k) omegas[k] = units::ghz_to_angular(s.axis[k]);

  for (const Mat3& e_plus : detail::emission_channels(model, opt)) {
    const Mat3 e_minus = e_plus.adjoint();
    s.steady_state_intensity += (e_minus * e_plus * rho_ss.matrix()).trace().real();
    // <E-(0) E+(tau)> = Tr[E+ e^{L tau}(rho E-)]
    const Eigen::VectorXcd x0 = detail::vectorize(rho_ss.matrix() * e_minus, n);
    const Eigen::RowVectorXcd b = detail::trace_functional(e_plus, n);

    bool fallback = opt.force_fallback;
    detail::CorrelationModes modes;
    if (!fallback) {
      try {
        modes = detail::correlation_modes(gen, x0, b, scale);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::NonDiagonalizableGenerator) throw;
        fallback = true;
      }
    }
    if (fallback) {
      s.used_fallback = true;
      const cplx coh = (b * detail::vectorize(rho_ss.matrix(), n))(0);  // <E+>
      const cplx coh_dn = (detail::trace_functional(e_minus, n) * detail::vectorize(rho_ss.matrix(), n))(0);
      const cplx coherent = coh * coh_dn;
      s.coherent_power += coherent.real();
      s.incoherent_power += ((b * x0)(0) - coherent).real();
      const auto vals = detail::spectrum_by_integration(gen, x0, b, coherent, omegas);
      for (std::size_t k = 0; k < n_points; ++k) s.values[k] += vals[k];
      continue;
    }
    s.coherent_power += modes.coherent.real();
    for (std::size_t m = 0; m < modes.rates.size(); ++m) s.incoherent_power += modes.weights[m].real();
    for (std::size_t k = 0; k < n_points; ++k) {
      cplx acc = 0.0;
      for (std::size_t m = 0; m < modes.rates.size(); ++m)
        acc += -modes.weights[m] / (modes.rates[m] + cplx(0.0, omegas[k]));
      s.values[k] += acc.real() / std::numbers::pi;
    }
  }
  return s;
}

/// Indices of strict local maxima whose value exceeds `rel_threshold` times
/// the global maximum.
inline std::vector<std::size_t> local_maxima(const std::vector<double>& v, double rel_threshold = 1e-3) {
  std::vector<std::size_t> idx;
  if (v.size() < 3) return idx;
  double top = 0.0;
  for (double x : v) top = std::max(top, x);
  for (std::size_t k = 1; k + 1 < v.size(); ++k)
    if (v[k] > v[k - 1] && v[k] >= v[k + 1] && v[k] > rel_threshold * top) idx.push_back(k);
  return idx;
}

}  // namespace vbeat
