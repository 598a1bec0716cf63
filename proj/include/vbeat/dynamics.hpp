#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

#include "vbeat/core.hpp"

namespace vbeat {

using Liouvillian = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic>;

struct IntegratorConfig {
  double rel_tol = 1e-9;
  double abs_tol = 1e-11;
  double dt_out_ps = 2.0;
  double max_step_ps = 50.0;
  double min_step_ps = 1e-6;
};

struct TimeSpan {
  double start_ps = 0.0;
  double end_ps = 0.0;
};

/// rho(t) sampled on a uniform grid.
struct Trajectory {
  std::vector<double> times_ps;
  std::vector<DensityMatrix> states;
  EmitterModel model;
  DriveField drive;

  std::size_t size() const { return times_ps.size(); }
  double dt_ps() const { return times_ps.size() > 1 ? times_ps[1] - times_ps[0] : 0.0; }
};

// ---------------------------------------------------------------------------
// Generator

/// Rotating-frame Hamiltonian (units of rad/ps). Both transitions share the
/// laser frame; e2 carries a static offset of delta0 on top of the e1 detuning.
inline Mat3 hamiltonian_at(const EmitterModel& model, const DriveField& drive, double t) {
  if (!std::isfinite(t)) throw Error(ErrorKind::InvalidArgument, "hamiltonian_at: non-finite time");
  const double delta = -units::energy_to_angular(drive.detuning_ueV);
  Mat3 h = Mat3::Zero();
  h(kE1, kE1) = delta;
  if (!model.is_two_level()) h(kE2, kE2) = delta + model.fss_rad_per_ps();

  const double w1 = drive.rabi_on(model.dipole_angles_rad[0], t);
  h(kG, kE1) = h(kE1, kG) = 0.5 * w1;
  if (!model.is_two_level()) {
    const double w2 = drive.rabi_on(model.dipole_angles_rad[1], t);
    h(kG, kE2) = h(kE2, kG) = 0.5 * w2;
  }
  return h;
}

namespace detail {

struct JumpOp {
  Mat3 op;  // includes sqrt(rate)
};

inline std::vector<JumpOp> jump_operators(const EmitterModel& m) {
  std::vector<JumpOp> ops;
  const int n_excited = m.is_two_level() ? 1 : 2;
  const double gammas[2] = {m.gamma1_per_ps, m.gamma2_per_ps};
  for (int i = 0; i < n_excited; ++i) {
    const int e = kE1 + i;
    if (gammas[i] > 0) {
      Mat3 s = Mat3::Zero();
      s(kG, e) = std::sqrt(gammas[i]);
      ops.push_back({s});
    }
    if (m.dephasing_per_ps > 0) {
      Mat3 p = Mat3::Zero();
      p(e, e) = std::sqrt(2.0 * m.dephasing_per_ps);
      ops.push_back({p});
    }
  }
  return ops;
}

}  // namespace detail

/// d(rho)/dt = -i[H, rho] + sum_k D[L_k] rho.
inline Mat3 lindblad_rhs(const EmitterModel& model, const Mat3& rho, const Mat3& h) {
  const cplx i(0.0, 1.0);
  Mat3 out = -i * (h * rho - rho * h);
  for (const auto& [l] : detail::jump_operators(model)) {
    const Mat3 ld = l.adjoint();
    const Mat3 ldl = ld * l;
    out += l * rho * ld - 0.5 * (ldl * rho + rho * ldl);
  }
  return out;
}

inline Mat3 lindblad_rhs(const EmitterModel& model, const DensityMatrix& rho, const Mat3& h) {
  return lindblad_rhs(model, rho.matrix(), h);
}

/// Column-stacked superoperator of the generator restricted to the first
/// `dim` levels (2 drops the decoupled e2 level).
inline Liouvillian liouvillian(const EmitterModel& model, const Mat3& h3, int dim = 3) {
  const int n = dim;
  const Liouvillian h = h3.topLeftCorner(n, n);
  const Liouvillian id = Liouvillian::Identity(n, n);
  const cplx i(0.0, 1.0);
  auto kron = [](const Liouvillian& a, const Liouvillian& b) {
    Liouvillian k(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index r = 0; r < a.rows(); ++r)
      for (Eigen::Index c = 0; c < a.cols(); ++c)
        k.block(r * b.rows(), c * b.cols(), b.rows(), b.cols()) = a(r, c) * b;
    return k;
  };
  // vec(A X B) = (B^T kron A) vec(X)
  Liouvillian gen = -i * (kron(id, h) - kron(h.transpose(), id));
  for (const auto& [l3] : detail::jump_operators(model)) {
    const Liouvillian l = l3.topLeftCorner(n, n);
    if (l.cwiseAbs().maxCoeff() == 0.0) continue;
    const Liouvillian ldl = l.adjoint() * l;
    gen += kron(l.conjugate(), l) - 0.5 * kron(id, ldl) - 0.5 * kron(ldl.transpose(), id);
  }
  return gen;
}

/// Number of levels that participate in the dynamics.
inline int active_dimension(const EmitterModel& m) { return m.is_two_level() ? 2 : 3; }

// ---------------------------------------------------------------------------
// Time evolution

namespace detail {

// Dormand-Prince 5(4) tableau.
struct Dopri5 {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                          a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                          b6 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                          e6 = 22.0 / 525, e7 = -1.0 / 40;
};

class Stepper {
 public:
  Stepper(const EmitterModel& model, const DriveField& drive, const IntegratorConfig& cfg)
      : model_(model), drive_(drive), cfg_(cfg) {}

  Mat3 rhs(double t, const Mat3& y) const { return lindblad_rhs(model_, y, hamiltonian_at(model_, drive_, t)); }

  /// Advances y from t to t_end with adaptive steps; `h` carries the step
  /// size suggestion between calls.
  void advance(double& t, Mat3& y, double t_end, double& h) {
    using T = Dopri5;
    if (!have_k1_ || t != t_k1_) {
      k1_ = rhs(t, y);
      t_k1_ = t;
      have_k1_ = true;
    }
    while (t < t_end) {
      h = std::min(h, cfg_.max_step_ps);
      const bool last = (t + h >= t_end);
      const double h_free = h;
      if (last) h = t_end - t;
      const Mat3 k2 = rhs(t + T::c2 * h, y + h * (T::a21 * k1_));
      const Mat3 k3 = rhs(t + T::c3 * h, y + h * (T::a31 * k1_ + T::a32 * k2));
      const Mat3 k4 = rhs(t + T::c4 * h, y + h * (T::a41 * k1_ + T::a42 * k2 + T::a43 * k3));
      const Mat3 k5 = rhs(t + T::c5 * h, y + h * (T::a51 * k1_ + T::a52 * k2 + T::a53 * k3 + T::a54 * k4));
      const Mat3 k6 =
          rhs(t + h, y + h * (T::a61 * k1_ + T::a62 * k2 + T::a63 * k3 + T::a64 * k4 + T::a65 * k5));
      const Mat3 y_new = y + h * (T::b1 * k1_ + T::b3 * k3 + T::b4 * k4 + T::b5 * k5 + T::b6 * k6);
      const double t_new = last ? t_end : t + h;
      const Mat3 k7 = rhs(t_new, y_new);
      const Mat3 err =
          h * (T::e1 * k1_ + T::e3 * k3 + T::e4 * k4 + T::e5 * k5 + T::e6 * k6 + T::e7 * k7);

      double acc = 0.0;
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) {
          const double scale =
              cfg_.abs_tol + cfg_.rel_tol * std::max(std::abs(y(r, c)), std::abs(y_new(r, c)));
          acc += std::norm(err(r, c)) / (scale * scale);
        }
      const double err_norm = std::sqrt(acc / 9.0);

      if (err_norm <= 1.0) {
        t = t_new;
        y = y_new;
        k1_ = k7;
        t_k1_ = t;
        const double fac = err_norm == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err_norm, -0.2), 0.2, 5.0);
        // A step shortened to land on t_end keeps the unclipped suggestion.
        h = last ? std::max(h_free, h * fac) : h * fac;
      } else {
        h *= std::max(0.2, 0.9 * std::pow(err_norm, -0.2));
        if (h < cfg_.min_step_ps)
          throw Error(ErrorKind::StepFailure, "adaptive step fell below " + std::to_string(cfg_.min_step_ps) +
                                                  " ps at t=" + std::to_string(t) + " ps");
      }
    }
  }

 private:
  const EmitterModel& model_;
  const DriveField& drive_;
  IntegratorConfig cfg_;
  Mat3 k1_;
  double t_k1_ = 0.0;
  bool have_k1_ = false;
};

}  // namespace detail

/// Integrates the master equation and samples rho on
/// t_start + k * dt_out, k = 0..floor((t_end - t_start) / dt_out).
inline Trajectory evolve(const EmitterModel& model, const DriveField& drive, const DensityMatrix& rho0,
                         TimeSpan span, const IntegratorConfig& cfg = {}) {
  require_valid(model);
  require_valid(drive);
  if (!(cfg.rel_tol > 0) || !(cfg.abs_tol > 0) || !(cfg.dt_out_ps > 0) || !(cfg.max_step_ps > 0))
    throw Error(ErrorKind::InvalidArgument, "integrator tolerances and steps must be > 0");
  if (!(span.end_ps >= span.start_ps) || !std::isfinite(span.start_ps) || !std::isfinite(span.end_ps))
    throw Error(ErrorKind::InvalidArgument, "time span must be finite and non-empty");
  if (model.is_two_level() &&
      (rho0.matrix().row(kE2).cwiseAbs().maxCoeff() > 0 || rho0.matrix().col(kE2).cwiseAbs().maxCoeff() > 0))
    throw Error(ErrorKind::InvalidArgument, "TwoLevel initial state must leave e2 empty");

  const auto n_out = static_cast<std::size_t>(std::floor((span.end_ps - span.start_ps) / cfg.dt_out_ps + 1e-9)) + 1;

  Trajectory traj;
  traj.model = model;
  traj.drive = drive;
  traj.times_ps.reserve(n_out);
  traj.states.reserve(n_out);

  std::vector<double> breaks = drive.breakpoints();
  std::sort(breaks.begin(), breaks.end());

  detail::Stepper stepper(model, drive, cfg);
  Mat3 y = rho0.matrix();
  double t = span.start_ps;
  double h = std::min(cfg.max_step_ps, cfg.dt_out_ps);
  traj.times_ps.push_back(t);
  traj.states.push_back(rho0.hermitized());

  for (std::size_t k = 1; k < n_out; ++k) {
    const double target = span.start_ps + static_cast<double>(k) * cfg.dt_out_ps;
    for (double b : breaks)
      if (b > t && b < target) stepper.advance(t, y, b, h);
    stepper.advance(t, y, target, h);
    t = target;
    traj.times_ps.push_back(target);
    traj.states.push_back(DensityMatrix(y).hermitized());
  }
  return traj;
}

// ---------------------------------------------------------------------------
// Steady state

/// Unique stationary state of a CW-driven emitter.
inline DensityMatrix steady_state(const EmitterModel& model, const DriveField& drive) {
  require_valid(model);
  require_valid(drive);
  if (!drive.is_cw()) throw Error(ErrorKind::InvalidArgument, "steady_state requires a CW drive");

  const int n = active_dimension(model);
  const Liouvillian gen = liouvillian(model, hamiltonian_at(model, drive, 0.0), n);

  Eigen::JacobiSVD<Liouvillian> svd(gen);
  const auto& sv = svd.singularValues();  // descending
  const double scale = std::max(sv(0), 1e-300);
  const Eigen::Index nn = sv.size();
  if (sv(nn - 2) < 1e-9 * scale)
    throw Error(ErrorKind::DegenerateSteadyState, "generator null space has dimension > 1");

  // Replace one equation by the trace condition and solve.
  Liouvillian a = gen;
  Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(n * n);
  for (int j = 0; j < n * n; ++j) a(0, j) = 0.0;
  for (int d = 0; d < n; ++d) a(0, d * n + d) = 1.0;
  rhs(0) = 1.0;
  const Eigen::VectorXcd v = a.fullPivLu().solve(rhs);

  Mat3 rho = Mat3::Zero();
  for (int c = 0; c < n; ++c)
    for (int r = 0; r < n; ++r) rho(r, c) = v(c * n + r);
  return DensityMatrix(rho).hermitized();
}

}  // namespace vbeat
