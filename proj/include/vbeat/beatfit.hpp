#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "vbeat/core.hpp"
#include "vbeat/detection.hpp"
#include "vbeat/lsq.hpp"

namespace vbeat {

// ---------------------------------------------------------------------------
// Spectral seeding

struct FftPeak {
  double omega_rad_per_ps = 0.0;
  double power = 0.0;  // a tone of amplitude a reports ~a^2/4
};

struct FftPeaks {
  std::vector<FftPeak> peaks;
  double resolution_rad_per_ps = 0.0;  // 2 pi / (N dt)
  double ac_power = 0.0;               // mean square of the flattened, mean-free trace
};

struct FftOptions {
  /// Peaks below this fraction of the strongest are dropped (Hann sidelobes
  /// sit at ~7e-4).
  double rel_power_floor = 2e-3;
  /// Traces whose flattened AC rms is below this fraction of their mean are
  /// treated as featureless.
  double min_ac_fraction = 1e-8;
  /// Traces whose largest |value| is below this (population units) are
  /// treated as empty.
  double min_signal = 1e-12;
  int zero_pad_factor = 8;
  bool flatten_decay = true;
};

struct ExpFit {
  double amplitude = 0.0;  // at t_ref
  double rate = 0.0;       // 1/ps
  double t_ref = 0.0;
  bool ok = false;
};

/// Least-squares single exponential a e^{-k (t - t_ref)}.
inline ExpFit fit_exponential(const IntensityTrace& trace) {
  ExpFit out;
  const std::size_t n = trace.size();
  if (n < 3) return out;
  out.t_ref = trace.times_ps.front();

  // Seed from the means of the first and last quarter.
  const std::size_t q = std::max<std::size_t>(n / 4, 1);
  double m0 = 0.0, m1 = 0.0, t0 = 0.0, t1 = 0.0;
  for (std::size_t k = 0; k < q; ++k) {
    m0 += trace.values[k];
    t0 += trace.times_ps[k];
    m1 += trace.values[n - 1 - k];
    t1 += trace.times_ps[n - 1 - k];
  }
  m0 /= static_cast<double>(q);
  m1 /= static_cast<double>(q);
  t0 /= static_cast<double>(q);
  t1 /= static_cast<double>(q);
  double k0 = (m0 > 0 && m1 > 0 && t1 > t0) ? std::log(m0 / m1) / (t1 - t0) : 0.0;
  double a0 = m0 * std::exp(k0 * (t0 - out.t_ref));
  if (!(a0 > 0) || !std::isfinite(a0)) return out;

  Eigen::VectorXd ys(n), ts(n);
  for (std::size_t k = 0; k < n; ++k) {
    ys(k) = trace.values[k];
    ts(k) = trace.times_ps[k] - out.t_ref;
  }
  auto model = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd& j) {
    r.resize(n);
    j.resize(n, 2);
    for (std::size_t k = 0; k < n; ++k) {
      const double e = std::exp(-p(1) * ts(k));
      r(k) = p(0) * e - ys(k);
      j(k, 0) = e;
      j(k, 1) = -ts(k) * p(0) * e;
    }
  };
  LsqOptions lo;
  lo.gradient_tol = 1e-13;
  const auto res = damped_gauss_newton(model, Eigen::Vector2d(a0, k0), ys.norm(), lo);
  out.amplitude = res.params(0);
  out.rate = res.params(1);
  out.ok = out.amplitude > 0 && std::isfinite(out.rate);
  return out;
}

/// Dominant oscillation frequencies of a decaying trace: flatten by a fitted
/// exponential, remove the mean, Hann-window, zero-pad and take the power
/// spectrum. Peaks come sorted by power, ties broken towards lower frequency.
inline FftPeaks fft_peaks(const IntensityTrace& trace, std::size_t max_peaks, const FftOptions& opt = {}) {
  const std::size_t n = trace.size();
  if (n < 64) throw Error(ErrorKind::TraceTooShort, "fft_peaks needs at least 64 samples");
  const double dt = trace.dt_ps();

  FftPeaks out;
  out.resolution_rad_per_ps = 2.0 * std::numbers::pi / (static_cast<double>(n) * dt);

  double peak_abs = 0.0;
  for (double v : trace.values) peak_abs = std::max(peak_abs, std::abs(v));
  if (peak_abs < opt.min_signal) return out;

  std::vector<double> x(trace.values);
  std::size_t negatives = 0;
  for (double v : trace.values) negatives += v < 0.0;
  // Zero-baseline (signed) traces have no meaningful envelope to divide out.
  if (opt.flatten_decay && negatives * 20 < n) {
    const ExpFit ef = fit_exponential(trace);
    if (ef.ok)
      for (std::size_t k = 0; k < n; ++k) x[k] /= ef.amplitude * std::exp(-ef.rate * (trace.times_ps[k] - ef.t_ref));
  }
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double ms = 0.0;
  for (double& v : x) {
    v -= mean;
    ms += v * v;
  }
  ms /= static_cast<double>(n);
  out.ac_power = ms;
  if (std::sqrt(ms) <= opt.min_ac_fraction * std::abs(mean) || ms == 0.0) return out;

  std::size_t m = 1;
  while (m < static_cast<std::size_t>(opt.zero_pad_factor) * n) m <<= 1;
  std::vector<double> buf(m, 0.0);
  double wsum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double w = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n - 1)));
    buf[k] = w * x[k];
    wsum += w;
  }
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, buf);

  const std::size_t half = m / 2;
  std::vector<double> power(half + 1);
  for (std::size_t k = 0; k <= half; ++k) power[k] = std::norm(spec[k]) / (wsum * wsum);

  const double bin_omega = 2.0 * std::numbers::pi / (static_cast<double>(m) * dt);
  const std::size_t k_min = std::max<std::size_t>(m / n, 1);  // one native bin above DC

  std::vector<FftPeak> cands;
  for (std::size_t k = std::max<std::size_t>(k_min, 1); k < half; ++k) {
    if (power[k] > power[k - 1] && power[k] >= power[k + 1]) {
      // Parabolic refinement on log power.
      const double a = std::log(std::max(power[k - 1], 1e-300));
      const double b = std::log(power[k]);
      const double c = std::log(std::max(power[k + 1], 1e-300));
      const double den = a - 2 * b + c;
      const double shift = den != 0.0 ? std::clamp(0.5 * (a - c) / den, -0.5, 0.5) : 0.0;
      cands.push_back({(static_cast<double>(k) + shift) * bin_omega, power[k]});
    }
  }
  if (cands.empty()) return out;
  std::sort(cands.begin(), cands.end(), [](const FftPeak& l, const FftPeak& r) {
    if (l.power != r.power) return l.power > r.power;
    return l.omega_rad_per_ps < r.omega_rad_per_ps;
  });
  const double floor = opt.rel_power_floor * cands.front().power;
  for (const auto& c : cands) {
    if (out.peaks.size() >= max_peaks || c.power < floor) break;
    out.peaks.push_back(c);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Beat models

enum class BeatModelKind { SingleBeat, TripleBeat };

inline const char* to_string(BeatModelKind k) { return k == BeatModelKind::SingleBeat ? "SingleBeat" : "TripleBeat"; }

/// Role of a component in the dressed-state triple: |Omega - delta0/2|,
/// Omega, Omega + delta0/2. Single-beat fits use Main only.
enum class BeatRole { Lower, Main, Upper };

inline const char* to_string(BeatRole r) {
  switch (r) {
    case BeatRole::Lower: return "lower";
    case BeatRole::Main: return "main";
    case BeatRole::Upper: return "upper";
  }
  return "?";
}

/// Shared: one envelope e^{-t/T1} multiplies baseline and beats.
/// Independent: the baseline carries its own e^{-t/T_A}, for driven
/// transients whose mean level does not follow the oscillation decay.
enum class BaselineDecay { Shared, Independent };

struct BeatComponent {
  BeatRole role = BeatRole::Main;
  double amplitude = 0.0;  // >= 0
  double omega_rad_per_ps = 0.0;
  double phase_rad = 0.0;  // in (-pi, pi]
};

/// I(t) = A e^{-t/T_A} + e^{-t/T1} sum_j B_j cos(w_j t + phi_j), absolute t.
/// With a shared baseline decay T_A == T1.
struct BeatFitResult {
  BeatModelKind kind = BeatModelKind::SingleBeat;
  BaselineDecay baseline_decay = BaselineDecay::Shared;
  double t1_ps = 0.0;
  double baseline = 0.0;
  double baseline_t1_ps = 0.0;
  std::vector<BeatComponent> components;  // ascending frequency

  /// Fitted free frequency: delta0 for SingleBeat, Omega for TripleBeat.
  double omega_rad_per_ps = 0.0;
  double omega_stderr = 0.0;
  double t1_stderr = 0.0;
  double delta0_rad_per_ps = 0.0;  // TripleBeat constraint

  std::vector<std::string> param_names;  // of `covariance`, referenced to t_ref
  Eigen::MatrixXd covariance;
  double t_ref_ps = 0.0;

  double residual_rms = 0.0;
  bool converged = false;
  int iterations = 0;

  const BeatComponent* component(BeatRole role) const {
    for (const auto& c : components)
      if (c.role == role) return &c;
    return nullptr;
  }

  double evaluate(double t) const {
    double s = 0.0;
    for (const auto& c : components) s += c.amplitude * std::cos(c.omega_rad_per_ps * t + c.phase_rad);
    return baseline * std::exp(-t / baseline_t1_ps) + std::exp(-t / t1_ps) * s;
  }
};

struct FitOptions {
  LsqOptions lsq;
  FftOptions fft;
  BaselineDecay baseline_decay = BaselineDecay::Shared;
  std::optional<double> omega_seed;  // overrides the FFT seed
  std::optional<double> t1_seed_ps;
};

namespace detail {

inline double wrap_phase(double p) {
  p = std::remainder(p, 2.0 * std::numbers::pi);
  if (p <= -std::numbers::pi) p += 2.0 * std::numbers::pi;
  return p;
}

/// Linear least squares for [A, Bc_j, Bs_j] of
/// A e^{-kA t'} + e^{-k t'} sum_j (Bc_j cos(w_j t') - Bs_j sin(w_j t')).
inline Eigen::VectorXd linear_amplitudes(const Eigen::VectorXd& ts, const Eigen::VectorXd& ys,
                                         const std::vector<double>& omegas, double rate, double baseline_rate,
                                         double* rss = nullptr) {
  const Eigen::Index n = ts.size();
  const auto nc = static_cast<Eigen::Index>(omegas.size());
  Eigen::MatrixXd a(n, 1 + 2 * nc);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double e = std::exp(-rate * ts(k));
    a(k, 0) = std::exp(-baseline_rate * ts(k));
    for (Eigen::Index j = 0; j < nc; ++j) {
      a(k, 1 + 2 * j) = e * std::cos(omegas[j] * ts(k));
      a(k, 2 + 2 * j) = -e * std::sin(omegas[j] * ts(k));
    }
  }
  const Eigen::VectorXd sol = a.completeOrthogonalDecomposition().solve(ys);
  if (rss) *rss = (a * sol - ys).squaredNorm();
  return sol;
}

struct Prepared {
  Eigen::VectorXd ts, ys;
  double t_ref = 0.0;
  double rate_seed = 0.0;
  double scale = 1.0;
};

inline Prepared prepare(const IntensityTrace& trace, const FitOptions& opt) {
  Prepared p;
  const std::size_t n = trace.size();
  p.t_ref = trace.times_ps.front();
  p.ts.resize(n);
  p.ys.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    p.ts(k) = trace.times_ps[k] - p.t_ref;
    p.ys(k) = trace.values[k];
  }
  p.scale = std::max(p.ys.norm(), 1e-300);
  if (opt.t1_seed_ps) {
    p.rate_seed = 1.0 / *opt.t1_seed_ps;
  } else {
    const ExpFit ef = fit_exponential(trace);
    p.rate_seed = ef.ok ? ef.rate : 0.0;
  }
  return p;
}

/// Frequencies of the components as functions of the one free frequency.
struct FrequencyMap {
  std::vector<BeatRole> roles;
  std::function<std::vector<double>(double)> omegas;
  std::function<std::vector<double>(double)> derivatives;
};

/// Parameter layout: [A, rate, Omega, B_1, phi_1, ..., B_n, phi_n, (rate_A)].
class BeatModel {
 public:
  BeatModel(const Prepared& p, FrequencyMap fm, BaselineDecay bd) : p_(p), fm_(std::move(fm)), bd_(bd) {}

  Eigen::Index n_comp() const { return static_cast<Eigen::Index>(fm_.roles.size()); }
  Eigen::Index n_params() const { return 3 + 2 * n_comp() + (bd_ == BaselineDecay::Independent ? 1 : 0); }
  Eigen::Index baseline_rate_index() const { return 3 + 2 * n_comp(); }

  double baseline_rate(const Eigen::VectorXd& x) const {
    return bd_ == BaselineDecay::Independent ? x(baseline_rate_index()) : x(1);
  }

  void operator()(const Eigen::VectorXd& x, Eigen::VectorXd& r, Eigen::MatrixXd& j) const {
    const Eigen::Index n = p_.ts.size();
    const Eigen::Index nc = n_comp();
    r.resize(n);
    j.setZero(n, n_params());
    const auto w = fm_.omegas(x(2));
    const auto dw = fm_.derivatives(x(2));
    const double ka = baseline_rate(x);
    for (Eigen::Index k = 0; k < n; ++k) {
      const double t = p_.ts(k);
      const double e = std::exp(-x(1) * t);
      const double ea = std::exp(-ka * t);
      double osc = 0.0, d_om = 0.0;
      for (Eigen::Index c = 0; c < nc; ++c) {
        const double b = x(3 + 2 * c), ph = x(4 + 2 * c);
        const double cs = std::cos(w[c] * t + ph), sn = std::sin(w[c] * t + ph);
        osc += b * cs;
        d_om += -b * t * sn * dw[c];
        j(k, 3 + 2 * c) = e * cs;
        j(k, 4 + 2 * c) = -e * b * sn;
      }
      r(k) = x(0) * ea + e * osc - p_.ys(k);
      j(k, 0) = ea;
      j(k, 2) = e * d_om;
      if (bd_ == BaselineDecay::Independent) {
        j(k, 1) = -t * e * osc;
        j(k, baseline_rate_index()) = -t * x(0) * ea;
      } else {
        j(k, 1) = -t * (x(0) * ea + e * osc);
      }
    }
  }

  Eigen::VectorXd seed(double omega) const {
    const Eigen::VectorXd lin = linear_amplitudes(p_.ts, p_.ys, fm_.omegas(omega), p_.rate_seed, p_.rate_seed);
    Eigen::VectorXd x0(n_params());
    x0(0) = lin(0);
    x0(1) = p_.rate_seed;
    x0(2) = omega;
    for (Eigen::Index c = 0; c < n_comp(); ++c) {
      x0(3 + 2 * c) = std::hypot(lin(1 + 2 * c), lin(2 + 2 * c));
      x0(4 + 2 * c) = std::atan2(lin(2 + 2 * c), lin(1 + 2 * c));
    }
    if (bd_ == BaselineDecay::Independent) x0(baseline_rate_index()) = p_.rate_seed;
    return x0;
  }

  double seed_rss(double omega) const {
    double rss = 0.0;
    linear_amplitudes(p_.ts, p_.ys, fm_.omegas(omega), p_.rate_seed, p_.rate_seed, &rss);
    return rss;
  }

  std::vector<std::string> param_names() const {
    std::vector<std::string> names{"A", "rate", "omega"};
    for (BeatRole r : fm_.roles) {
      names.push_back(std::string("B_") + to_string(r));
      names.push_back(std::string("phi_") + to_string(r));
    }
    if (bd_ == BaselineDecay::Independent) names.emplace_back("rate_A");
    return names;
  }

  /// Converts a solution to the absolute-time result.
  BeatFitResult result(const LsqResult& res, BeatModelKind kind) const {
    const Eigen::VectorXd& x = res.params;
    BeatFitResult out;
    out.kind = kind;
    out.baseline_decay = bd_;
    out.t_ref_ps = p_.t_ref;
    const double rate = x(1), ka = baseline_rate(x);
    out.t1_ps = 1.0 / rate;
    out.baseline_t1_ps = 1.0 / ka;
    out.baseline = x(0) * std::exp(ka * p_.t_ref);
    const double growth = std::exp(rate * p_.t_ref);
    const double om = std::abs(x(2));
    const auto w = fm_.omegas(om);
    for (Eigen::Index c = 0; c < n_comp(); ++c) {
      double amp = x(3 + 2 * c), ph = x(4 + 2 * c);
      if (amp < 0) {
        amp = -amp;
        ph += std::numbers::pi;
      }
      // A negative fitted Omega maps onto the same frequencies with conjugate phase.
      if (x(2) < 0 && kind == BeatModelKind::SingleBeat) ph = -ph;
      out.components.push_back({fm_.roles[c], amp * growth, w[c], wrap_phase(ph - w[c] * p_.t_ref)});
    }
    std::stable_sort(out.components.begin(), out.components.end(), [](const BeatComponent& a, const BeatComponent& b) {
      return a.omega_rad_per_ps < b.omega_rad_per_ps;
    });
    out.omega_rad_per_ps = om;
    out.param_names = param_names();
    out.covariance = covariance(res);
    out.omega_stderr = std::sqrt(std::max(out.covariance(2, 2), 0.0));
    out.t1_stderr = std::sqrt(std::max(out.covariance(1, 1), 0.0)) / (rate * rate);
    out.residual_rms = std::sqrt(2.0 * res.cost / static_cast<double>(p_.ts.size()));
    out.converged = res.converged && rate > 0;
    out.iterations = res.iterations;
    return out;
  }

 private:
  const Prepared& p_;
  FrequencyMap fm_;
  BaselineDecay bd_;
};

inline LsqResult best_fit(const BeatModel& model, const std::vector<double>& seeds, double scale,
                          const LsqOptions& lsq) {
  LsqResult best;
  bool have = false;
  for (double w : seeds) {
    LsqResult res = damped_gauss_newton(model, model.seed(w), scale, lsq);
    if (!have || res.cost < best.cost) {
      best = std::move(res);
      have = true;
    }
  }
  return best;
}

}  // namespace detail

/// Fits the single-beat model; the fitted frequency is the FSS beat delta0.
inline BeatFitResult fit_fss_beat(const IntensityTrace& trace, const FitOptions& opt = {}) {
  if (trace.size() < 64) throw Error(ErrorKind::TraceTooShort, "fit_fss_beat needs at least 64 samples");
  const detail::Prepared p = detail::prepare(trace, opt);

  double w0 = 0.0;
  if (opt.omega_seed) {
    w0 = *opt.omega_seed;
  } else {
    const FftPeaks fp = fft_peaks(trace, 1, opt.fft);
    if (fp.peaks.empty()) throw Error(ErrorKind::AmbiguousSeed, "no dominant spectral peak to seed the beat frequency");
    w0 = fp.peaks.front().omega_rad_per_ps;
  }
  detail::FrequencyMap fm{{BeatRole::Main},
                          [](double om) { return std::vector<double>{om}; },
                          [](double) { return std::vector<double>{1.0}; }};
  const detail::BeatModel model(p, std::move(fm), opt.baseline_decay);
  const LsqResult res = detail::best_fit(model, {w0}, p.scale, opt.lsq);
  return model.result(res, BeatModelKind::SingleBeat);
}

inline std::array<double, 3> triple_frequencies(double omega, double delta0) {
  return {std::abs(omega - 0.5 * delta0), omega, omega + 0.5 * delta0};
}

namespace detail {

/// Omega seed from FFT peaks. A clearly dominant peak is read as Main.
/// Otherwise each peak may be Lower, Main or Upper; a reading scores the peaks
/// it explains minus the resolvable tones it predicts with no peak, and the
/// strongest peak read as Main wins ties.
inline double triple_seed(const FftPeaks& fp, double delta0) {
  if (fp.peaks.size() < 2 || fp.peaks[1].power < 0.5 * fp.peaks[0].power) return fp.peaks.front().omega_rad_per_ps;
  const double tol = 0.25 * fp.resolution_rad_per_ps;
  auto score = [&](double om) {
    const auto f = triple_frequencies(om, delta0);
    int n = 0;
    for (const auto& pk : fp.peaks)
      for (double fj : f)
        if (std::abs(pk.omega_rad_per_ps - fj) <= tol) {
          ++n;
          break;
        }
    for (double fj : f) {
      if (fj < fp.resolution_rad_per_ps) continue;
      bool seen = false;
      for (const auto& pk : fp.peaks) seen = seen || std::abs(pk.omega_rad_per_ps - fj) <= tol;
      n -= !seen;
    }
    return n;
  };
  double best = fp.peaks.front().omega_rad_per_ps;
  int best_n = score(best);
  for (const auto& pk : fp.peaks) {
    const double v = pk.omega_rad_per_ps;
    for (double om : {v, v - 0.5 * delta0, v + 0.5 * delta0, 0.5 * delta0 - v}) {
      if (!(om > 0.0)) continue;
      const int n = score(om);
      if (n > best_n) {
        best = om;
        best_n = n;
      }
    }
  }
  return best;
}

}  // namespace detail

/// Fits three components constrained to {|Omega - delta0/2|, Omega,
/// Omega + delta0/2} with Omega the one free frequency. Omega is seeded from
/// the dominant spectral peak (the Rabi beat) unless `opt.omega_seed` is set.
inline BeatFitResult fit_triple_beat(const IntensityTrace& trace, double delta0, const FitOptions& opt = {}) {
  if (trace.size() < 64) throw Error(ErrorKind::TraceTooShort, "fit_triple_beat needs at least 64 samples");
  if (!(delta0 >= 0) || !std::isfinite(delta0)) throw Error(ErrorKind::InvalidArgument, "delta0 must be >= 0");

  if (delta0 == 0.0) {
    // All three frequencies coincide: the model is the single-beat model.
    const BeatFitResult single = fit_fss_beat(trace, opt);
    BeatFitResult out = single;
    out.kind = BeatModelKind::TripleBeat;
    const BeatComponent main = single.components.front();
    out.components = {{BeatRole::Lower, 0.0, main.omega_rad_per_ps, 0.0},
                      main,
                      {BeatRole::Upper, 0.0, main.omega_rad_per_ps, 0.0}};
    return out;
  }

  const detail::Prepared p = detail::prepare(trace, opt);
  std::vector<double> seeds;
  if (opt.omega_seed) {
    seeds = {*opt.omega_seed};
  } else {
    const FftPeaks fp = fft_peaks(trace, 3, opt.fft);
    if (fp.peaks.empty()) throw Error(ErrorKind::AmbiguousSeed, "no spectral peak to seed Omega");
    seeds = {detail::triple_seed(fp, delta0)};
  }

  detail::FrequencyMap fm{{BeatRole::Lower, BeatRole::Main, BeatRole::Upper},
                          [delta0](double om) {
                            const auto f = triple_frequencies(om, delta0);
                            return std::vector<double>(f.begin(), f.end());
                          },
                          [delta0](double om) {
                            return std::vector<double>{om >= 0.5 * delta0 ? 1.0 : -1.0, 1.0, 1.0};
                          }};
  const detail::BeatModel model(p, std::move(fm), opt.baseline_decay);
  const LsqResult res = detail::best_fit(model, seeds, p.scale, opt.lsq);
  if (std::abs(res.params(2)) < 1e-3 * delta0)
    throw Error(ErrorKind::DegenerateOmega, "fitted Omega collapsed below delta0 * 1e-3");
  BeatFitResult out = model.result(res, BeatModelKind::TripleBeat);
  out.delta0_rad_per_ps = delta0;
  return out;
}

}  // namespace vbeat
