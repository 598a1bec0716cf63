// vbeat: command-line front end.
//
//   vbeat simulate --config run.json [--out DIR] [--seed N]
//   vbeat fit TRACE.csv --model single|triple [--delta0 UEV] [--out FIT.json]
//   vbeat sweep --config sweep.json [--out DIR]
//   vbeat spectrum --config spec.json [--out DIR]
//   vbeat reproduce-fig fig2|fig3|fig4 [--out DIR]
//
// Exit codes: 0 ok, 2 config/input error, 3 numerical failure, 4 fit
// non-convergence.

#include "CLI11.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "config.hpp"

#ifndef VBEAT_VERSION
#define VBEAT_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using namespace vbeat;
using namespace vbeat::cli;

namespace {

constexpr int kOk = 0;
constexpr int kInputError = 2;
constexpr int kNumericalError = 3;
constexpr int kNoConvergence = 4;

/// Input files that do not match the expected schema.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int exit_code_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::InvalidModel:
    case ErrorKind::InvalidArgument:
    case ErrorKind::GridTooCoarse:
    case ErrorKind::TraceTooShort:
      return kInputError;
    default:
      return kNumericalError;
  }
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Writes to a sibling temp file, then renames over `path`.
void write_atomic(const fs::path& path, const std::string& body) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + tmp.string());
    f << body;
    if (!f) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string trace_csv(const IntensityTrace& t) {
  std::string s = "t_ps,intensity\n";
  for (std::size_t k = 0; k < t.size(); ++k) s += fmt(t.times_ps[k]) + "," + fmt(t.values[k]) + "\n";
  return s;
}

std::string spectrum_csv(const Spectrum& sp) {
  std::string s = "axis,value\n";
  for (std::size_t k = 0; k < sp.axis.size(); ++k) s += fmt(sp.axis[k]) + "," + fmt(sp.values[k]) + "\n";
  return s;
}

std::string summary_csv(const SweepResult& r) {
  std::string s = "param,value_GHz,stderr_GHz,converged\n";
  for (const auto& p : r.points)
    s += fmt(p.param) + "," + fmt(p.value_ghz) + "," + fmt(p.stderr_ghz) + "," + (p.converged ? "1" : "0") + "\n";
  return s;
}

json grid_info(const IntensityTrace& t) {
  return {{"start_ps", t.times_ps.empty() ? 0.0 : t.times_ps.front()},
          {"end_ps", t.times_ps.empty() ? 0.0 : t.times_ps.back()},
          {"dt_ps", t.dt_ps()},
          {"n_samples", t.size()}};
}

json metadata(const std::string& command, json resolved) {
  return {{"tool", "vbeat"},
          {"version", VBEAT_VERSION},
          {"command", command},
          {"timestamp", utc_timestamp()},
          {"config", std::move(resolved)}};
}

void write_json(const fs::path& p, const json& j) { write_atomic(p, j.dump(2) + "\n"); }

json read_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config " + path);
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
}

IntensityTrace read_trace_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InputError("cannot open " + path);
  std::string line;
  if (!std::getline(f, line)) throw InputError(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "t_ps,intensity") throw InputError(path + ": header must be t_ps,intensity");
  IntensityTrace t;
  std::size_t row = 1;
  while (std::getline(f, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos)
      throw InputError(path + ": row " + std::to_string(row) + " must have 2 columns");
    try {
      std::size_t n1 = 0, n2 = 0;
      const std::string a = line.substr(0, comma), b = line.substr(comma + 1);
      const double tv = std::stod(a, &n1), iv = std::stod(b, &n2);
      if (n1 != a.size() || n2 != b.size()) throw std::invalid_argument("trailing");
      t.times_ps.push_back(tv);
      t.values.push_back(iv);
    } catch (const std::exception&) {
      throw InputError(path + ": row " + std::to_string(row) + " is not numeric");
    }
  }
  if (t.size() < 2) throw InputError(path + ": needs at least 2 rows");
  const double dt = t.dt_ps();
  if (!(dt > 0)) throw InputError(path + ": time column must increase");
  for (std::size_t k = 1; k < t.size(); ++k)
    if (std::abs(t.times_ps[k] - t.times_ps[k - 1] - dt) > 1e-6 * dt)
      throw InputError(path + ": time grid must be uniform");
  t.config.irf_fwhm_ps = 0.0;
  return t;
}

// ---------------------------------------------------------------------------
// Shared config plumbing

struct CommonConfig {
  EmitterModel emitter;
  DetectionConfig detection;
  IntegratorConfig integrator;
  fs::path out_dir = ".";
};

/// Reads detection, integrator and output sections; leaves emitter, drive
/// and task to the caller.
CommonConfig read_common(Section& root) {
  CommonConfig c;
  c.emitter = parse_emitter(root.child("emitter"));
  c.detection = parse_detection(root.optional_child("detection"));
  c.integrator = parse_integrator(root.optional_child("integrator"));
  if (auto out = root.optional_child("output")) {
    c.out_dir = out->string("dir", ".");
    out->finish();
  }
  return c;
}

json common_json(const CommonConfig& c) {
  return {{"emitter", to_json(c.emitter)},
          {"detection", to_json(c.detection)},
          {"integrator", to_json(c.integrator)}};
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

int cmd_simulate(const SimulateArgs& a) {
  const json j = read_config(a.config);
  Section root(j, "");
  CommonConfig c = read_common(root);
  const DriveField drive = parse_drive(root.child("drive"), c.emitter, c.integrator);
  Section task = root.child("task");
  const double start = task.number("start_ps", 0.0);
  const double end = task.number("end_ps");
  const double noise = task.number("noise_rel", 0.0);
  std::uint64_t seed = static_cast<std::uint64_t>(task.number("seed", 0.0));
  task.finish();
  root.finish();
  if (!(end > start)) throw ConfigError("task.end_ps must exceed task.start_ps");
  if (!(noise >= 0)) throw ConfigError("task.noise_rel must be >= 0");
  if (a.seed) seed = *a.seed;
  if (!a.out.empty()) c.out_dir = a.out;

  const Trajectory tr = evolve(c.emitter, drive, DensityMatrix::ground(), {start, end}, c.integrator);
  IntensityTrace trace = detect(tr, c.detection);
  if (noise > 0) {
    double peak = 0.0;
    for (double v : trace.values) peak = std::max(peak, std::abs(v));
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, noise * peak);
    for (double& v : trace.values) v += gauss(rng);
  }

  json resolved = common_json(c);
  resolved["drive"] = to_json(drive);
  resolved["task"] = {{"start_ps", start}, {"end_ps", end}, {"noise_rel", noise}, {"seed", seed}};
  json meta = metadata("simulate", resolved);
  meta["grid"] = grid_info(trace);
  meta["columns"] = {{"t_ps", "ps"}, {"intensity", "excited population"}};
  write_atomic(c.out_dir / "trace.csv", trace_csv(trace));
  write_json(c.out_dir / "trace.json", meta);
  std::cout << (c.out_dir / "trace.csv").string() << ": " << trace.size() << " rows\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// fit

struct FitArgs {
  std::string csv;
  std::string model = "single";
  std::optional<double> delta0_ueV;
  std::optional<double> t_begin, t_end;
  std::string baseline = "shared";
  std::string out;
};

int cmd_fit(const FitArgs& a) {
  if (a.model != "single" && a.model != "triple") throw InputError("--model must be single or triple");
  if (a.model == "triple" && !a.delta0_ueV) throw InputError("delta0 required for triple fit");
  if (a.baseline != "shared" && a.baseline != "independent")
    throw InputError("--baseline must be shared or independent");
  IntensityTrace trace = read_trace_csv(a.csv);
  const double t0 = a.t_begin.value_or(trace.times_ps.front());
  const double t1 = a.t_end.value_or(trace.times_ps.back());
  trace = trace.window(t0, t1);

  FitOptions fo;
  fo.baseline_decay = a.baseline == "shared" ? BaselineDecay::Shared : BaselineDecay::Independent;
  BeatFitResult fit;
  if (a.model == "single") {
    fit = fit_fss_beat(trace, fo);
  } else {
    fit = fit_triple_beat(trace, units::energy_to_angular(*a.delta0_ueV), fo);
  }

  json out = to_json(fit);
  out["input"] = {{"csv", a.csv}, {"window_ps", {t0, t1}}, {"n_samples", trace.size()}};
  if (a.delta0_ueV) out["input"]["delta0_ueV"] = *a.delta0_ueV;
  out["tool"] = {{"name", "vbeat"}, {"version", VBEAT_VERSION}};
  fs::path path = a.out;
  if (path.empty()) {
    path = fs::path(a.csv);
    path.replace_extension();
    path += "_fit.json";
  }
  write_json(path, out);
  std::cout << path.string() << ": " << to_string(fit.kind) << " omega "
            << fmt(units::angular_to_ghz(fit.omega_rad_per_ps)) << " GHz, converged " << fit.converged << "\n";
  return fit.converged ? kOk : kNoConvergence;
}

// ---------------------------------------------------------------------------
// sweep

ExperimentConfig parse_experiment(Section& task, const CommonConfig& c) {
  ExperimentConfig e;
  e.detection = c.detection;
  e.integrator = c.integrator;
  e.exc_angle_rad = task.number("exc_angle_rad", e.exc_angle_rad);
  e.pi_fwhm_ps = task.number("pi_fwhm_ps", e.pi_fwhm_ps);
  e.pi_center_ps = task.number("pi_center_ps", e.pi_center_ps);
  e.pi_span_ps = task.number("pi_span_ps", e.pi_span_ps);
  e.long_duration_ps = task.number("long_duration_ps", e.long_duration_ps);
  e.long_start_ps = task.number("long_start_ps", e.long_start_ps);
  e.long_span_ps = task.number("long_span_ps", e.long_span_ps);
  e.rabi_per_sqrt_power = task.number("rabi_per_sqrt_power", e.rabi_per_sqrt_power);
  return e;
}

json experiment_json(const ExperimentConfig& e) {
  return {{"exc_angle_rad", e.exc_angle_rad},         {"pi_fwhm_ps", e.pi_fwhm_ps},
          {"pi_center_ps", e.pi_center_ps},           {"pi_span_ps", e.pi_span_ps},
          {"long_duration_ps", e.long_duration_ps},   {"long_start_ps", e.long_start_ps},
          {"long_span_ps", e.long_span_ps},           {"rabi_per_sqrt_power", e.rabi_per_sqrt_power}};
}

/// Per-point traces, fits and the summary; returns the sweep exit code.
int write_sweep(const fs::path& dir, const SweepResult& r, json meta) {
  json points = json::array();
  for (std::size_t i = 0; i < r.points.size(); ++i) {
    const SweepPoint& p = r.points[i];
    const std::string stem = "param_" + std::to_string(i);
    if (p.trace.size() > 0) write_atomic(dir / (stem + ".csv"), trace_csv(p.trace));
    if (p.fit) write_json(dir / (stem + "_fit.json"), to_json(*p.fit));
    json pj = {{"index", i},
               {"param", p.param},
               {"value_GHz", p.value_ghz},
               {"stderr_GHz", p.stderr_ghz},
               {"converged", p.converged},
               {"window_ps", {p.window_start_ps, p.window_end_ps}}};
    if (!p.error.empty()) pj["error"] = p.error;
    if (std::isfinite(p.visibility)) pj["visibility"] = p.visibility;
    if (std::isfinite(p.visibility_raw)) pj["visibility_raw"] = p.visibility_raw;
    points.push_back(pj);
  }
  meta["param_name"] = r.param_name;
  meta["value_name"] = r.value_name;
  meta["points"] = points;
  meta["converged"] = r.converged_count();
  write_atomic(dir / "summary.csv", summary_csv(r));
  write_json(dir / "summary.json", meta);
  const bool ok = 5 * r.converged_count() >= 4 * r.points.size();
  std::cout << (dir / "summary.csv").string() << ": " << r.converged_count() << "/" << r.points.size()
            << " converged\n";
  return ok ? kOk : kNoConvergence;
}

int cmd_sweep(const std::string& config, const std::string& out_override) {
  const json j = read_config(config);
  Section root(j, "");
  CommonConfig c = read_common(root);
  Section task = root.child("task");
  const std::string param = task.string("param");
  const std::vector<double> values = task.numbers("values");
  ExperimentConfig e = parse_experiment(task, c);
  task.finish();
  root.finish();
  if (values.empty()) throw ConfigError("task.values must not be empty");
  if (param != "fss_ueV" && param != "power") throw ConfigError("task.param must be fss_ueV or power");
  if (!out_override.empty()) c.out_dir = out_override;

  const SweepResult r =
      param == "fss_ueV" ? run_fss_beat_experiment(c.emitter, values, e) : run_power_sweep(c.emitter, values, e);
  json resolved = common_json(c);
  resolved["task"] = experiment_json(e);
  resolved["task"]["param"] = param;
  resolved["task"]["values"] = values;
  return write_sweep(c.out_dir, r, metadata("sweep", resolved));
}

// ---------------------------------------------------------------------------
// spectrum

int cmd_spectrum(const std::string& config, const std::string& out_override) {
  const json j = read_config(config);
  Section root(j, "");
  CommonConfig c = read_common(root);
  const DriveField drive = parse_drive(root.child("drive"), c.emitter, c.integrator);
  Section task = root.child("task");
  const std::string kind = task.string("kind");
  const double lo = task.number("min");
  const double hi = task.number("max");
  const double n = task.number("n_points");
  EmissionOptions eo;
  eo.pol_angle_rad = task.nullable_number("pol_angle_rad", eo.pol_angle_rad);
  task.finish();
  root.finish();
  if (kind != "detuning" && kind != "emission") throw ConfigError("task.kind must be detuning or emission");
  if (!(n >= 2) || n != std::floor(n)) throw ConfigError("task.n_points must be an integer >= 2");
  if (!(hi > lo)) throw ConfigError("task.max must exceed task.min");
  if (!drive.is_cw()) throw ConfigError("drive.envelope.type must be cw for spectra");
  if (!out_override.empty()) c.out_dir = out_override;

  const auto np = static_cast<std::size_t>(n);
  const Spectrum sp = kind == "detuning" ? detuning_spectrum(c.emitter, drive, lo, hi, np)
                                         : emission_spectrum(c.emitter, drive, lo, hi, np, eo);
  json resolved = common_json(c);
  resolved["drive"] = to_json(drive);
  resolved["task"] = {{"kind", kind}, {"min", lo}, {"max", hi}, {"n_points", np}};
  if (kind == "emission")
    resolved["task"]["pol_angle_rad"] = eo.pol_angle_rad ? json(*eo.pol_angle_rad) : json(nullptr);
  json meta = metadata("spectrum", resolved);
  meta["axis_unit"] = sp.axis_unit;
  meta["value_unit"] = kind == "detuning" ? "excited population" : "excited population per rad/ps";
  if (kind == "emission") {
    meta["coherent_power"] = sp.coherent_power;
    meta["incoherent_power"] = sp.incoherent_power;
    meta["steady_state_intensity"] = sp.steady_state_intensity;
    meta["used_fallback"] = sp.used_fallback;
  }
  write_atomic(c.out_dir / "spectrum.csv", spectrum_csv(sp));
  write_json(c.out_dir / "spectrum.json", meta);
  std::cout << (c.out_dir / "spectrum.csv").string() << ": " << sp.axis.size() << " rows (" << sp.axis_unit << ")\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// reproduce-fig

constexpr double kGamma = 1e-3;           // 1/ps, T1 = 1 ns
constexpr double kFss = 13.0;             // ueV
constexpr double kRabi = 0.0081681408993; // rad/ps, 1.3 GHz

int fig2(const fs::path& dir) {
  const EmitterModel tls = EmitterModel::two_level(kGamma);
  const EmitterModel vs = EmitterModel::v_system(kFss, kGamma);
  DriveField weak;
  weak.envelope = Cw{};
  weak.peak_rabi_rad_per_ps = 0.1 * kGamma;
  json meta = metadata("reproduce-fig fig2", {{"gamma_per_ps", kGamma}, {"fss_ueV", kFss}});
  for (const auto& [name, m] : {std::pair{"tls", tls}, std::pair{"v", vs}}) {
    const Spectrum sp = detuning_spectrum(m, weak, -10.0, 25.0, 701);
    write_atomic(dir / (std::string("spectrum_") + name + ".csv"), spectrum_csv(sp));
    meta["spectra"][name] = {{"axis_unit", sp.axis_unit}, {"emitter", to_json(m)}, {"drive", to_json(weak)}};
  }
  write_json(dir / "fig2.json", meta);

  ExperimentConfig e;
  const SweepResult r = run_fss_beat_experiment(vs, {13.0, 20.0, 30.0, 40.0}, e);
  json smeta = metadata("reproduce-fig fig2",
                        {{"emitter", to_json(vs)}, {"detection", to_json(e.detection)}, {"task", experiment_json(e)}});
  return write_sweep(dir / "fss_sweep", r, smeta);
}

int fig3(const fs::path& dir) {
  ExperimentConfig e;
  e.rabi_per_sqrt_power = kRabi / std::cos(e.exc_angle_rad);
  std::vector<double> powers;
  for (int k = 0; k <= 8; ++k) powers.push_back(0.25 * std::pow(2.0, 0.5 * k));
  int code = kOk;
  for (const auto& [name, m] :
       {std::pair{"tls", EmitterModel::two_level(kGamma)}, std::pair{"v", EmitterModel::v_system(kFss, kGamma)}}) {
    const SweepResult r = run_power_sweep(m, powers, e);
    json meta = metadata("reproduce-fig fig3",
                         {{"emitter", to_json(m)}, {"detection", to_json(e.detection)}, {"task", experiment_json(e)}});
    code = std::max(code, write_sweep(dir / (std::string("power_") + name), r, meta));
  }
  return code;
}

int fig4(const fs::path& dir) {
  const ExperimentConfig e = fig4_config();
  const Fig4Result r = reproduce_fig4(EmitterModel::two_level(kGamma), EmitterModel::v_system(kFss, kGamma), kRabi, e);
  json panels = json::object();
  for (const Fig4Panel& p : r.panels) {
    const std::string stem = "panel_" + p.label;
    write_atomic(dir / (stem + ".csv"), trace_csv(p.trace));
    json pj = {{"emitter", to_json(p.model)},
               {"drive", to_json(p.drive)},
               {"window_ps", {p.window_start_ps, p.window_end_ps}},
               {"grid", grid_info(p.trace)}};
    if (p.fit) {
      write_json(dir / (stem + "_fit.json"), to_json(*p.fit));
      pj["fit"] = stem + "_fit.json";
    } else {
      pj["fit_error"] = p.fit_error;
    }
    panels[p.label] = pj;
  }
  json meta = metadata("reproduce-fig fig4", {{"detection", to_json(e.detection)}, {"integrator", to_json(e.integrator)}});
  meta["panels"] = panels;
  write_json(dir / "fig4.json", meta);
  std::cout << (dir / "fig4.json").string() << ": 4 panels\n";
  return kOk;
}

int cmd_reproduce(const std::string& which, const std::string& out) {
  const fs::path dir = out.empty() ? fs::path(which) : fs::path(out);
  if (which == "fig2") return fig2(dir);
  if (which == "fig3") return fig3(dir);
  if (which == "fig4") return fig4(dir);
  throw InputError("unknown figure " + which + " (fig2, fig3, fig4)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Time-resolved resonance fluorescence of two-level and V-type emitters"};
  app.set_version_flag("--version", VBEAT_VERSION);
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* s_sim = app.add_subcommand("simulate", "Evolve one configuration and write the detected trace");
  s_sim->add_option("-c,--config", sim.config, "JSON run configuration")->required();
  s_sim->add_option("-o,--out", sim.out, "Output directory (overrides output.dir)");
  s_sim->add_option("--seed", sim.seed, "Seed for task.noise_rel");

  FitArgs fit;
  auto* s_fit = app.add_subcommand("fit", "Fit a beat model to a trace CSV");
  s_fit->add_option("csv", fit.csv, "Trace CSV (t_ps,intensity)")->required();
  s_fit->add_option("-m,--model", fit.model, "single | triple");
  s_fit->add_option("--delta0", fit.delta0_ueV, "Fine-structure splitting in ueV (triple)");
  s_fit->add_option("--t-begin", fit.t_begin, "Window start, ps");
  s_fit->add_option("--t-end", fit.t_end, "Window end, ps");
  s_fit->add_option("--baseline", fit.baseline, "shared | independent baseline decay");
  s_fit->add_option("-o,--out", fit.out, "Fit JSON path");

  std::string cfg_path, out_dir;
  auto* s_sweep = app.add_subcommand("sweep", "Run an FSS or power sweep");
  s_sweep->add_option("-c,--config", cfg_path, "JSON run configuration")->required();
  s_sweep->add_option("-o,--out", out_dir, "Output directory");

  auto* s_spec = app.add_subcommand("spectrum", "Detuning or emission spectrum");
  s_spec->add_option("-c,--config", cfg_path, "JSON run configuration")->required();
  s_spec->add_option("-o,--out", out_dir, "Output directory");

  std::string figure;
  auto* s_fig = app.add_subcommand("reproduce-fig", "Canonical figure pipelines");
  s_fig->add_option("figure", figure, "fig2 | fig3 | fig4")->required();
  s_fig->add_option("-o,--out", out_dir, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kInputError;
  }

  try {
    if (*s_sim) return cmd_simulate(sim);
    if (*s_fit) return cmd_fit(fit);
    if (*s_sweep) return cmd_sweep(cfg_path, out_dir);
    if (*s_spec) return cmd_spectrum(cfg_path, out_dir);
    if (*s_fig) return cmd_reproduce(figure, out_dir);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kInputError;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kInputError;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumericalError;
  }
  return kInputError;
}
