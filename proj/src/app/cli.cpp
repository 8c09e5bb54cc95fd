#include "cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "qdspin/config.hpp"
#include "qdspin/correlate.hpp"
#include "qdspin/errors.hpp"
#include "qdspin/fitter.hpp"
#include "qdspin/forward_model.hpp"
#include "qdspin/simulate.hpp"
#include "qdspin/svg.hpp"
#include "qdspin/timetag_io.hpp"
#include "qdspin/tomography.hpp"

namespace fs = std::filesystem;

namespace qdspin::app {

namespace {

// Raised for problems the user fixes by changing arguments.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Analysis could not produce a trustworthy result.
struct AnalysisError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

ExperimentConfig resolve_config(const std::string& path) {
  if (!path.empty()) return load_config(path);
  if (const char* env = std::getenv(kConfigEnv); env && *env) return load_config(env);
  return ExperimentConfig{};
}

ExperimentConfig with_pulse2(ExperimentConfig cfg, Polarization p) {
  cfg.pulses.pulse2_pol = LinearPolarization::from(p);
  return cfg;
}

Polarization parse_linear(const std::string& s) {
  if (s == "H" || s == "h") return Polarization::H;
  if (s == "D" || s == "d") return Polarization::D;
  throw UsageError("pulse-2 polarization must be H or D, got '" + s + "'");
}

bool is_binary_events(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open '" + p.string() + "'");
  std::array<char, 8> m{};
  in.read(m.data(), 8);
  return in.gcount() == 8 && m == kEventMagic;
}

/// Streams events from a binary or CSV file into `map`; returns the header.
EventFileHeader accumulate_file(const fs::path& p, CorrelationMap& map) {
  if (is_binary_events(p)) {
    EventReader r(p);
    for (const auto& w : r.warnings()) std::cerr << "warning: " << w << "\n";
    r.for_each_chunk([&](std::span<const CoincidenceEvent> ev) { accumulate(map, ev); });
    EventFileHeader h = r.header();
    h.n_events = r.record_count();
    return h;
  }
  EventFile f = import_csv(p);
  accumulate(map, f.events);
  return f.header;
}

void check_digest(const EventFileHeader& h, const Digest& expected, const fs::path& p, bool allow) {
  if (h.config_digest == expected) return;
  std::string msg = "'" + p.string() + "' was produced with config digest " + to_hex(h.config_digest) +
                    ", expected " + to_hex(expected);
  if (!allow) throw UsageError(msg + " (use --allow-mismatch to override)");
  std::cerr << "warning: " << msg << "\n";
}

CorrelationMap map_from_files(const std::vector<std::string>& files, const MapGeometry& geom,
                              const std::optional<Digest>& expected, bool allow_mismatch,
                              Digest* digest_out = nullptr) {
  CorrelationMap map(geom);
  std::optional<Digest> first;
  for (const auto& f : files) {
    EventFileHeader h = accumulate_file(f, map);
    if (expected) {
      check_digest(h, *expected, f, allow_mismatch);
    } else if (!first) {
      first = h.config_digest;
    } else {
      check_digest(h, *first, f, allow_mismatch);
    }
  }
  if (digest_out) *digest_out = expected ? *expected : first.value_or(Digest{});
  return map;
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw IoError("cannot open '" + p.string() + "' for writing");
  out << text;
  if (!out) throw IoError("write failed on '" + p.string() + "'");
}

std::string provenance(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << "config_digest=" << to_hex(config_digest(cfg)) << " seed=" << cfg.seed << " version=" << QDSPIN_VERSION;
  return os.str();
}

// ---- simulate ------------------------------------------------------------------

struct SimulateArgs {
  std::string config;
  std::uint64_t reps = 0;
  std::string out;
  std::string pulse2;
  std::string csv;
  unsigned threads = 1;
};

int cmd_simulate(const SimulateArgs& a) {
  ExperimentConfig cfg = resolve_config(a.config);
  if (!a.pulse2.empty()) cfg = with_pulse2(cfg, parse_linear(a.pulse2));
  EventFileHeader header;
  header.config_digest = config_digest(cfg);
  EventWriter writer(a.out, header, limits_for(cfg));
  SimOptions so;
  so.threads = a.threads;
  SimDiagnostics d = simulate(cfg, a.reps, [&](std::span<const CoincidenceEvent> ev) { writer.write(ev); }, so);
  writer.close();
  if (!a.csv.empty()) binary_to_csv(a.out, a.csv);
  std::cout << "reps = " << d.reps << "\n"
            << "pulse1_excitations = " << d.pulse1_excitations << "\n"
            << "discarded_late = " << d.discarded_late << "\n"
            << "discarded_misordered = " << d.discarded_misordered << "\n"
            << "lost_detection = " << d.lost_detection << "\n"
            << "dark_clicks = " << d.dark_clicks << "\n"
            << "coincidences = " << d.coincidences << "\n"
            << "written = " << writer.written() << "\n"
            << "rejected = " << writer.rejected() << "\n"
            << "config_digest = " << to_hex(header.config_digest) << "\n";
  return kOk;
}

// ---- correlate ------------------------------------------------------------------

struct CorrelateArgs {
  std::string config;
  std::vector<std::string> events;
  double bin = 16.0;
  std::string out;
  bool allow_mismatch = false;
};

int cmd_correlate(const CorrelateArgs& a) {
  ExperimentConfig cfg = resolve_config(a.config);
  MapGeometry geom = MapGeometry::defaults_for(cfg, a.bin);
  Digest digest{};
  CorrelationMap map = map_from_files(a.events, geom, std::nullopt, a.allow_mismatch, &digest);
  std::ofstream out(a.out);
  if (!out) throw IoError("cannot open '" + a.out + "' for writing");
  std::ostringstream meta;
  meta << "config_digest=" << to_hex(digest) << " seed=" << cfg.seed << " version=" << QDSPIN_VERSION;
  write_map_csv(out, map, meta.str());
  if (!out) throw IoError("write failed on '" + a.out + "'");
  std::cout << "events = " << map.total() + map.overflow() << "\n"
            << "binned = " << map.total() << "\n"
            << "overflow = " << map.overflow() << "\n"
            << "rows = " << geom.n_delta_t() * geom.n_t_e() << "\n";
  return kOk;
}

// ---- fit ----------------------------------------------------------------------------

struct FitArgs {
  std::string config;
  std::vector<std::string> events;
  std::string slice = "horizontal";
  double center = std::nan("");
  double width = 32.0;
  double bin = 16.0;
  std::string channel = "RL";
  double t_min = 48.0;
  double t_max = std::numeric_limits<double>::infinity();
  int reweight = 0;
  std::string out;
  double scan_start = std::nan("");
  double scan_end = std::nan("");
  double scan_step = 16.0;
  std::string scan_out;
  unsigned threads = 1;
  bool allow_mismatch = false;
};

FitOptions make_fit_options(const FitArgs& a, SliceAxis axis, const ExperimentConfig& cfg) {
  FitOptions fo;
  fo.t_min = a.t_min;
  fo.t_max = a.t_max;
  fo.reweight_iterations = a.reweight;
  if (axis == SliceAxis::vertical) {
    // decay along delta_t, precession over the remaining ground-state time
    fo.frame.clock = OscillationClock::complement;
    fo.frame.complement_ref = cfg.pulses.pulse_separation;
  }
  return fo;
}

DataSeries series_for(const SliceTrace& tr, const std::string& channel) {
  if (channel == "dcp") return series_from(pooled_dcp(tr));
  if (channel == "co" || channel == "cross") {
    DataSeries s = series_from(tr, channel == "co" ? Channel::RR : Channel::RL);
    const auto& other = tr.channel(channel == "co" ? Channel::LL : Channel::LR);
    for (std::size_t i = 0; i < s.size(); ++i) {
      s.y[i] += other[i];
      s.sigma[i] = std::sqrt(std::max(s.y[i], 1.0));
    }
    return s;
  }
  return series_from(tr, parse_channel(channel));
}

int cmd_fit(const FitArgs& a) {
  ExperimentConfig cfg = resolve_config(a.config);
  SliceAxis axis = a.slice == "vertical" ? SliceAxis::vertical : SliceAxis::horizontal;
  MapGeometry geom = MapGeometry::defaults_for(cfg, a.bin);
  IntensityMap map = to_intensity(map_from_files(a.events, geom, std::nullopt, a.allow_mismatch));
  FitOptions fo = make_fit_options(a, axis, cfg);
  bool is_dcp = a.channel == "dcp";

  bool scanning = !std::isnan(a.scan_start);
  if (!scanning && std::isnan(a.center)) throw UsageError("--center is required unless a scan is requested");

  if (scanning) {
    if (std::isnan(a.scan_end) || !(a.scan_step > 0.0)) throw UsageError("scan needs --scan-end and a positive --scan-step");
    std::vector<double> centers;
    for (int k = 0;; ++k) {
      double c = a.scan_start + k * a.scan_step;
      if (c > a.scan_end + 1e-9) break;
      centers.push_back(c);
    }
    std::vector<DataSeries> series;
    for (double c : centers) series.push_back(series_for(slice(map, axis, c, a.width), a.channel));
    std::ostringstream csv;
    csv << "# " << provenance(cfg) << " slice=" << to_string(axis) << " width_ps=" << a.width
        << " channel=" << a.channel << "\n";
    csv << "center_ps,status,t_prec_ps,t_prec_err_ps,g,g_err,t2_star_ps,t2_star_err_ps,amplitude,phi0_rad,reduced_chi2\n";
    csv.precision(10);
    bool all_ok = true;
    auto row = [&](double c, const auto& fit, double amp) {
      auto g = g_from_period(fit.params.t_prec, cfg.b_field, fit.errors.t_prec);
      csv << c << ',' << (fit.diag.converged ? "ok" : "not_converged") << ',' << fit.params.t_prec << ','
          << fit.errors.t_prec << ',' << g.g << ',' << g.sigma << ',' << fit.params.t2_star << ','
          << fit.errors.t2_star << ',' << amp << ',' << fit.params.phi0 << ',' << fit.diag.reduced_chi2 << '\n';
      all_ok = all_ok && fit.diag.converged;
    };
    if (is_dcp) {
      auto res = fit_dcp_batch(series, fo, a.threads);
      for (std::size_t i = 0; i < centers.size(); ++i) {
        if (res[i].result) row(centers[i], *res[i].result, res[i].result->params.a0);
        else {
          csv << centers[i] << ",error: " << res[i].error << ",,,,,,,,,\n";
          all_ok = false;
        }
      }
    } else {
      auto res = fit_batch(series, fo, a.threads);
      for (std::size_t i = 0; i < centers.size(); ++i) {
        if (res[i].result) row(centers[i], *res[i].result, res[i].result->params.v0);
        else {
          csv << centers[i] << ",error: " << res[i].error << ",,,,,,,,,\n";
          all_ok = false;
        }
      }
    }
    if (a.scan_out.empty()) std::cout << csv.str();
    else write_text(a.scan_out, csv.str());
    return all_ok ? kOk : kAnalysis;
  }

  SliceTrace tr = slice(map, axis, a.center, a.width);
  DataSeries ds = series_for(tr, a.channel);
  std::ostringstream rep;
  rep << "# fit report\n";
  rep << "config_digest = " << to_hex(config_digest(cfg)) << "\n";
  rep << "seed = " << cfg.seed << "\n";
  rep << "version = " << QDSPIN_VERSION << "\n";
  rep << "slice = " << to_string(axis) << "\n";
  rep << "window_center_ps = " << a.center << "\n";
  rep << "window_width_ps = " << a.width << "\n";
  rep << "channel = " << a.channel << "\n";
  bool converged = false;
  if (is_dcp) {
    auto f = fit_dcp(ds, fo);
    rep << fit_report(f, cfg.b_field);
    converged = f.diag.converged;
  } else {
    auto f = fit_decaying_oscillation(ds, fo);
    rep << fit_report(f, cfg.b_field);
    converged = f.diag.converged;
  }
  if (a.out.empty()) std::cout << rep.str();
  else write_text(a.out, rep.str());
  if (!converged) {
    std::cerr << "error: fit did not converge\n";
    return kAnalysis;
  }
  return kOk;
}

// ---- tomo -------------------------------------------------------------------------------

struct TomoArgs {
  std::string config;
  std::string events_h;
  std::string events_d;
  TomographyOptions opt;
  double bin = 16.0;
  std::string out_dir = "tomo_out";
  bool sigma_scan = false;
  SigmaScanOptions scan{.tg_start = 408.0, .tg_end = 1544.0};
  bool analytic = false;
  double analytic_reps = 1e8;
  bool allow_mismatch = false;
};

int cmd_tomo(const TomoArgs& a) {
  ExperimentConfig cfg = resolve_config(a.config);
  ExperimentConfig cfg_h = with_pulse2(cfg, Polarization::H);
  ExperimentConfig cfg_d = with_pulse2(cfg, Polarization::D);
  MapGeometry geom = tomography_geometry(cfg, a.opt, a.bin);

  IntensityMap mh, md;
  bool have_d = false;
  if (a.analytic) {
    mh = expected_map(cfg_h, a.analytic_reps, geom);
    md = expected_map(cfg_d, a.analytic_reps, geom);
    have_d = true;
  } else {
    if (a.events_h.empty()) throw UsageError("--events-h is required unless --analytic is given");
    mh = to_intensity(map_from_files({a.events_h}, geom, config_digest(cfg_h), a.allow_mismatch));
    if (!a.events_d.empty()) {
      md = to_intensity(map_from_files({a.events_d}, geom, config_digest(cfg_d), a.allow_mismatch));
      have_d = true;
    }
  }

  fs::create_directories(a.out_dir);
  fs::path dir(a.out_dir);
  SpinTrajectory traj = reconstruct_trajectory(mh, have_d ? &md : nullptr, cfg, a.opt);
  for (const auto& w : traj.warnings) std::cerr << "warning: " << w << "\n";
  if (traj.points.empty()) throw AnalysisError("no trajectory point could be reconstructed");

  std::string meta = provenance(cfg) + (a.analytic ? " mode=analytic" : " mode=events");
  {
    std::ofstream out(dir / "trajectory.csv");
    if (!out) throw IoError("cannot write trajectory.csv");
    write_trajectory_csv(out, traj, meta);
  }
  std::vector<double> sx, sy, sz;
  for (const auto& p : traj.points) {
    sx.push_back(p.s.sx);
    sy.push_back(p.has_sy ? p.s.sy : 0.0);
    sz.push_back(p.s.sz);
  }
  write_text(dir / "bloch_xz.svg", bloch_projection_svg(sx, sy, sz, 0));
  if (have_d) write_text(dir / "bloch_xy.svg", bloch_projection_svg(sx, sy, sz, 1));

  ComponentFits comp;
  bool comp_ok = true;
  try {
    comp = fit_component_oscillations(traj, cfg.b_field, larmor_period(cfg.hole.g_factor, cfg.b_field));
  } catch (const DomainError& e) {
    std::cerr << "warning: component fits: " << e.what() << "\n";
    comp_ok = false;
  }
  PlaneFit plane;
  bool plane_ok = false;
  if (have_d) {
    try {
      plane = fit_precession_plane(traj, {0.0, 1.0, 0.0});
      plane_ok = true;
    } catch (const DomainError& e) {
      std::cerr << "warning: plane fit: " << e.what() << "\n";
    }
  }
  std::ostringstream rep;
  rep << "# tomography report\n";
  rep << "config_digest = " << to_hex(config_digest(cfg)) << "\n";
  rep << "seed = " << cfg.seed << "\n";
  rep << "version = " << QDSPIN_VERSION << "\n";
  rep << "mode = " << (a.analytic ? "analytic" : "events") << "\n";
  rep << "tg_range_ps = " << a.opt.tg_start << " " << a.opt.tg_end << " step " << a.opt.tg_step << "\n";
  if (!plane_ok) rep << "plane_fit = unavailable\n";
  rep << plane_report(plane, comp, traj);
  write_text(dir / "plane_report.txt", rep.str());

  if (a.sigma_scan) {
    SigmaScanOptions so = a.scan;
    so.window_width = a.opt.window_width;
    so.seed = cfg.seed;
    auto emit = [&](const IntensityMap& m, const char* name) {
      auto scan = sigma_scan(m, cfg, so);
      std::ofstream out(dir / name);
      if (!out) throw IoError(std::string("cannot write ") + name);
      write_sigma_scan_csv(out, scan, meta);
    };
    emit(mh, "sigma_scan_h.csv");
    if (have_d) emit(md, "sigma_scan_d.csv");
  }
  std::cout << "points = " << traj.points.size() << "\n"
            << "mean_purity = " << traj.mean_purity() << "\n";
  if (comp_ok) std::cout << "g_hole = " << comp.g.g << " +- " << comp.g.sigma << "\n";
  if (plane_ok) std::cout << "plane_tilt_deg = " << plane.tilt_deg << "\n";
  std::cout << "out_dir = " << a.out_dir << "\n";
  return comp_ok ? kOk : kAnalysis;
}

int cmd_config(const std::string& config, const std::string& out) {
  ExperimentConfig cfg = resolve_config(config);
  std::string text = serialize_config(cfg);
  if (out.empty()) std::cout << text;
  else write_text(out, text);
  return kOk;
}

int dispatch(CLI::App& app, int argc, char** argv) {
  app.require_subcommand(1);
  app.set_version_flag("--version", QDSPIN_VERSION);
  unsigned threads = 1;
  app.add_option("--threads", threads, "Worker threads (results do not depend on it)")->check(CLI::PositiveNumber);

  SimulateArgs sa;
  auto* sim = app.add_subcommand("simulate", "Monte-Carlo event generation");
  sim->add_option("-c,--config", sa.config, "Config file");
  sim->add_option("--reps", sa.reps, "Repetitions")->required()->check(CLI::PositiveNumber);
  sim->add_option("--out", sa.out, "Binary event file")->required();
  sim->add_option("--pulse2", sa.pulse2, "Override pulse-2 polarization (H or D)");
  sim->add_option("--csv", sa.csv, "Also write the CSV twin");
  sim->add_option("--threads", sa.threads, "Worker threads")->check(CLI::PositiveNumber);

  CorrelateArgs ca;
  auto* cor = app.add_subcommand("correlate", "Build the polarization-resolved correlation map");
  cor->add_option("-c,--config", ca.config, "Config file");
  cor->add_option("events", ca.events, "Event files (binary or CSV)")->required()->check(CLI::ExistingFile);
  cor->add_option("--bin", ca.bin, "Bin width in ps")->check(CLI::PositiveNumber);
  cor->add_option("--out", ca.out, "Map CSV")->required();
  cor->add_flag("--allow-mismatch", ca.allow_mismatch, "Merge files with different config digests");

  FitArgs fa;
  auto* fit = app.add_subcommand("fit", "Slice a map and fit the oscillation model");
  fit->add_option("-c,--config", fa.config, "Config file");
  fit->add_option("events", fa.events, "Event files")->required()->check(CLI::ExistingFile);
  fit->add_option("--slice", fa.slice, "horizontal or vertical")->check(CLI::IsMember({"horizontal", "vertical"}));
  fit->add_option("--center", fa.center, "Window center in ps");
  fit->add_option("--width", fa.width, "Window width in ps")->check(CLI::PositiveNumber);
  fit->add_option("--bin", fa.bin, "Bin width in ps")->check(CLI::PositiveNumber);
  fit->add_option("--channel", fa.channel, "RR, RL, LR, LL, co, cross or dcp")
      ->check(CLI::IsMember({"RR", "RL", "LR", "LL", "co", "cross", "dcp"}));
  fit->add_option("--t-min", fa.t_min, "Fit window start along the trace (ps)");
  fit->add_option("--t-max", fa.t_max, "Fit window end along the trace (ps)");
  fit->add_option("--reweight", fa.reweight, "Model-weighted refits (maximum likelihood)")->check(CLI::NonNegativeNumber);
  fit->add_option("--out", fa.out, "Report file (default stdout)");
  fit->add_option("--scan-start", fa.scan_start, "First window center of a batch scan");
  fit->add_option("--scan-end", fa.scan_end, "Last window center of a batch scan");
  fit->add_option("--scan-step", fa.scan_step, "Scan step in ps");
  fit->add_option("--scan-out", fa.scan_out, "Scan CSV (default stdout)");
  fit->add_option("--threads", fa.threads, "Worker threads")->check(CLI::PositiveNumber);
  fit->add_flag("--allow-mismatch", fa.allow_mismatch, "Merge files with different config digests");

  TomoArgs ta;
  auto* tomo = app.add_subcommand("tomo", "Ground-state spin tomography from H and D runs");
  tomo->add_option("-c,--config", ta.config, "Config file");
  tomo->add_option("--events-h", ta.events_h, "Events with pulse 2 = H")->check(CLI::ExistingFile);
  tomo->add_option("--events-d", ta.events_d, "Events with pulse 2 = D")->check(CLI::ExistingFile);
  tomo->add_option("--tg-start", ta.opt.tg_start, "First ground-state time (ps)");
  tomo->add_option("--tg-end", ta.opt.tg_end, "Last ground-state time (ps)");
  tomo->add_option("--tg-step", ta.opt.tg_step, "Grid step (ps)")->check(CLI::PositiveNumber);
  tomo->add_option("--window", ta.opt.window_width, "Delta_t slice height (ps)")->check(CLI::PositiveNumber);
  tomo->add_option("--bin", ta.bin, "Bin width in ps")->check(CLI::PositiveNumber);
  tomo->add_option("--out-dir", ta.out_dir, "Output directory");
  tomo->add_flag("--sigma-scan", ta.sigma_scan, "Also write sigma(DCP) versus t_g");
  tomo->add_option("--scan-start", ta.scan.tg_start, "sigma scan start (ps)");
  tomo->add_option("--scan-end", ta.scan.tg_end, "sigma scan end (ps)");
  tomo->add_flag("--analytic", ta.analytic, "Use the noise-free analytic intensity instead of events");
  tomo->add_option("--analytic-reps", ta.analytic_reps, "Repetitions represented by the analytic maps");
  tomo->add_flag("--no-response-correction", [&](std::int64_t) { ta.opt.instrument_correction = false; },
                 "Skip the jitter/window amplitude correction");
  tomo->add_flag("--allow-mismatch", ta.allow_mismatch, "Accept event files with other config digests");
  tomo->add_option("--threads", ta.opt.threads, "Worker threads")->check(CLI::PositiveNumber);

  std::string report_dir;
  auto* rep = app.add_subcommand("report", "Summarize a run directory");
  rep->add_option("dir", report_dir, "Run directory")->required();

  std::string cfg_in, cfg_out;
  auto* cfgc = app.add_subcommand("config", "Print the effective configuration");
  cfgc->add_option("-c,--config", cfg_in, "Config file");
  cfgc->add_option("--out", cfg_out, "Write to file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  if (threads > 1) {
    if (sim->count("--threads") == 0) sa.threads = threads;
    if (fit->count("--threads") == 0) fa.threads = threads;
    if (tomo->count("--threads") == 0) ta.opt.threads = threads;
  }

  if (*sim) return cmd_simulate(sa);
  if (*cor) return cmd_correlate(ca);
  if (*fit) return cmd_fit(fa);
  if (*tomo) return cmd_tomo(ta);
  if (*rep) return run_report(report_dir);
  if (*cfgc) return cmd_config(cfg_in, cfg_out);
  return kUsage;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"qdspin: quantum-dot spin correlation simulation and analysis"};
  try {
    return dispatch(app, argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const DegenerateFitError& e) {
    std::cerr << "analysis error: " << e.what() << "\n";
    return kAnalysis;
  } catch (const AnalysisError& e) {
    std::cerr << "analysis error: " << e.what() << "\n";
    return kAnalysis;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kAnalysis;
  }
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<std::string> storage = args;
  std::vector<char*> argv;
  static char prog[] = "qdspin";
  argv.push_back(prog);
  for (auto& s : storage) argv.push_back(s.data());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace qdspin::app
