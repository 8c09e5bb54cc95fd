#include "qdspin/tomography.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <ostream>
#include <random>
#include <sstream>

#include <Eigen/Dense>

#include "qdspin/errors.hpp"

namespace qdspin {

namespace {

constexpr double kTwoPi = 2.0 * constants::pi;

double sq(double v) { return v * v; }

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(8);
  os << v;
  return os.str();
}

}  // namespace

// ---- quadratures ------------------------------------------------------------

Quadrature Quadrature::from_fit(const FitResult<DcpModel3>& fit, double alpha) {
  Quadrature q;
  q.a0 = fit.params.a0;
  q.phi0 = fit.params.phi0;
  q.var_a0 = fit.cov("a0", "a0");
  q.var_phi0 = fit.cov("phi0", "phi0");
  q.cov_a0_phi0 = fit.cov("a0", "phi0");
  q.alpha = alpha;
  return q;
}

Quadrature forward_quadrature(const BlochVector& s, double alpha, int precession_sign) {
  double q = std::cos(alpha) * s.sx - std::sin(alpha) * s.sy;
  Quadrature out;
  out.alpha = alpha;
  out.a0 = std::hypot(s.sz, q);
  out.phi0 = wrap_phase(std::atan2(-precession_sign * q, s.sz));
  return out;
}

namespace {

struct Parts {
  double sz, q, var_sz, var_q;
};

Parts parts(const Quadrature& qd, int sign, bool flip) {
  double a = flip ? -qd.a0 : qd.a0;
  double c = std::cos(qd.phi0), s = std::sin(qd.phi0);
  Parts p;
  p.sz = a * c;
  p.q = -sign * a * s;
  // delta method on (A, phi); a flip only changes signs of both outputs
  p.var_sz = sq(c) * qd.var_a0 + sq(a * s) * qd.var_phi0 - 2.0 * a * c * s * qd.cov_a0_phi0;
  p.var_q = sq(s) * qd.var_a0 + sq(a * c) * qd.var_phi0 + 2.0 * a * s * c * qd.cov_a0_phi0;
  return p;
}

Inversion solve_branch(const QuadratureFitPair& pair, int sign, bool fh, bool fd) {
  Inversion inv;
  inv.flipped_h = fh;
  inv.flipped_d = fd;
  Parts h = parts(pair.h, sign, fh);
  inv.sz_h = h.sz;
  if (!pair.d) {
    // H-only: Sx and Sz from the one branch, Sy unknown
    double c = std::cos(pair.h.alpha);
    if (std::abs(c) < 1e-12) throw DomainError("single-basis inversion needs a basis with cos(alpha) != 0");
    inv.s = {h.q / c, 0.0, h.sz};
    inv.err = {std::sqrt(std::max(h.var_q, 0.0)) / std::abs(c), 0.0, std::sqrt(std::max(h.var_sz, 0.0))};
    inv.has_sy = false;
    inv.sz_d = h.sz;
    inv.residual = 0.0;
    return inv;
  }
  Parts d = parts(*pair.d, sign, fd);
  inv.sz_d = d.sz;
  // [cos aH, -sin aH; cos aD, -sin aD] [Sx; Sy] = [qH; qD]
  Eigen::Matrix2d m;
  m << std::cos(pair.h.alpha), -std::sin(pair.h.alpha), std::cos(pair.d->alpha), -std::sin(pair.d->alpha);
  double det = m.determinant();
  if (std::abs(det) < 1e-9) throw DomainError("excitation bases do not separate Sx and Sy");
  Eigen::Matrix2d mi = m.inverse();
  Eigen::Vector2d xy = mi * Eigen::Vector2d(h.q, d.q);
  Eigen::Matrix2d cq = Eigen::Vector2d(std::max(h.var_q, 0.0), std::max(d.var_q, 0.0)).asDiagonal();
  Eigen::Matrix2d cxy = mi * cq * mi.transpose();

  double sz;
  double var_sz;
  double vh = std::max(h.var_sz, 0.0), vd = std::max(d.var_sz, 0.0);
  if (vh > 0.0 && vd > 0.0) {
    double wh = 1.0 / vh, wd = 1.0 / vd;
    sz = (wh * h.sz + wd * d.sz) / (wh + wd);
    var_sz = 1.0 / (wh + wd);
  } else {
    sz = 0.5 * (h.sz + d.sz);
    var_sz = 0.25 * (vh + vd);
  }
  inv.s = {xy[0], xy[1], sz};
  inv.err = {std::sqrt(cxy(0, 0)), std::sqrt(cxy(1, 1)), std::sqrt(var_sz)};
  inv.residual = std::abs(h.sz - d.sz);
  return inv;
}

}  // namespace

Inversion invert_quadratures(const QuadratureFitPair& pair, const std::optional<BlochVector>& anchor,
                             const InversionOptions& options) {
  int sign = options.precession_sign;
  for (const Quadrature* q : {&pair.h, pair.d ? &*pair.d : nullptr}) {
    if (!q) continue;
    if (!(q->a0 >= 0.0 && q->a0 <= 1.2)) throw DomainError("quadrature amplitude outside [0, 1.2]");
  }
  Inversion base = solve_branch(pair, sign, false, false);
  Inversion best = base;
  if (anchor) {
    double best_dist = norm(base.s.vec() - anchor->vec());
    std::vector<std::pair<bool, bool>> flips = {{true, true}};
    if (pair.d) {
      flips.emplace_back(true, false);
      flips.emplace_back(false, true);
    }
    for (auto [fh, fd] : flips) {
      Inversion cand = solve_branch(pair, sign, fh, fd);
      if (cand.residual > base.residual + options.branch_tolerance) continue;
      double dist = norm(cand.s.vec() - anchor->vec());
      if (dist < best_dist - 1e-12) {
        best = cand;
        best_dist = dist;
      }
    }
  }
  best.inconsistent = best.residual > options.inconsistency_threshold;
  return best;
}

// ---- instrument response --------------------------------------------------

double response_factor(double omega, double jitter_sigma, double window, double t1) {
  double k = std::exp(-0.5 * sq(omega * jitter_sigma));
  if (window > 0.0) {
    double h = 0.5 * window;
    double g = std::isfinite(t1) && t1 > 0.0 ? 1.0 / t1 : 0.0;
    std::complex<double> z(-g, omega);
    std::complex<double> num = std::abs(z) < 1e-14 ? std::complex<double>(window)
                                                   : (std::exp(z * h) - std::exp(-z * h)) / z;
    double den = g > 0.0 ? (std::exp(g * h) - std::exp(-g * h)) / g : window;
    k *= std::abs(num) / den;
  }
  return k;
}

// ---- geometry -----------------------------------------------------------------

MapGeometry tomography_geometry(const ExperimentConfig& config, const TomographyOptions& options,
                                double bin_width) {
  MapGeometry g = MapGeometry::defaults_for(config, bin_width);
  double sep = config.pulses.pulse_separation;
  double step_bins = options.tg_step / bin_width;
  if (!(options.tg_step > 0.0) || std::abs(step_bins - std::round(step_bins)) > 1e-9)
    throw DomainError("t_g step must be a positive multiple of the bin width");
  double width_bins = options.window_width / bin_width;
  if (std::abs(width_bins - std::round(width_bins)) > 1e-9)
    throw DomainError("slice window must be a whole number of bins");
  double origin = std::fmod(sep - options.tg_start - 0.5 * options.window_width, bin_width);
  if (origin < 0.0) origin += bin_width;
  g.delta_t_lo = origin;
  g.delta_t_hi = origin + bin_width * std::floor((sep - origin) / bin_width);
  g.validate();
  return g;
}

// ---- trajectory -----------------------------------------------------------------

std::vector<double> SpinTrajectory::t_g() const {
  std::vector<double> t;
  for (const auto& p : points) t.push_back(p.t_g);
  return t;
}

double SpinTrajectory::mean_purity() const {
  if (points.empty()) return 0.0;
  double s = 0.0;
  for (const auto& p : points) s += p.purity;
  return s / static_cast<double>(points.size());
}

namespace {

void finish_point(TrajectoryPoint& p) {
  const auto& s = p.s;
  p.purity = s.norm();
  if (p.purity > 0.0) {
    p.purity_err = std::sqrt(sq(s.sx * p.err.sx) + sq(s.sy * p.err.sy) + sq(s.sz * p.err.sz)) / p.purity;
  } else {
    p.purity_err = std::max({p.err.sx, p.err.sy, p.err.sz});
  }
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

SpinTrajectory reconstruct_trajectory(const IntensityMap& map_h, const IntensityMap* map_d,
                                      const ExperimentConfig& config, const TomographyOptions& options) {
  if (map_d && !(map_d->geometry() == map_h.geometry()))
    throw DomainError("H and D maps have different geometries");
  if (!(options.tg_end >= options.tg_start)) throw DomainError("t_g grid is empty");
  const MapGeometry& geom = map_h.geometry();
  if (options.tg_step < geom.bin_width) throw DomainError("t_g step is finer than the map bins");
  double sep = config.pulses.pulse_separation;

  std::vector<double> grid;
  for (int k = 0;; ++k) {
    double t = options.tg_start + k * options.tg_step;
    if (t > options.tg_end + 1e-9) break;
    grid.push_back(t);
  }

  FitOptions fo;
  fo.t_min = options.te_fit_min;
  fo.t_max = options.te_fit_max;
  fo.reweight_iterations = options.reweight_iterations;

  struct PointFits {
    std::optional<FitResult<DcpModel3>> h, d;
    std::string warning;
  };
  std::vector<PointFits> fits(grid.size());
  parallel_for(grid.size(), options.threads, [&](std::size_t i) {
    double center = sep - grid[i];
    double lo = center - 0.5 * options.window_width;
    double hi = center + 0.5 * options.window_width;
    if (lo < geom.delta_t_lo - 1e-9 || hi > geom.delta_t_hi + 1e-9) {
      fits[i].warning = "t_g " + fmt(grid[i]) + " ps: slice outside the map, point omitted";
      return;
    }
    try {
      fits[i].h = fit_dcp(pooled_dcp(slice(map_h, SliceAxis::horizontal, center, options.window_width),
                                     options.min_total),
                          fo);
    } catch (const std::exception& e) {
      fits[i].warning = "t_g " + fmt(grid[i]) + " ps: H fit failed (" + e.what() + "), point omitted";
      return;
    }
    if (map_d) {
      try {
        fits[i].d = fit_dcp(pooled_dcp(slice(*map_d, SliceAxis::horizontal, center, options.window_width),
                                       options.min_total),
                            fo);
      } catch (const std::exception& e) {
        fits[i].warning = "t_g " + fmt(grid[i]) + " ps: D fit failed (" + e.what() + "), point omitted";
        fits[i].h.reset();
      }
    }
  });

  SpinTrajectory traj;
  if (!map_d) traj.warnings.push_back("D-basis data missing: Sy is not reconstructed");
  InversionOptions inv_opt = options.inversion;
  inv_opt.precession_sign = config.precession_sign * (config.electron_axis.y < 0.0 ? -1 : 1);
  std::optional<BlochVector> anchor;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!fits[i].warning.empty()) traj.warnings.push_back(fits[i].warning);
    if (!fits[i].h) continue;
    const auto& fh = *fits[i].h;
    if (!fh.diag.converged || (fits[i].d && !fits[i].d->diag.converged)) {
      traj.warnings.push_back("t_g " + fmt(grid[i]) + " ps: DCP fit did not converge, point omitted");
      continue;
    }
    QuadratureFitPair pair;
    pair.t_g = grid[i];
    pair.h = Quadrature::from_fit(fh, options.alpha_h);
    if (fits[i].d) pair.d = Quadrature::from_fit(*fits[i].d, options.alpha_d);
    Inversion inv;
    try {
      inv = invert_quadratures(pair, anchor, inv_opt);
    } catch (const DomainError& e) {
      traj.warnings.push_back("t_g " + fmt(grid[i]) + " ps: " + e.what() + ", point omitted");
      continue;
    }
    TrajectoryPoint p;
    p.t_g = grid[i];
    p.s = inv.s;
    p.err = inv.err;
    p.has_sy = inv.has_sy;
    p.residual = inv.residual;
    p.inconsistent = inv.inconsistent;
    p.sz_h = inv.sz_h;
    p.sz_d = inv.sz_d;
    p.quadratures = pair;
    p.electron_period = fh.params.t_prec;
    finish_point(p);
    traj.points.push_back(p);
    anchor = p.s;
  }
  if (traj.points.empty()) return traj;

  if (options.instrument_correction) {
    const auto& inst = config.instrument;
    std::vector<double> te_periods;
    for (const auto& p : traj.points) te_periods.push_back(p.electron_period);
    double omega_e = kTwoPi / median(te_periods);
    traj.electron_response = response_factor(omega_e, inst.jitter_sigma, geom.bin_width, inst.radiative_lifetime);

    double hole_period = larmor_period(config.hole.g_factor, config.b_field);
    try {
      ComponentFits cf = fit_component_oscillations(traj, config.b_field);
      if (cf.common_period > 0.0) hole_period = cf.common_period;
    } catch (const std::exception&) {
      traj.warnings.push_back("component fit failed; nominal hole period used for the response correction");
    }
    traj.hole_response =
        response_factor(kTwoPi / hole_period, inst.jitter_sigma, options.window_width, inst.radiative_lifetime);

    Vec3 axis = config.hole_axis;
    if (map_d) {
      try {
        PlaneFit pf = fit_precession_plane(traj, config.hole_axis);
        axis = pf.normal;
      } catch (const std::exception&) {
        traj.warnings.push_back("plane fit failed; configured hole axis used for the response correction");
      }
    }
    traj.correction_axis = axis;
    double ke = traj.electron_response, kh = traj.hole_response;
    for (auto& p : traj.points) {
      Vec3 v = p.s.vec() * (1.0 / ke);
      Vec3 par = axis * dot(v, axis);
      Vec3 perp = v - par;
      p.s = BlochVector::from(par + perp * (1.0 / kh));
      double scale = 1.0 / (ke * kh);
      p.err = {p.err.sx * scale, p.err.sy * scale, p.err.sz * scale};
      p.sz_h /= ke;
      p.sz_d /= ke;
      p.residual /= ke;
      finish_point(p);
    }
  }
  return traj;
}

// ---- component fits ---------------------------------------------------------------

ComponentFits fit_component_oscillations(const SpinTrajectory& trajectory, double b_tesla, double nominal_period) {
  ComponentFits out;
  const auto& pts = trajectory.points;
  if (pts.size() < 12) throw DomainError("component fits need at least 12 trajectory points");
  bool has_sy = std::all_of(pts.begin(), pts.end(), [](const TrajectoryPoint& p) { return p.has_sy; });
  double span = pts.back().t_g - pts.front().t_g;

  double wsum = 0.0, wt = 0.0;
  double best_snr = -1.0;
  for (int k = 0; k < 3; ++k) {
    auto ku = static_cast<std::size_t>(k);
    if (k == 1 && !has_sy) {
      out.status[ku] = "absent";
      continue;
    }
    DataSeries ds;
    for (const auto& p : pts) {
      double v = k == 0 ? p.s.sx : k == 1 ? p.s.sy : p.s.sz;
      double e = k == 0 ? p.err.sx : k == 1 ? p.err.sy : p.err.sz;
      ds.t.push_back(p.t_g);
      ds.y.push_back(v);
      ds.sigma.push_back(e > 0.0 ? e : 1e-6);
    }
    try {
      out.fits[ku] = fit_offset_oscillation(ds);
    } catch (const std::exception& e) {
      out.status[ku] = std::string("excluded: ") + e.what();
      continue;
    }
    const auto& f = *out.fits[ku];
    if (!f.diag.converged) {
      out.status[ku] = "excluded: fit did not converge";
      continue;
    }
    if (!(f.params.a0 >= 3.0 * f.errors.a0)) {
      out.status[ku] = "excluded: amplitude below 3 sigma";
      continue;
    }
    if (!(f.errors.t_prec > 0.0) || !std::isfinite(f.errors.t_prec)) {
      out.status[ku] = "excluded: period error undefined";
      continue;
    }
    out.status[ku] = "ok";
    out.included[ku] = true;
    double w = 1.0 / sq(f.errors.t_prec);
    wsum += w;
    wt += w * f.params.t_prec;
    double snr = f.params.a0 / std::max(f.errors.a0, 1e-300);
    if (snr > best_snr) {
      best_snr = snr;
      out.t2_star = f.params.t2_star;
      out.t2_star_lower_1sigma = f.diag.t2_star_lower_1sigma;
      out.t2_star_lower_bound = f.diag.t2_star_lower_bound;
    }
  }
  if (wsum > 0.0) {
    out.common_period = wt / wsum;
    out.common_period_err = 1.0 / std::sqrt(wsum);
    if (b_tesla > 0.0) out.g = g_from_period(out.common_period, b_tesla, out.common_period_err);
  }
  double period = out.common_period > 0.0 ? out.common_period : nominal_period;
  if (period > 0.0) {
    out.periods_spanned = span / period;
    out.short_span = out.periods_spanned < 2.0;
  }
  return out;
}

// ---- plane ---------------------------------------------------------------------------

PlaneFit fit_plane(const std::vector<Vec3>& points, const Vec3& reference) {
  if (points.size() < 3) throw DomainError("plane fit needs at least 3 points");
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  for (const auto& p : points) c += Eigen::Vector3d(p.x, p.y, p.z);
  c /= static_cast<double>(points.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : points) {
    Eigen::Vector3d d = Eigen::Vector3d(p.x, p.y, p.z) - c;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(points.size());
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
  Eigen::Vector3d ev = es.eigenvalues();  // ascending
  if (!(ev[2] > 0.0) || ev[1] <= 1e-10 * ev[2]) throw DomainError("points are collinear: plane is undefined");
  Eigen::Vector3d n = es.eigenvectors().col(0).normalized();
  Vec3 ref = reference * (1.0 / norm(reference));
  Vec3 normal{n[0], n[1], n[2]};
  if (dot(normal, ref) < 0.0) normal = normal * -1.0;
  PlaneFit pf;
  pf.normal = normal;
  pf.centroid = {c[0], c[1], c[2]};
  pf.tilt_deg = std::acos(std::clamp(std::abs(dot(normal, ref)), 0.0, 1.0)) * 180.0 / constants::pi;
  pf.major = std::sqrt(2.0 * ev[2]);
  pf.minor = std::sqrt(2.0 * std::max(ev[1], 0.0));
  pf.n_points = points.size();
  return pf;
}

PlaneFit fit_precession_plane(const SpinTrajectory& trajectory, const Vec3& reference, bool include_inconsistent) {
  std::vector<Vec3> pts;
  for (const auto& p : trajectory.points) {
    if (!p.has_sy) throw DomainError("plane fit needs all three components");
    if (p.inconsistent && !include_inconsistent) continue;
    pts.push_back(p.s.vec());
  }
  if (pts.size() < 8) throw DomainError("plane fit needs at least 8 consistent points");
  return fit_plane(pts, reference);
}

// ---- sigma scan ------------------------------------------------------------------------

std::vector<SigmaScanPoint> sigma_scan(const IntensityMap& map, const ExperimentConfig& config,
                                       const SigmaScanOptions& options) {
  double sep = config.pulses.pulse_separation;
  std::vector<SigmaScanPoint> out;
  std::size_t k = 0;
  for (double tg = options.tg_start; tg <= options.tg_end + 1e-9; tg = options.tg_start + options.tg_step * static_cast<double>(++k)) {
    double center = sep - tg;
    SliceTrace tr = slice(map, SliceAxis::horizontal, center, options.window_width);
    std::vector<double> times, r, l;
    for (std::size_t i = 0; i < tr.times.size(); ++i) {
      if (tr.times[i] < options.te_lo || tr.times[i] >= options.te_hi) continue;
      times.push_back(tr.times[i]);
      r.push_back(tr.channel(Channel::RR)[i] + tr.channel(Channel::LL)[i]);
      l.push_back(tr.channel(Channel::RL)[i] + tr.channel(Channel::LR)[i]);
    }
    SigmaScanPoint pt;
    pt.t_g = tg;
    pt.sigma = sigma_dcp(dcp(times, r, l, options.min_total), options.te_lo, options.te_hi);

    std::seed_seq seq{options.seed, static_cast<std::uint64_t>(k), std::uint64_t{0xb007}};
    std::mt19937_64 rng(seq);
    std::vector<double> rb(r.size()), lb(l.size()), vals;
    auto draw = [&](double mean) {
      if (!(mean > 0.0)) return 0.0;
      return static_cast<double>(std::poisson_distribution<long long>(mean)(rng));
    };
    for (int b = 0; b < options.bootstrap; ++b) {
      for (std::size_t i = 0; i < r.size(); ++i) {
        rb[i] = draw(r[i]);
        lb[i] = draw(l[i]);
      }
      try {
        vals.push_back(sigma_dcp(dcp(times, rb, lb, options.min_total), options.te_lo, options.te_hi));
      } catch (const DomainError&) {
        // resample left too few bins; skip it
      }
    }
    if (vals.size() >= 2) {
      double m = 0.0;
      for (double v : vals) m += v;
      m /= static_cast<double>(vals.size());
      double ss = 0.0;
      for (double v : vals) ss += sq(v - m);
      pt.bootstrap_se = std::sqrt(ss / static_cast<double>(vals.size() - 1));
    }
    out.push_back(pt);
  }
  return out;
}

std::vector<double> find_minima(const std::vector<SigmaScanPoint>& scan, int half_width) {
  std::vector<double> out;
  auto n = static_cast<int>(scan.size());
  for (int i = half_width; i + half_width < n; ++i) {
    bool is_min = true;
    for (int j = i - half_width; j <= i + half_width && is_min; ++j)
      if (j != i && !(scan[static_cast<std::size_t>(i)].sigma < scan[static_cast<std::size_t>(j)].sigma)) is_min = false;
    if (!is_min) continue;
    double a = sq(scan[static_cast<std::size_t>(i - 1)].sigma);
    double b = sq(scan[static_cast<std::size_t>(i)].sigma);
    double c = sq(scan[static_cast<std::size_t>(i + 1)].sigma);
    double step = 0.5 * (scan[static_cast<std::size_t>(i + 1)].t_g - scan[static_cast<std::size_t>(i - 1)].t_g);
    double den = a - 2.0 * b + c;
    double shift = den > 0.0 ? std::clamp(0.5 * (a - c) / den, -0.5, 0.5) : 0.0;
    out.push_back(scan[static_cast<std::size_t>(i)].t_g + shift * step);
  }
  return out;
}

double mean_spacing(const std::vector<double>& positions) {
  if (positions.size() < 2) throw DomainError("need at least two minima");
  return (positions.back() - positions.front()) / static_cast<double>(positions.size() - 1);
}

double flatness_ratio(const std::vector<SigmaScanPoint>& scan) {
  if (scan.size() < 2) throw DomainError("need at least two scan points");
  double m = 0.0;
  for (const auto& p : scan) m += p.sigma;
  m /= static_cast<double>(scan.size());
  double dev = 0.0, se = 0.0;
  for (const auto& p : scan) {
    dev += sq(p.sigma - m);
    se += sq(p.bootstrap_se);
  }
  if (!(se > 0.0)) throw DomainError("bootstrap errors are zero");
  return std::sqrt(dev / se);
}

// ---- outputs -------------------------------------------------------------------------------

void write_trajectory_csv(std::ostream& out, const SpinTrajectory& trajectory, const std::string& metadata) {
  if (!metadata.empty()) out << "# " << metadata << "\n";
  out << "t_g_ps,sx,sy,sz,purity,residual,sx_err,sy_err,sz_err,purity_err,sz_h,sz_d,inconsistent\n";
  out.precision(10);
  for (const auto& p : trajectory.points) {
    out << p.t_g << ',' << p.s.sx << ',';
    if (p.has_sy) out << p.s.sy;
    out << ',' << p.s.sz << ',' << p.purity << ',' << p.residual << ',' << p.err.sx << ',';
    if (p.has_sy) out << p.err.sy;
    out << ',' << p.err.sz << ',' << p.purity_err << ',' << p.sz_h << ',' << p.sz_d << ','
        << (p.inconsistent ? 1 : 0) << '\n';
  }
}

void write_sigma_scan_csv(std::ostream& out, const std::vector<SigmaScanPoint>& scan, const std::string& metadata) {
  if (!metadata.empty()) out << "# " << metadata << "\n";
  out << "t_g_ps,sigma_dcp,bootstrap_se\n";
  out.precision(10);
  for (const auto& p : scan) out << p.t_g << ',' << p.sigma << ',' << p.bootstrap_se << '\n';
}

std::string plane_report(const PlaneFit& plane, const ComponentFits& comp, const SpinTrajectory& traj) {
  std::ostringstream os;
  os.precision(8);
  os << "n_points = " << traj.points.size() << "\n";
  os << "mean_purity = " << traj.mean_purity() << "\n";
  os << "plane_normal = " << plane.normal.x << " " << plane.normal.y << " " << plane.normal.z << "\n";
  os << "plane_tilt_deg = " << plane.tilt_deg << "\n";
  os << "ellipse_major = " << plane.major << "\n";
  os << "ellipse_minor = " << plane.minor << "\n";
  static const char* names[3] = {"sx", "sy", "sz"};
  for (std::size_t k = 0; k < 3; ++k) {
    os << "component_" << names[k] << " = " << comp.status[k];
    if (comp.fits[k]) os << " t_prec_ps=" << comp.fits[k]->params.t_prec << " a0=" << comp.fits[k]->params.a0;
    os << "\n";
  }
  os << "common_period_ps = " << comp.common_period << " +- " << comp.common_period_err << "\n";
  os << "g_hole = " << comp.g.g << " +- " << comp.g.sigma << "\n";
  os << "t2_star_hole_ps = " << comp.t2_star << "\n";
  os << "t2_star_hole_lower_1sigma_ps = " << comp.t2_star_lower_1sigma << "\n";
  os << "t2_star_hole_is_lower_bound = " << (comp.t2_star_lower_bound ? "true" : "false") << "\n";
  os << "periods_spanned = " << comp.periods_spanned << (comp.short_span ? " (short span)" : "") << "\n";
  os << "electron_response = " << traj.electron_response << "\n";
  os << "hole_response = " << traj.hole_response << "\n";
  for (const auto& w : traj.warnings) os << "warning = " << w << "\n";
  return os.str();
}

}  // namespace qdspin
