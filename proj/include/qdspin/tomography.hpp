#pragma once

// Ground-state Bloch-vector reconstruction from paired H/D second-pulse runs.
//
// Pulse 2 maps the hole spin S onto the trion electron by a rotation about z
// by alpha (0 for H, pi/2 for D); the electron then precesses about the field
// axis y, so the DCP of the second photon is
//   A cos(-2 pi t/T + phi),  A cos(phi) = Sz,  A sin(phi) = -s (cos(alpha) Sx - sin(alpha) Sy)
// with s the precession sign. The H run therefore reads (Sx, Sz) and the D
// run reads (Sy, Sz).

#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "qdspin/config.hpp"
#include "qdspin/correlate.hpp"
#include "qdspin/fitter.hpp"
#include "qdspin/vec3.hpp"

namespace qdspin {

/// Amplitude/phase pair from one DCP fit, with its 1-sigma covariance.
struct Quadrature {
  double a0 = 0.0;
  double phi0 = 0.0;
  double var_a0 = 0.0;
  double var_phi0 = 0.0;
  double cov_a0_phi0 = 0.0;
  double alpha = 0.0;  // nominal pulse-2 rotation about z

  static Quadrature from_fit(const FitResult<DcpModel3>& fit, double alpha);
};

Quadrature forward_quadrature(const BlochVector& s, double alpha, int precession_sign = +1);

struct QuadratureFitPair {
  double t_g = 0.0;
  Quadrature h;
  std::optional<Quadrature> d;
};

struct Inversion {
  BlochVector s;
  BlochVector err;
  bool has_sy = true;     // false with H-only data
  double sz_h = 0.0;
  double sz_d = 0.0;
  double residual = 0.0;  // |Sz^H - Sz^D|
  bool inconsistent = false;
  bool flipped_h = false;
  bool flipped_d = false;
};

struct InversionOptions {
  int precession_sign = +1;
  double inconsistency_threshold = 0.3;
  /// Branch slack: a pi-flipped branch is considered only if its residual is
  /// within this of the unflipped one.
  double branch_tolerance = 0.05;
};

/// Exact inverse of forward_quadrature. The optional anchor (previous point)
/// selects among the (phi, phi + pi) branches by minimal |S - anchor|.
Inversion invert_quadratures(const QuadratureFitPair& pair, const std::optional<BlochVector>& anchor = {},
                             const InversionOptions& options = {});

struct TomographyOptions {
  double tg_start = 1000.0;
  double tg_end = 1550.0;
  double tg_step = 16.0;
  double window_width = 32.0;     // delta_t slice height
  double te_fit_min = 48.0;       // DCP fit window along t_e
  double te_fit_max = 3200.0;
  double min_total = 20.0;
  int reweight_iterations = 3;    // binomial model weights for the DCP fits
  bool instrument_correction = true;
  double alpha_h = 0.0;
  double alpha_d = constants::pi / 2.0;
  InversionOptions inversion;
  unsigned threads = 1;
};

struct TrajectoryPoint {
  double t_g = 0.0;
  BlochVector s;
  BlochVector err;
  bool has_sy = true;
  double purity = 0.0;
  double purity_err = 0.0;
  double residual = 0.0;
  bool inconsistent = false;
  double sz_h = 0.0;
  double sz_d = 0.0;
  QuadratureFitPair quadratures;
  double electron_period = 0.0;  // from the H fit
};

struct SpinTrajectory {
  std::vector<TrajectoryPoint> points;
  std::vector<std::string> warnings;
  double electron_response = 1.0;  // amplitude factor divided out
  double hole_response = 1.0;
  Vec3 correction_axis{0.0, 1.0, 0.0};

  std::vector<double> t_g() const;
  double mean_purity() const;
};

/// Map geometry whose delta_t bin edges line up with every slice window of the grid.
MapGeometry tomography_geometry(const ExperimentConfig& config, const TomographyOptions& options,
                                double bin_width = 16.0);

/// Amplitude factor of a cosine at angular frequency omega seen through a
/// Gaussian jitter sigma and a window of width w with exp(-u/T1) weighting.
double response_factor(double omega, double jitter_sigma, double window, double t1);

/// `map_d` may be null (H-only reconstruction, Sy absent).
SpinTrajectory reconstruct_trajectory(const IntensityMap& map_h, const IntensityMap* map_d,
                                      const ExperimentConfig& config, const TomographyOptions& options = {});

struct ComponentFits {
  std::array<std::optional<FitResult<OffsetOscModel>>, 3> fits;
  std::array<std::string, 3> status;  // "ok", "absent", "excluded: ..."
  std::array<bool, 3> included{};
  double common_period = 0.0;
  double common_period_err = 0.0;
  GFactor g;
  double t2_star = 0.0;            // from the best-determined component
  double t2_star_lower_1sigma = 0.0;
  bool t2_star_lower_bound = false;
  double periods_spanned = 0.0;
  bool short_span = false;         // fewer than two periods in the grid
};

/// `b_tesla` converts the common period to g.
ComponentFits fit_component_oscillations(const SpinTrajectory& trajectory, double b_tesla,
                                         double nominal_period = 0.0);

struct PlaneFit {
  Vec3 normal;
  Vec3 centroid;
  double tilt_deg = 0.0;  // angle between the normal and the reference axis
  double major = 0.0;     // semi-axes of the projected trajectory
  double minor = 0.0;
  std::size_t n_points = 0;
};

/// Least-squares plane through points; tilt is measured against `reference`.
PlaneFit fit_plane(const std::vector<Vec3>& points, const Vec3& reference = {0.0, 1.0, 0.0});
/// As fit_plane over consistent trajectory points; needs at least 8.
PlaneFit fit_precession_plane(const SpinTrajectory& trajectory, const Vec3& reference = {0.0, 1.0, 0.0},
                              bool include_inconsistent = false);

// ---- sigma(DCP) scan --------------------------------------------------------

struct SigmaScanOptions {
  double tg_start = 400.0;
  double tg_end = 1550.0;
  double tg_step = 16.0;
  double window_width = 32.0;
  double te_lo = 48.0;
  double te_hi = 1248.0;
  double min_total = 20.0;
  int bootstrap = 200;
  std::uint64_t seed = 1;
};

struct SigmaScanPoint {
  double t_g = 0.0;
  double sigma = 0.0;
  double bootstrap_se = 0.0;
};

std::vector<SigmaScanPoint> sigma_scan(const IntensityMap& map, const ExperimentConfig& config,
                                       const SigmaScanOptions& options = {});

/// Local minima (strict over +-half_width samples) refined by a parabola on sigma^2.
std::vector<double> find_minima(const std::vector<SigmaScanPoint>& scan, int half_width = 3);
double mean_spacing(const std::vector<double>& positions);

/// RMS deviation from the mean divided by the RMS bootstrap error.
double flatness_ratio(const std::vector<SigmaScanPoint>& scan);

// ---- outputs ----------------------------------------------------------------

void write_trajectory_csv(std::ostream& out, const SpinTrajectory& trajectory, const std::string& metadata = {});
void write_sigma_scan_csv(std::ostream& out, const std::vector<SigmaScanPoint>& scan,
                          const std::string& metadata = {});
std::string plane_report(const PlaneFit& plane, const ComponentFits& components, const SpinTrajectory& trajectory);

}  // namespace qdspin
