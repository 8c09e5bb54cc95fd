#pragma once

// Weighted nonlinear least squares for the two oscillation models:
//
//   I(t)   = (I0/2) exp(-t/T1) [1 + V0 exp(-(t/T2*)^2) cos(-2 pi t/T_prec + phi0)]
//   DCP(t) = A0 exp(-(t/T2*)^2) cos(-2 pi t/T_prec + phi0)
//
// T1 and T_prec are fitted as logarithms; the Gaussian dephasing is fitted
// as the rate 1/T2*^2 >= 0 so that dephasing-free data (T2* = inf) has a
// finite optimum on the boundary.

#include <Eigen/Dense>

#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qdspin/correlate.hpp"
#include "qdspin/parallel.hpp"

namespace qdspin {

enum class OscillationClock {
  forward,     // oscillation time = t - origin
  complement,  // oscillation time = complement_ref - t (ground-state time along delta_t)
};

/// Maps the trace axis onto the decay clock and the oscillation clock.
struct TimeFrame {
  double origin = 0.0;
  OscillationClock clock = OscillationClock::forward;
  double complement_ref = 0.0;

  double decay_time(double t) const { return t - origin; }
  double oscillation_time(double t) const {
    return clock == OscillationClock::forward ? t - origin : complement_ref - t;
  }
};

struct DampedOscModel1 {
  double i0 = 0.0;
  double v0 = 0.0;
  double t1 = 0.0;
  double t2_star = std::numeric_limits<double>::infinity();
  double t_prec = 0.0;
  double phi0 = 0.0;

  double operator()(double t, const TimeFrame& frame = {}) const;
};

struct DcpModel3 {
  double a0 = 0.0;
  double t2_star = std::numeric_limits<double>::infinity();
  double t_prec = 0.0;
  double phi0 = 0.0;

  double operator()(double t, const TimeFrame& frame = {}) const;
};

/// Bloch-component trace: constant centre plus a damped cosine.
struct OffsetOscModel {
  double c = 0.0;
  double a0 = 0.0;
  double t2_star = std::numeric_limits<double>::infinity();
  double t_prec = 0.0;
  double phi0 = 0.0;

  double operator()(double t, const TimeFrame& frame = {}) const;
};

struct DataSeries {
  std::vector<double> t;
  std::vector<double> y;
  std::vector<double> sigma;
  std::vector<double> trials;  // R + L per point for DCP data; optional

  std::size_t size() const { return t.size(); }
};

DataSeries series_from(const SliceTrace& trace, Channel channel);
DataSeries series_from(const DcpTrace& trace);  // unmasked bins only

struct FitOptions {
  TimeFrame frame;
  double t_min = -std::numeric_limits<double>::infinity();
  double t_max = std::numeric_limits<double>::infinity();
  int max_iterations = 500;
  /// Refits with uncertainties taken from the current model: Poisson
  /// (sigma^2 = model) for intensities, binomial (sigma^2 = (1 - m^2)/trials)
  /// for DCP. The fixed point is the maximum-likelihood estimate.
  int reweight_iterations = 0;
  /// Parameters held at their initial value, by name ("v0", "t2_star", ...).
  /// Holding the visibility/amplitude at 0 also holds the oscillation terms.
  std::vector<std::string> fixed;
};

struct FitDiagnostics {
  double chi2 = 0.0;
  double reduced_chi2 = 0.0;
  std::size_t n_points = 0;
  bool converged = false;
  int n_iterations = 0;
  bool init_flagged = false;          // initial estimate fell back to defaults
  bool envelope_degenerate = false;   // |corr(T1, T2*)| > 0.99
  double t1_t2_correlation = 0.0;
  bool t2_star_lower_bound = false;   // dephasing rate consistent with 0 at 1 sigma
  double t2_star_lower_1sigma = 0.0;  // ps
  double t2_star_upper_1sigma = std::numeric_limits<double>::infinity();
  double dephasing_rate = 0.0;        // 1/T2*^2, ps^-2
  double dephasing_rate_err = 0.0;
  std::vector<double> cost_history;   // chi2/2 after each accepted step
  std::vector<std::string> notes;
};

template <class Model>
struct FitResult {
  Model params;
  Model errors;  // 1-sigma, from the inverse curvature of the weighted residual
  FitDiagnostics diag;
  std::vector<std::string> names;  // parameter order of `covariance`
  Eigen::MatrixXd covariance;      // physical parameters; zero rows for fixed ones

  double cov(const std::string& a, const std::string& b) const;
};

template <class Model>
struct InitialEstimate {
  Model model;
  bool flagged = false;  // flat trace: defaults used, T_prec set to the span
};

InitialEstimate<DampedOscModel1> estimate_initial_params(const DataSeries& data,
                                                         const FitOptions& options = {});
InitialEstimate<DcpModel3> estimate_initial_dcp_params(const DataSeries& data,
                                                       const FitOptions& options = {});

/// Fits the decaying-oscillation intensity model. Throws DomainError for fewer
/// than 12 points and DegenerateFitError when a parameter has no curvature.
/// Non-convergence is reported in diag.converged with the best point returned.
FitResult<DampedOscModel1> fit_decaying_oscillation(const DataSeries& data, const FitOptions& options = {},
                                                    std::optional<DampedOscModel1> init = {});
FitResult<DampedOscModel1> fit_decaying_oscillation(const SliceTrace& trace, Channel channel,
                                                    const FitOptions& options = {},
                                                    std::optional<DampedOscModel1> init = {});

FitResult<DcpModel3> fit_dcp(const DataSeries& data, const FitOptions& options = {},
                             std::optional<DcpModel3> init = {});
FitResult<DcpModel3> fit_dcp(const DcpTrace& trace, const FitOptions& options = {},
                             std::optional<DcpModel3> init = {});

FitResult<OffsetOscModel> fit_offset_oscillation(const DataSeries& data, const FitOptions& options = {},
                                                 std::optional<OffsetOscModel> init = {});

/// Analytic Jacobian of the model value with respect to the internal
/// parameters (exposed for verification). Order for model 1:
/// i0, v0, log T1, 1/T2*^2, log T_prec, phi0; for the DCP model:
/// a0, 1/T2*^2, log T_prec, phi0; the offset model prepends c.
std::vector<double> model_gradient(const DampedOscModel1& m, double t, const TimeFrame& frame = {});
std::vector<double> model_gradient(const DcpModel3& m, double t, const TimeFrame& frame = {});
std::vector<double> model_gradient(const OffsetOscModel& m, double t, const TimeFrame& frame = {});

struct GFactor {
  double g = 0.0;
  double sigma = 0.0;
};

/// g = h/(mu_B B T_prec) with linear error propagation.
GFactor g_from_period(double t_prec, double b_tesla, double sigma_t_prec = 0.0);

/// Outcome of one fit in a batch; `error` is set instead of `result` on failure.
template <class Model>
struct BatchFit {
  std::optional<FitResult<Model>> result;
  std::string error;
};

std::vector<BatchFit<DampedOscModel1>> fit_batch(std::span<const DataSeries> traces,
                                                 const FitOptions& options, unsigned threads = 1);
std::vector<BatchFit<DcpModel3>> fit_dcp_batch(std::span<const DataSeries> traces,
                                               const FitOptions& options, unsigned threads = 1);

/// `key = value` report lines; `b_tesla` > 0 adds the g-factor.
std::string fit_report(const FitResult<DampedOscModel1>& fit, double b_tesla = 0.0);
std::string fit_report(const FitResult<DcpModel3>& fit, double b_tesla = 0.0);

double wrap_phase(double phi);

}  // namespace qdspin
