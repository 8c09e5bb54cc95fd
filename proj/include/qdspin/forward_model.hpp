#pragma once

// Closed-form expectation of the simulated coincidence statistics.
//
// The ensemble-averaged Bloch propagation is linear in the heralded spin, so
// the two-time coincidence density factorizes into a sum of four products
// f(delta_t) * g(t_e). Expected bin counts with Gaussian detector jitter are
// therefore two one-dimensional quadratures per bin and term.

#include <cstdint>

#include "qdspin/config.hpp"
#include "qdspin/correlate.hpp"

namespace qdspin {

/// Coincidence density per repetition per ps^2 at jitter-free tags
/// (delta_t, t_e); zero outside the acceptance window 0 <= delta_t <= T,
/// 0 <= t_e < rep_period - T.
double analytic_coincidence_intensity(const ExperimentConfig& config, double delta_t, double t_e,
                                      Polarization pol1, Polarization pol2);

/// Expected counts for n_reps repetitions in the observed-tag rectangle
/// [dt_lo, dt_hi) x [te_lo, te_hi), including jitter, efficiency and dark clicks.
double expected_counts(const ExperimentConfig& config, double n_reps, double dt_lo, double dt_hi,
                       double te_lo, double te_hi, Polarization pol1, Polarization pol2);

/// Expected correlation map for n_reps repetitions (noise-free analytic mode).
IntensityMap expected_map(const ExperimentConfig& config, double n_reps, const MapGeometry& geometry);

}  // namespace qdspin
