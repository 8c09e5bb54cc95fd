#include "qdspin/forward_model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "qdspin/errors.hpp"

namespace qdspin {

namespace {

// 8-point Gauss-Legendre on [-1, 1].
constexpr std::array<double, 8> kGlX{-0.9602898564975363, -0.7966664774136267, -0.5255324099163290,
                                     -0.1834346424956498, 0.1834346424956498,  0.5255324099163290,
                                     0.7966664774136267,  0.9602898564975363};
constexpr std::array<double, 8> kGlW{0.1012285362903763, 0.2223810344533745, 0.3137066458778873,
                                     0.3626837833783620, 0.3626837833783620, 0.3137066458778873,
                                     0.2223810344533745, 0.1012285362903763};

using Basis = std::array<double, 4>;  // [constant term, x, y, z]

/// Integrates w(t) * P(t + jitter in [a, b)) over t in [lo, hi), component-wise.
template <class F>
Basis integrate_bin(const F& w, double a, double b, double sigma, double lo, double hi) {
  double from;
  double to;
  const bool sharp = sigma < 1e-3;
  if (sharp) {
    from = std::max(lo, a);
    to = std::min(hi, b);
  } else {
    from = std::max(lo, a - 9.0 * sigma);
    to = std::min(hi, b + 9.0 * sigma);
  }
  Basis acc{};
  if (!(to > from)) return acc;
  const double panel = sharp ? 4.0 : std::min(4.0, 0.5 * sigma);
  const int n_panels = std::max(1, static_cast<int>(std::ceil((to - from) / panel)));
  const double h = (to - from) / n_panels;
  const double inv = sharp ? 0.0 : 1.0 / (sigma * std::sqrt(2.0));
  for (int p = 0; p < n_panels; ++p) {
    const double mid = from + (p + 0.5) * h;
    for (std::size_t k = 0; k < kGlX.size(); ++k) {
      const double t = mid + 0.5 * h * kGlX[k];
      const double kernel =
          sharp ? 1.0 : 0.5 * (std::erfc((a - t) * inv) - std::erfc((b - t) * inv));
      const Basis v = w(t);
      const double wt = 0.5 * h * kGlW[k] * kernel;
      for (int c = 0; c < 4; ++c) acc[c] += wt * v[c];
    }
  }
  return acc;
}

struct Model {
  const ExperimentConfig& cfg;
  double sep;
  double window2;
  double lifetime;
  double p_eta;     // probability that a pulse yields a detected photon
  double p_b;       // non-discarded shots whose first photon is not detected
  double dark1;     // probability of a dark click standing in for photon 1
  double dark2;

  explicit Model(const ExperimentConfig& c)
      : cfg(c),
        sep(c.pulses.pulse_separation),
        window2(c.pulses.rep_period - c.pulses.pulse_separation),
        lifetime(c.instrument.radiative_lifetime) {
    c.validate();
    const double p = c.pulses.excitation_prob;
    const double eta = c.instrument.detection_efficiency;
    p_eta = p * eta;
    const double decayed = -std::expm1(-sep / lifetime);
    p_b = (1.0 - p) + p * decayed * (1.0 - eta);
    dark1 = std::min(1.0, c.instrument.dark_count_rate * sep);
    dark2 = std::min(1.0, c.instrument.dark_count_rate * window2);
  }

  double decay_density(double t) const { return std::exp(-t / lifetime) / lifetime; }

  // Pulse-1 side: decay density times the excited-state Bloch vector reached
  // from a +z herald at delta_t (components 1..3); component 0 is the density.
  Basis herald_side(double t1) const {
    const double e = decay_density(t1);
    const BlochVector g = evolve({0.0, 0.0, 1.0}, sep - t1, cfg.hole, cfg.hole_field());
    const BlochVector s = map_excitation(g, cfg.pulses.pulse2_pol, cfg.pulses.pulse2_phase_offset);
    return {e, e * s.sx, e * s.sy, e * s.sz};
  }

  // Pulse-2 side: decay density times the z projection response of each
  // excited-state basis vector after t_e.
  Basis readout_side(double t2) const {
    const double e = decay_density(t2);
    const FieldConfig f = cfg.electron_field();
    const double zx = evolve({1.0, 0.0, 0.0}, t2, cfg.electron, f).sz;
    const double zy = evolve({0.0, 1.0, 0.0}, t2, cfg.electron, f).sz;
    const double zz = evolve({0.0, 0.0, 1.0}, t2, cfg.electron, f).sz;
    return {e, e * zx, e * zy, e * zz};
  }

  static double sign(Polarization p) {
    if (p == Polarization::R) return 1.0;
    if (p == Polarization::L) return -1.0;
    throw DomainError("detections must be R or L");
  }

  static double overlap(double a, double b, double lo, double hi) {
    return std::max(0.0, std::min(b, hi) - std::max(a, lo));
  }

  // Combines the per-axis integrals into a per-repetition probability.
  double combine(const Basis& i1, const Basis& i2, double len1, double len2, Polarization pol1,
                 Polarization pol2) const {
    const double s12 = sign(pol1) * sign(pol2);
    double real = i1[0] * i2[0] + s12 * (i1[1] * i2[1] + i1[2] * i2[2] + i1[3] * i2[3]);
    real *= p_eta * p_eta * 0.25;
    const double dark_second = p_eta * 0.5 * i1[0] * (1.0 - p_eta) * dark2 / window2 * 0.5 * len2;
    const double dark_first = p_b * dark1 / sep * 0.5 * len1 * p_eta * 0.5 * i2[0];
    const double dark_both = p_b * dark1 / sep * 0.5 * len1 * (1.0 - p_eta) * dark2 / window2 * 0.5 * len2;
    return real + dark_second + dark_first + dark_both;
  }
};

}  // namespace

double analytic_coincidence_intensity(const ExperimentConfig& config, double delta_t, double t_e,
                                      Polarization pol1, Polarization pol2) {
  const Model m(config);
  if (delta_t < 0.0 || delta_t > m.sep || t_e < 0.0 || t_e >= m.window2) return 0.0;
  const Basis h = m.herald_side(delta_t);
  const Basis r = m.readout_side(t_e);
  return m.combine(h, r, 1.0, 1.0, pol1, pol2);
}

double expected_counts(const ExperimentConfig& config, double n_reps, double dt_lo, double dt_hi,
                       double te_lo, double te_hi, Polarization pol1, Polarization pol2) {
  const Model m(config);
  const double sigma = config.instrument.jitter_sigma;
  // Tags outside the acceptance window are discarded by the simulator.
  const double a1 = std::max(dt_lo, 0.0);
  const double b1 = std::min(dt_hi, m.sep);
  const double a2 = std::max(te_lo, 0.0);
  const double b2 = std::min(te_hi, m.window2);
  if (!(b1 > a1) || !(b2 > a2)) return 0.0;
  const Basis i1 = integrate_bin([&m](double t) { return m.herald_side(t); }, a1, b1, sigma, 0.0, m.sep);
  const Basis i2 = integrate_bin([&m](double t) { return m.readout_side(t); }, a2, b2, sigma, 0.0,
                                 std::numeric_limits<double>::infinity());
  return n_reps * m.combine(i1, i2, b1 - a1, b2 - a2, pol1, pol2);
}

IntensityMap expected_map(const ExperimentConfig& config, double n_reps, const MapGeometry& geometry) {
  const Model m(config);
  IntensityMap map(geometry);
  const double sigma = config.instrument.jitter_sigma;
  const double w = geometry.bin_width;

  std::vector<Basis> rows(map.rows());
  std::vector<double> row_len(map.rows());
  for (std::size_t r = 0; r < map.rows(); ++r) {
    const double a = std::max(geometry.delta_t_lo + static_cast<double>(r) * w, 0.0);
    const double b = std::min(geometry.delta_t_lo + static_cast<double>(r + 1) * w, m.sep);
    row_len[r] = std::max(0.0, b - a);
    rows[r] = row_len[r] > 0 ? integrate_bin([&m](double t) { return m.herald_side(t); }, a, b, sigma,
                                             0.0, m.sep)
                             : Basis{};
  }
  std::vector<Basis> cols(map.cols());
  std::vector<double> col_len(map.cols());
  for (std::size_t k = 0; k < map.cols(); ++k) {
    const double a = std::max(geometry.t_e_lo + static_cast<double>(k) * w, 0.0);
    const double b = std::min(geometry.t_e_lo + static_cast<double>(k + 1) * w, m.window2);
    col_len[k] = std::max(0.0, b - a);
    cols[k] = col_len[k] > 0 ? integrate_bin([&m](double t) { return m.readout_side(t); }, a, b, sigma,
                                             0.0, std::numeric_limits<double>::infinity())
                             : Basis{};
  }
  for (Channel c : kChannels) {
    const Polarization p1 = (c == Channel::RR || c == Channel::RL) ? Polarization::R : Polarization::L;
    const Polarization p2 = (c == Channel::RR || c == Channel::LR) ? Polarization::R : Polarization::L;
    for (std::size_t r = 0; r < map.rows(); ++r) {
      for (std::size_t k = 0; k < map.cols(); ++k) {
        if (row_len[r] <= 0 || col_len[k] <= 0) continue;
        map.at(c, r, k) = n_reps * m.combine(rows[r], cols[k], row_len[r], col_len[k], p1, p2);
      }
    }
  }
  return map;
}

}  // namespace qdspin
