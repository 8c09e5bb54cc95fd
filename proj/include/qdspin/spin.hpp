#pragma once

// Bloch-vector model of the hole ground state and the trion electron:
// Larmor precession, Gaussian inhomogeneous dephasing, the linear-polarization
// excitation mapping and the circular selection rules on emission.

#include <limits>
#include <string_view>
#include <utility>

#include "qdspin/vec3.hpp"

namespace qdspin {

namespace constants {
inline constexpr double mu_b_uev_per_t = 57.8838;       // Bohr magneton, µeV/T
inline constexpr double planck_uev_ps = 4135.667696;    // Planck constant, µeV·ps
inline constexpr double pi = 3.14159265358979323846;
inline constexpr double infinity = std::numeric_limits<double>::infinity();
}  // namespace constants

inline constexpr double kNormSlack = 1e-9;

struct BlochVector {
  double sx = 0.0;
  double sy = 0.0;
  double sz = 0.0;

  constexpr Vec3 vec() const { return {sx, sy, sz}; }
  static constexpr BlochVector from(const Vec3& v) { return {v.x, v.y, v.z}; }
  double norm() const { return qdspin::norm(vec()); }
  constexpr bool operator==(const BlochVector&) const = default;
};

enum class SpinLabel { hole, electron };

struct SpinSpecies {
  double g_factor = 0.0;
  double t2_star = constants::infinity;  // ps; +inf disables dephasing
  SpinLabel label = SpinLabel::hole;

  void validate() const;
};

struct FieldConfig {
  double b_magnitude = 1.2;                // tesla; 0 switches precession off
  Vec3 precession_axis{0.0, 1.0, 0.0};     // unit vector
  int precession_sign = +1;                // +1: +z -> +x after a quarter turn about +y

  void validate() const;
};

enum class Polarization { R, L, H, D };

std::string_view to_string(Polarization p);
bool is_circular(Polarization p);

/// Linear excitation polarization as an angle from H. D is pi/4.
struct LinearPolarization {
  double angle = 0.0;

  static constexpr LinearPolarization H() { return {0.0}; }
  static constexpr LinearPolarization D() { return {constants::pi / 4.0}; }
  static LinearPolarization from(Polarization p);
};

/// T_prec = h / (g mu_B B) in ps.
double larmor_period(double g, double b_tesla);

/// Signed mean angular frequency (rad/ps) of a species in a field; 0 when B = 0.
double angular_frequency(const SpinSpecies& species, const FieldConfig& field);

/// Right-handed rotation of `s` about the unit vector `axis` by `angle` (Rodrigues).
BlochVector precess(const BlochVector& s, const Vec3& axis, double angle);

enum class Dephasing { ensemble, none };

/// Free evolution for `dt` ps. In ensemble mode the components transverse to
/// the precession axis are damped so that the cumulative envelope after a total
/// elapsed time t is exp(-(t/T2*)^2); `elapsed_before` is the time already spent
/// since the coherence was created.
BlochVector evolve(const BlochVector& s, double dt, const SpinSpecies& species,
                   const FieldConfig& field, Dephasing mode = Dephasing::ensemble,
                   double elapsed_before = 0.0);

/// Excitation by a linearly polarized pulse at angle theta: rotation about z by
/// 2*theta + phase_offset. H is the identity, D maps (x, y, z) to (-y, x, z).
BlochVector map_excitation(const BlochVector& s, LinearPolarization pol,
                           double phase_offset = 0.0);

struct EmissionProbabilities {
  double p_r = 0.0;
  double p_l = 0.0;
};

EmissionProbabilities emission_probabilities(const BlochVector& s_excited);

/// Ground state left behind by an R (spin up) or L (spin down) photon.
BlochVector collapse_after_emission(Polarization pol);

}  // namespace qdspin
