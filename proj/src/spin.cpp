#include "qdspin/spin.hpp"

#include <cmath>
#include <string>

#include "qdspin/errors.hpp"

namespace qdspin {

void SpinSpecies::validate() const {
  if (!(g_factor > 0.0) || !std::isfinite(g_factor)) {
    throw DomainError("g_factor must be positive, got " + std::to_string(g_factor));
  }
  if (!(t2_star > 0.0)) {
    throw DomainError("t2_star must be positive, got " + std::to_string(t2_star));
  }
}

void FieldConfig::validate() const {
  if (!(b_magnitude >= 0.0) || !std::isfinite(b_magnitude)) {
    throw DomainError("b_magnitude must be finite and non-negative");
  }
  if (std::abs(norm(precession_axis) - 1.0) > 1e-12) {
    throw DomainError("precession_axis must be a unit vector");
  }
  if (precession_sign != 1 && precession_sign != -1) {
    throw DomainError("precession_sign must be +1 or -1");
  }
}

std::string_view to_string(Polarization p) {
  switch (p) {
    case Polarization::R: return "R";
    case Polarization::L: return "L";
    case Polarization::H: return "H";
    case Polarization::D: return "D";
  }
  return "?";
}

bool is_circular(Polarization p) { return p == Polarization::R || p == Polarization::L; }

LinearPolarization LinearPolarization::from(Polarization p) {
  switch (p) {
    case Polarization::H: return H();
    case Polarization::D: return D();
    default: throw DomainError("excitation polarization must be linear (H or D)");
  }
}

double larmor_period(double g, double b_tesla) {
  if (!(g > 0.0) || !(b_tesla > 0.0)) {
    throw DomainError("larmor_period requires g > 0 and b > 0");
  }
  return constants::planck_uev_ps / (g * constants::mu_b_uev_per_t * b_tesla);
}

double angular_frequency(const SpinSpecies& species, const FieldConfig& field) {
  if (field.b_magnitude == 0.0) return 0.0;
  return field.precession_sign * 2.0 * constants::pi /
         larmor_period(species.g_factor, field.b_magnitude);
}

BlochVector precess(const BlochVector& s, const Vec3& axis, double angle) {
  if (std::abs(norm(axis) - 1.0) > 1e-12) {
    throw DomainError("precess: rotation axis must be a unit vector");
  }
  const Vec3 v = s.vec();
  const double c = std::cos(angle);
  const double sn = std::sin(angle);
  const Vec3 r = v * c + cross(axis, v) * sn + axis * (dot(axis, v) * (1.0 - c));
  return BlochVector::from(r);
}

BlochVector evolve(const BlochVector& s, double dt, const SpinSpecies& species,
                   const FieldConfig& field, Dephasing mode, double elapsed_before) {
  if (!(dt >= 0.0)) throw DomainError("evolve: dt must be non-negative");
  if (!(elapsed_before >= 0.0)) throw DomainError("evolve: elapsed_before must be non-negative");
  const Vec3& n = field.precession_axis;
  BlochVector out = precess(s, n, angular_frequency(species, field) * dt);
  if (mode == Dephasing::ensemble && std::isfinite(species.t2_star)) {
    const double t0 = elapsed_before / species.t2_star;
    const double t1 = (elapsed_before + dt) / species.t2_star;
    const double damp = std::exp(-(t1 * t1 - t0 * t0));
    const Vec3 v = out.vec();
    const Vec3 parallel = n * dot(n, v);
    out = BlochVector::from(parallel + (v - parallel) * damp);
  }
  return out;
}

BlochVector map_excitation(const BlochVector& s, LinearPolarization pol, double phase_offset) {
  const double a = 2.0 * pol.angle + phase_offset;
  const double c = std::cos(a);
  const double sn = std::sin(a);
  // Exact for the named shortcuts so that H is the identity and D^4 = 1 bit-for-bit.
  if (pol.angle == 0.0 && phase_offset == 0.0) return s;
  if (pol.angle == LinearPolarization::D().angle && phase_offset == 0.0) {
    return {-s.sy, s.sx, s.sz};
  }
  return {c * s.sx - sn * s.sy, sn * s.sx + c * s.sy, s.sz};
}

EmissionProbabilities emission_probabilities(const BlochVector& s_excited) {
  if (s_excited.norm() > 1.0 + kNormSlack) {
    throw DomainError("emission_probabilities: Bloch vector norm exceeds 1");
  }
  const double p_r = 0.5 * (1.0 + s_excited.sz);
  return {p_r, 1.0 - p_r};
}

BlochVector collapse_after_emission(Polarization pol) {
  switch (pol) {
    case Polarization::R: return {0.0, 0.0, 1.0};
    case Polarization::L: return {0.0, 0.0, -1.0};
    default: throw DomainError("collapse_after_emission: detection basis must be R or L");
  }
}

}  // namespace qdspin
