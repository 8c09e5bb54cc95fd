#pragma once

#include <array>
#include <cstdint>
#include <cmath>
#include <string>

#include "qdspin/spin.hpp"

namespace qdspin {

struct PulseSequence {
  double rep_period = 12500.0;          // ps (80 MHz)
  double pulse_separation = 1600.0;     // ps, pulse 1 -> pulse 2
  LinearPolarization pulse1_pol = LinearPolarization::H();
  LinearPolarization pulse2_pol = LinearPolarization::H();
  double pulse2_phase_offset = 0.0;     // rad, added to the pulse-2 z rotation
  double excitation_prob = 0.5;

  void validate() const;
};

/// 40 ps FWHM system jitter expressed as a per-detector Gaussian sigma.
inline const double kDefaultJitterSigma = 40.0 / (2.0 * std::sqrt(2.0 * std::log(2.0)));

struct InstrumentModel {
  double radiative_lifetime = 800.0;    // ps
  double jitter_sigma = kDefaultJitterSigma;  // ps, per detector
  double detection_efficiency = 1.0;
  double dark_count_rate = 0.0;         // counts/ps per detector

  void validate() const;
};

struct ExperimentConfig {
  SpinSpecies hole{0.254, 7000.0, SpinLabel::hole};
  SpinSpecies electron{0.10, 700.0, SpinLabel::electron};
  double b_field = 1.2;                 // T
  int precession_sign = +1;
  Vec3 hole_axis{0.0, 1.0, 0.0};        // effective hole precession axis
  Vec3 electron_axis{0.0, 1.0, 0.0};
  PulseSequence pulses;
  InstrumentModel instrument;
  std::uint64_t seed = 20251014;

  FieldConfig hole_field() const { return {b_field, hole_axis, precession_sign}; }
  FieldConfig electron_field() const { return {b_field, electron_axis, precession_sign}; }

  /// Throws ConfigError naming the first offending key.
  void validate() const;
};

using Digest = std::array<std::uint8_t, 32>;

/// Canonical `key = value` text, with comments. parse(serialize(c)) == c.
std::string serialize_config(const ExperimentConfig& config);

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
void save_config(const ExperimentConfig& config, const std::string& path);

/// SHA-256 of the canonical serialization.
Digest config_digest(const ExperimentConfig& config);
std::string to_hex(const Digest& d);

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

}  // namespace qdspin
