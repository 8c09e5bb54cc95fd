#pragma once

// Monte-Carlo simulation of the two-pulse heralded correlation protocol.
//
// Each repetition draws per-shot hole and electron Larmor frequencies
// (Gaussian around the mean, sigma = sqrt(2)/T2*), then walks through
// excitation, decay, heralding, ground-state precession, the pulse-2 mapping,
// the second decay and detection. Repetitions are grouped into fixed-size
// partitions; partition k draws from its own generator seeded by
// (seed, k), so results do not depend on the thread count.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "qdspin/config.hpp"
#include "qdspin/spin.hpp"

namespace qdspin {

struct CoincidenceEvent {
  std::uint64_t rep_index = 0;
  std::uint32_t delta_t = 0;  // ps after pulse 1
  std::uint32_t t_e = 0;      // ps after pulse 2
  Polarization pol1 = Polarization::R;
  Polarization pol2 = Polarization::R;

  bool operator==(const CoincidenceEvent&) const = default;
};

struct SimDiagnostics {
  std::uint64_t reps = 0;
  std::uint64_t pulse1_excitations = 0;
  std::uint64_t discarded_late = 0;     // trion still occupied when pulse 2 arrived
  std::uint64_t discarded_misordered = 0;  // jittered tags left the acceptance window
  std::uint64_t lost_detection = 0;
  std::uint64_t dark_clicks = 0;
  std::uint64_t coincidences = 0;

  SimDiagnostics& operator+=(const SimDiagnostics& o);
  bool operator==(const SimDiagnostics&) const = default;
};

struct SimOptions {
  unsigned threads = 1;
  std::uint64_t partition_size = 1u << 20;
};

/// Receives each partition's events, in partition order.
using EventSink = std::function<void(std::span<const CoincidenceEvent>)>;

SimDiagnostics simulate(const ExperimentConfig& config, std::uint64_t n_reps,
                        const EventSink& sink, const SimOptions& options = {});

std::vector<CoincidenceEvent> simulate(const ExperimentConfig& config, std::uint64_t n_reps,
                                       SimDiagnostics* diagnostics = nullptr,
                                       const SimOptions& options = {});

}  // namespace qdspin
