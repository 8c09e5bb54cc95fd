#include "qdspin/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <thread>

#include "qdspin/errors.hpp"

namespace qdspin {

SimDiagnostics& SimDiagnostics::operator+=(const SimDiagnostics& o) {
  reps += o.reps;
  pulse1_excitations += o.pulse1_excitations;
  discarded_late += o.discarded_late;
  discarded_misordered += o.discarded_misordered;
  lost_detection += o.lost_detection;
  dark_clicks += o.dark_clicks;
  coincidences += o.coincidences;
  return *this;
}

namespace {

// Rotation about a fixed unit axis, skipping the per-call axis check in precess().
struct Rotor {
  Vec3 axis;
  BlochVector operator()(const BlochVector& s, double angle) const {
    const Vec3 v = s.vec();
    const double c = std::cos(angle);
    const double sn = std::sin(angle);
    return BlochVector::from(v * c + cross(axis, v) * sn + axis * (dot(axis, v) * (1.0 - c)));
  }
};

class PartitionRunner {
 public:
  explicit PartitionRunner(const ExperimentConfig& cfg)
      : cfg_(cfg),
        hole_rotor_{cfg.hole_axis},
        electron_rotor_{cfg.electron_axis},
        mean_w_hole_(angular_frequency(cfg.hole, cfg.hole_field())),
        mean_w_electron_(angular_frequency(cfg.electron, cfg.electron_field())),
        sigma_w_hole_(std::isfinite(cfg.hole.t2_star) ? std::sqrt(2.0) / cfg.hole.t2_star : 0.0),
        sigma_w_electron_(std::isfinite(cfg.electron.t2_star) ? std::sqrt(2.0) / cfg.electron.t2_star
                                                              : 0.0),
        sep_(cfg.pulses.pulse_separation),
        window2_(cfg.pulses.rep_period - cfg.pulses.pulse_separation),
        p_exc_(cfg.pulses.excitation_prob),
        eta_(cfg.instrument.detection_efficiency),
        jitter_(cfg.instrument.jitter_sigma),
        dark1_(std::min(1.0, cfg.instrument.dark_count_rate * sep_)),
        dark2_(std::min(1.0, cfg.instrument.dark_count_rate * window2_)),
        lifetime_(cfg.instrument.radiative_lifetime) {}

  SimDiagnostics run(std::uint64_t partition, std::uint64_t first_rep, std::uint64_t n,
                     std::vector<CoincidenceEvent>& out) const {
    std::seed_seq seq{static_cast<std::uint32_t>(cfg_.seed), static_cast<std::uint32_t>(cfg_.seed >> 32),
                      static_cast<std::uint32_t>(partition), static_cast<std::uint32_t>(partition >> 32),
                      0x51d7u};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::exponential_distribution<double> decay(1.0 / lifetime_);

    SimDiagnostics diag;
    diag.reps = n;
    const BlochVector up{0.0, 0.0, 1.0};
    const BlochVector down{0.0, 0.0, -1.0};

    for (std::uint64_t rep = first_rep; rep < first_rep + n; ++rep) {
      const double w_hole = mean_w_hole_ + (sigma_w_hole_ > 0 ? sigma_w_hole_ * gauss(rng) : 0.0);
      const double w_el =
          mean_w_electron_ + (sigma_w_electron_ > 0 ? sigma_w_electron_ * gauss(rng) : 0.0);

      bool have1 = false;
      double tag1 = 0.0;
      Polarization pol1 = Polarization::R;
      BlochVector ground;
      double t_ground = sep_;

      if (uni(rng) < p_exc_) {
        ++diag.pulse1_excitations;
        // Unpolarized hole before pulse 1.
        const BlochVector thermal = uni(rng) < 0.5 ? up : down;
        const BlochVector trion = map_excitation(thermal, cfg_.pulses.pulse1_pol);
        const double t1 = decay(rng);
        if (t1 >= sep_) {
          ++diag.discarded_late;
          continue;
        }
        const BlochVector e1 = electron_rotor_(trion, w_el * t1);
        pol1 = uni(rng) < emission_probabilities(e1).p_r ? Polarization::R : Polarization::L;
        ground = collapse_after_emission(pol1);
        t_ground = sep_ - t1;
        if (eta_ >= 1.0 || uni(rng) < eta_) {
          have1 = true;
          tag1 = t1 + (jitter_ > 0 ? jitter_ * gauss(rng) : 0.0);
        } else {
          ++diag.lost_detection;
        }
      } else {
        ground = uni(rng) < 0.5 ? up : down;
      }
      if (!have1 && dark1_ > 0.0 && uni(rng) < dark1_) {
        ++diag.dark_clicks;
        have1 = true;
        tag1 = uni(rng) * sep_;
        pol1 = uni(rng) < 0.5 ? Polarization::R : Polarization::L;
      }
      if (!have1) continue;

      ground = hole_rotor_(ground, w_hole * t_ground);

      bool have2 = false;
      double tag2 = 0.0;
      Polarization pol2 = Polarization::R;
      if (uni(rng) < p_exc_) {
        const BlochVector trion =
            map_excitation(ground, cfg_.pulses.pulse2_pol, cfg_.pulses.pulse2_phase_offset);
        const double t2 = decay(rng);
        const BlochVector e2 = electron_rotor_(trion, w_el * t2);
        pol2 = uni(rng) < emission_probabilities(e2).p_r ? Polarization::R : Polarization::L;
        if (eta_ >= 1.0 || uni(rng) < eta_) {
          have2 = true;
          tag2 = t2 + (jitter_ > 0 ? jitter_ * gauss(rng) : 0.0);
        } else {
          ++diag.lost_detection;
        }
      }
      if (!have2 && dark2_ > 0.0 && uni(rng) < dark2_) {
        ++diag.dark_clicks;
        have2 = true;
        tag2 = uni(rng) * window2_;
        pol2 = uni(rng) < 0.5 ? Polarization::R : Polarization::L;
      }
      if (!have2) continue;

      if (tag1 < 0.0 || tag1 >= sep_ || tag2 < 0.0 || tag2 >= window2_) {
        ++diag.discarded_misordered;
        continue;
      }
      // floor() keeps integer bin edges exact: tag in [a, b) <=> time in [a, b).
      out.push_back({rep, static_cast<std::uint32_t>(std::floor(tag1)),
                     static_cast<std::uint32_t>(std::floor(tag2)), pol1, pol2});
      ++diag.coincidences;
    }
    return diag;
  }

 private:
  const ExperimentConfig& cfg_;
  Rotor hole_rotor_;
  Rotor electron_rotor_;
  double mean_w_hole_;
  double mean_w_electron_;
  double sigma_w_hole_;
  double sigma_w_electron_;
  double sep_;
  double window2_;
  double p_exc_;
  double eta_;
  double jitter_;
  double dark1_;
  double dark2_;
  double lifetime_;
};

}  // namespace

SimDiagnostics simulate(const ExperimentConfig& config, std::uint64_t n_reps, const EventSink& sink,
                        const SimOptions& options) {
  if (n_reps == 0) throw DomainError("simulate: n_reps must be positive");
  if (options.partition_size == 0) throw DomainError("simulate: partition_size must be positive");
  config.validate();
  const PartitionRunner runner(config);
  const std::uint64_t n_parts = (n_reps + options.partition_size - 1) / options.partition_size;
  const unsigned threads = std::max(1u, options.threads);

  SimDiagnostics total;
  std::vector<std::vector<CoincidenceEvent>> buffers(threads);
  std::vector<SimDiagnostics> diags(threads);
  for (std::uint64_t base = 0; base < n_parts; base += threads) {
    const unsigned batch = static_cast<unsigned>(std::min<std::uint64_t>(threads, n_parts - base));
    auto work = [&](unsigned slot) {
      const std::uint64_t part = base + slot;
      const std::uint64_t first = part * options.partition_size;
      const std::uint64_t n = std::min(options.partition_size, n_reps - first);
      buffers[slot].clear();
      diags[slot] = runner.run(part, first, n, buffers[slot]);
    };
    if (batch == 1) {
      work(0);
    } else {
      std::vector<std::thread> pool;
      for (unsigned s = 0; s < batch; ++s) pool.emplace_back(work, s);
      for (auto& t : pool) t.join();
    }
    for (unsigned s = 0; s < batch; ++s) {
      total += diags[s];
      if (sink) sink(buffers[s]);
    }
  }
  return total;
}

std::vector<CoincidenceEvent> simulate(const ExperimentConfig& config, std::uint64_t n_reps,
                                       SimDiagnostics* diagnostics, const SimOptions& options) {
  std::vector<CoincidenceEvent> events;
  const SimDiagnostics d = simulate(
      config, n_reps,
      [&events](std::span<const CoincidenceEvent> part) {
        events.insert(events.end(), part.begin(), part.end());
      },
      options);
  if (diagnostics) *diagnostics = d;
  return events;
}

}  // namespace qdspin
