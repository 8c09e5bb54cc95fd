#include <doctest.h>

#include <cmath>

#include "qdspin/correlate.hpp"
#include "qdspin/forward_model.hpp"
#include "qdspin/simulate.hpp"

using namespace qdspin;

TEST_CASE("point intensity matches the closed form without dephasing") {
  ExperimentConfig cfg;
  cfg.hole.t2_star = constants::infinity;
  cfg.electron.t2_star = constants::infinity;
  double tau = 800.0, T = 1600.0;
  double wh = 2 * constants::pi / larmor_period(0.254, 1.2);
  double we = 2 * constants::pi / larmor_period(0.10, 1.2);
  for (double dt : {10.0, 300.0, 1500.0}) {
    for (double te : {0.0, 200.0, 900.0}) {
      double dens = std::exp(-dt / tau) / tau * std::exp(-te / tau) / tau;
      // heralded +z precesses about y for T - dt, pulse 2 H is the identity, electron precesses for te
      double szz = std::cos(wh * (T - dt)) * std::cos(we * te) - std::sin(wh * (T - dt)) * std::sin(we * te);
      double rr = 0.25 * 0.25 * dens * (1 + szz);
      double rl = 0.25 * 0.25 * dens * (1 - szz);
      CHECK(analytic_coincidence_intensity(cfg, dt, te, Polarization::R, Polarization::R) ==
            doctest::Approx(rr).epsilon(1e-12));
      CHECK(analytic_coincidence_intensity(cfg, dt, te, Polarization::R, Polarization::L) ==
            doctest::Approx(rl).epsilon(1e-12));
      CHECK(analytic_coincidence_intensity(cfg, dt, te, Polarization::L, Polarization::L) ==
            doctest::Approx(rr).epsilon(1e-12));
    }
  }
  CHECK(analytic_coincidence_intensity(cfg, -1.0, 10.0, Polarization::R, Polarization::R) == 0.0);
  CHECK(analytic_coincidence_intensity(cfg, 10.0, 11000.0, Polarization::R, Polarization::R) == 0.0);
}

TEST_CASE("total expected coincidences") {
  ExperimentConfig cfg;
  cfg.instrument.jitter_sigma = 0.0;
  double total = 0.0;
  for (Polarization a : {Polarization::R, Polarization::L})
    for (Polarization b : {Polarization::R, Polarization::L})
      total += expected_counts(cfg, 1.0, 0.0, 1600.0, 0.0, 10900.0, a, b);
  double ref = 0.25 * (1 - std::exp(-2.0)) * (1 - std::exp(-10900.0 / 800.0));
  CHECK(total == doctest::Approx(ref).epsilon(1e-6));
}

TEST_CASE("expected map bins equal expected_counts") {
  ExperimentConfig cfg;
  MapGeometry g;
  g.bin_width = 64;
  g.delta_t_hi = 1600;
  g.t_e_hi = 1280;
  IntensityMap m = expected_map(cfg, 1e6, g);
  for (std::size_t r : {0u, 7u, 24u}) {
    for (std::size_t k : {0u, 3u, 19u}) {
      double lo = 64.0 * r, klo = 64.0 * k;
      CHECK(m.at(Channel::RL, r, k) ==
            doctest::Approx(expected_counts(cfg, 1e6, lo, lo + 64, klo, klo + 64, Polarization::R,
                                            Polarization::L)).epsilon(1e-12));
    }
  }
}

TEST_CASE("monte carlo histogram agrees with the analytic map") {
  ExperimentConfig cfg;
  MapGeometry g;
  g.bin_width = 64;
  g.delta_t_hi = 1600;
  g.t_e_hi = 3200;
  const double reps = 2e6;
  auto ev = simulate(cfg, static_cast<std::uint64_t>(reps), nullptr, {2, 1u << 18});
  CorrelationMap mc = build_map(ev, g);
  IntensityMap ex = expected_map(cfg, reps, g);
  double chi2 = 0.0;
  int n = 0;
  double worst = 0.0;
  for (Channel c : kChannels) {
    for (std::size_t r = 0; r < ex.rows(); ++r) {
      for (std::size_t k = 0; k < ex.cols(); ++k) {
        double mu = ex.at(c, r, k);
        if (mu < 100.0) continue;
        double z = (static_cast<double>(mc.at(c, r, k)) - mu) / std::sqrt(mu);
        chi2 += z * z;
        worst = std::max(worst, std::abs(z));
        ++n;
      }
    }
  }
  REQUIRE(n > 500);
  CHECK(worst < 5.0);
  // chi2/n for n ~ 1000 has sd sqrt(2/n) ~ 0.045
  CHECK(chi2 / n == doctest::Approx(1.0).epsilon(0.2));
}

TEST_CASE("jitter conserves counts away from the edges") {
  ExperimentConfig a, b;
  b.instrument.jitter_sigma = 0.0;
  double ca = expected_counts(a, 1.0, 400, 1200, 200, 2000, Polarization::R, Polarization::R);
  double cb = expected_counts(b, 1.0, 400, 1200, 200, 2000, Polarization::R, Polarization::R);
  CHECK(ca == doctest::Approx(cb).epsilon(0.01));
}
