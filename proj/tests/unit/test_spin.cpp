#include <doctest.h>

#include <cmath>
#include <random>

#include "qdspin/errors.hpp"
#include "qdspin/spin.hpp"

using namespace qdspin;

namespace {

bool close(const BlochVector& a, const BlochVector& b, double tol) {
  return std::abs(a.sx - b.sx) < tol && std::abs(a.sy - b.sy) < tol && std::abs(a.sz - b.sz) < tol;
}

}  // namespace

TEST_CASE("larmor period of the hole and electron at 1.2 T") {
  double th = larmor_period(0.254, 1.2);
  double te = larmor_period(0.10, 1.2);
  CHECK(th == doctest::Approx(234.4).epsilon(2e-3));
  CHECK(te == doctest::Approx(595.4).epsilon(2e-3));
  CHECK(te == doctest::Approx(th * 2.54).epsilon(1e-12));
  CHECK_THROWS_AS(larmor_period(0.0, 1.2), DomainError);
  CHECK_THROWS_AS(larmor_period(0.2, 0.0), DomainError);
}

TEST_CASE("zero field disables precession") {
  SpinSpecies s{0.254, constants::infinity, SpinLabel::hole};
  FieldConfig f{0.0, {0, 1, 0}, +1};
  CHECK(angular_frequency(s, f) == 0.0);
  BlochVector v{0.3, 0.4, 0.5};
  CHECK(evolve(v, 1234.0, s, f) == v);
}

TEST_CASE("quarter turn about +y sends +z to +x") {
  BlochVector r = precess({0, 0, 1}, {0, 1, 0}, constants::pi / 2);
  CHECK(close(r, {1, 0, 0}, 1e-15));
  SpinSpecies s{0.254, constants::infinity, SpinLabel::hole};
  FieldConfig f{1.2, {0, 1, 0}, +1};
  double quarter = larmor_period(0.254, 1.2) / 4;
  CHECK(close(evolve({0, 0, 1}, quarter, s, f), {1, 0, 0}, 1e-12));
  f.precession_sign = -1;
  CHECK(close(evolve({0, 0, 1}, quarter, s, f), {-1, 0, 0}, 1e-12));
}

TEST_CASE("precession preserves the norm and the axial component") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 1000; ++i) {
    Vec3 ax{u(rng), u(rng), u(rng)};
    ax = ax * (1.0 / norm(ax));
    BlochVector v{u(rng), u(rng), u(rng)};
    double a = 10 * u(rng);
    BlochVector r = precess(v, ax, a);
    CHECK(r.norm() == doctest::Approx(v.norm()).epsilon(1e-12));
    CHECK(dot(r.vec(), ax) == doctest::Approx(dot(v.vec(), ax)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(precess({0, 0, 1}, {0, 2, 0}, 1.0), DomainError);
}

TEST_CASE("full period returns the spin") {
  SpinSpecies s{0.10, constants::infinity, SpinLabel::electron};
  FieldConfig f{1.2, {0, 1, 0}, +1};
  BlochVector v{0.2, -0.3, 0.9};
  CHECK(close(evolve(v, larmor_period(0.10, 1.2), s, f), v, 1e-12));
}

TEST_CASE("gaussian envelope is exp(-(t/T2*)^2) and composes across steps") {
  SpinSpecies s{0.254, 700.0, SpinLabel::hole};
  FieldConfig f{1.2, {0, 1, 0}, +1};
  double tp = larmor_period(0.254, 1.2);
  BlochVector one = evolve({0, 0, 1}, 2 * tp, s, f);
  CHECK(one.sz == doctest::Approx(std::exp(-std::pow(2 * tp / 700.0, 2))).epsilon(1e-12));
  BlochVector a = evolve({0, 0, 1}, 100.0, s, f);
  BlochVector b = evolve(a, 2 * tp - 100.0, s, f, Dephasing::ensemble, 100.0);
  CHECK(close(b, one, 1e-12));
  // y is the axis: the parallel component never decays
  BlochVector y = evolve({0, 1, 0}, 5000.0, s, f);
  CHECK(y.sy == doctest::Approx(1.0));
  CHECK(evolve({0, 0, 1}, 2 * tp, s, f, Dephasing::none).sz == doctest::Approx(1.0));
}

TEST_CASE("excitation mapping") {
  BlochVector v{0.1, 0.2, 0.3};
  CHECK(map_excitation(v, LinearPolarization::H()) == v);
  BlochVector d = map_excitation(v, LinearPolarization::D());
  CHECK(d == BlochVector{-0.2, 0.1, 0.3});
  BlochVector x = v;
  for (int i = 0; i < 4; ++i) x = map_excitation(x, LinearPolarization::D());
  CHECK(x == v);
  BlochVector off = map_excitation(v, LinearPolarization::D(), 0.1);
  CHECK(off.norm() == doctest::Approx(v.norm()));
  CHECK(off.sz == v.sz);
}

TEST_CASE("selection rules") {
  auto p = emission_probabilities({0, 0, 1});
  CHECK(p.p_r == 1.0);
  CHECK(p.p_l == 0.0);
  p = emission_probabilities({1, 0, 0});
  CHECK(p.p_r == 0.5);
  p = emission_probabilities({0, 0, -0.4});
  CHECK(p.p_r - p.p_l == doctest::Approx(-0.4));
  CHECK_THROWS_AS(emission_probabilities({0, 0, 1.1}), DomainError);
  CHECK(collapse_after_emission(Polarization::R) == BlochVector{0, 0, 1});
  CHECK(collapse_after_emission(Polarization::L) == BlochVector{0, 0, -1});
  CHECK_THROWS_AS(collapse_after_emission(Polarization::H), DomainError);
}
