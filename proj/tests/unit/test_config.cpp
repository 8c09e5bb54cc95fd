#include <doctest.h>

#include <cmath>
#include <fstream>

#include "helpers.hpp"
#include "qdspin/config.hpp"
#include "qdspin/errors.hpp"

using namespace qdspin;

TEST_CASE("defaults") {
  ExperimentConfig c;
  CHECK(c.hole.g_factor == 0.254);
  CHECK(c.electron.g_factor == 0.10);
  CHECK(c.electron.t2_star == 700.0);
  CHECK(c.b_field == 1.2);
  CHECK(c.pulses.rep_period == 12500.0);
  CHECK(c.pulses.pulse_separation == 1600.0);
  CHECK(c.instrument.radiative_lifetime == 800.0);
  // 40 ps FWHM combined over two detectors would be sqrt(2) wider; here it is per detector
  CHECK(2.0 * std::sqrt(2.0 * std::log(2.0)) * c.instrument.jitter_sigma == doctest::Approx(40.0));
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("serialize then parse round trips") {
  ExperimentConfig c;
  c.hole.g_factor = 0.24;
  c.hole.t2_star = constants::infinity;
  c.hole_axis = {std::sin(0.3), std::cos(0.3), 0.0};
  c.pulses.pulse2_pol = LinearPolarization::D();
  c.pulses.pulse2_phase_offset = 0.01;
  c.precession_sign = -1;
  c.seed = 123456789012345ULL;
  c.instrument.dark_count_rate = 1e-9;
  std::string text = serialize_config(c);
  ExperimentConfig back = parse_config(text);
  CHECK(back == c);
  CHECK(serialize_config(back) == text);
  CHECK(back.hole_axis.x == c.hole_axis.x);
  CHECK(back.pulses.pulse2_pol.angle == LinearPolarization::D().angle);
  CHECK(std::isinf(back.hole.t2_star));
  CHECK(parse_config(serialize_config(back)) == back);
}

TEST_CASE("digest tracks every value") {
  ExperimentConfig a, b;
  CHECK(config_digest(a) == config_digest(b));
  b.seed += 1;
  CHECK(config_digest(a) != config_digest(b));
  b = a;
  b.pulses.pulse2_pol = LinearPolarization::D();
  CHECK(config_digest(a) != config_digest(b));
  CHECK(to_hex(config_digest(a)).size() == 64);
}

TEST_CASE("comments and blank lines are ignored") {
  ExperimentConfig c = parse_config("# header\n\nhole_g = 0.24   # trailing\n\n");
  CHECK(c.hole.g_factor == 0.24);
  CHECK(c.electron.g_factor == 0.10);
}

TEST_CASE("errors name the key and the line") {
  auto expect = [](const std::string& text, const std::string& key, int line) {
    try {
      parse_config(text);
      FAIL("accepted: " << text);
    } catch (const ConfigError& e) {
      CHECK(e.key() == key);
      CHECK(e.line() == line);
      CHECK(std::string(e.what()).find("line " + std::to_string(line)) != std::string::npos);
    }
  };
  expect("hole_g = 0.25\nbogus_key = 1\n", "bogus_key", 2);
  expect("\n\nhole_g = abc\n", "hole_g", 3);
  expect("hole_g = 0.2\nhole_g = 0.3\n", "hole_g", 2);
  expect("seed = -4\n", "seed", 1);
  expect("# c\nhole_axis = 0 2 0\n", "hole_axis", 2);
  expect("excitation_prob = 1.5\n", "excitation_prob", 1);
  expect("b_field_tesla = 1\nelectron_g = -0.1\n", "electron_g", 2);
  expect("just words\n", "", 1);
}

TEST_CASE("file round trip") {
  auto dir = testutil::scratch("config");
  ExperimentConfig c;
  c.hole.g_factor = 0.24;
  save_config(c, (dir / "a.cfg").string());
  CHECK(load_config((dir / "a.cfg").string()) == c);
  CHECK_THROWS_AS(load_config((dir / "missing.cfg").string()), IoError);
}
