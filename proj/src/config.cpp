#include "qdspin/config.hpp"

#include <openssl/evp.h>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <vector>

#include "qdspin/errors.hpp"

namespace qdspin {

namespace {

std::string fmt_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  // Prefer the shortest representation that round-trips.
  for (int prec = 1; prec <= 17; ++prec) {
    char shortbuf[32];
    std::snprintf(shortbuf, sizeof shortbuf, "%.*g", prec, v);
    if (std::strtod(shortbuf, nullptr) == v) return shortbuf;
  }
  return buf;
}

double parse_double(const std::string& s, const std::string& key, int line) {
  if (s == "inf" || s == "+inf") return constants::infinity;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || std::isnan(v)) {
    throw ConfigError("line " + std::to_string(line) + ": '" + key +
                          "' expects a number, got '" + s + "'",
                      key, line);
  }
  return v;
}

std::string fmt_pol(LinearPolarization p) {
  if (p.angle == LinearPolarization::H().angle) return "H";
  if (p.angle == LinearPolarization::D().angle) return "D";
  return fmt_double(p.angle);
}

LinearPolarization parse_pol(const std::string& s, const std::string& key, int line) {
  if (s == "H") return LinearPolarization::H();
  if (s == "D") return LinearPolarization::D();
  return {parse_double(s, key, line)};
}

std::string fmt_vec(const Vec3& v) {
  return fmt_double(v.x) + " " + fmt_double(v.y) + " " + fmt_double(v.z);
}

Vec3 parse_unit_vec(const std::string& s, const std::string& key, int line) {
  std::istringstream in(s);
  std::string a, b, c, extra;
  if (!(in >> a >> b >> c) || (in >> extra)) {
    throw ConfigError("line " + std::to_string(line) + ": '" + key +
                          "' expects three components",
                      key, line);
  }
  Vec3 v{parse_double(a, key, line), parse_double(b, key, line), parse_double(c, key, line)};
  const double n = norm(v);
  if (std::abs(n - 1.0) > 1e-6) {
    throw ConfigError("line " + std::to_string(line) + ": '" + key + "' must be a unit vector",
                      key, line);
  }
  return std::abs(n - 1.0) > 1e-15 ? v * (1.0 / n) : v;
}

struct Key {
  const char* name;
  const char* comment;  // section header emitted before this key, or nullptr
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&, int)> set;
};

const std::vector<Key>& keys() {
  static const std::vector<Key> table = [] {
    std::vector<Key> k;
    auto add_num = [&k](const char* name, const char* comment, auto ref) {
      k.push_back({name, comment,
                   [ref](const ExperimentConfig& c) { return fmt_double(ref(c)); },
                   [ref, name](ExperimentConfig& c, const std::string& v, int line) {
                     ref(c) = parse_double(v, name, line);
                   }});
    };
    add_num("b_field_tesla", "Magnetic field (Voigt geometry)",
            [](auto& c) -> auto& { return c.b_field; });
    k.push_back({"precession_sign", nullptr,
                 [](const ExperimentConfig& c) { return std::to_string(c.precession_sign); },
                 [](ExperimentConfig& c, const std::string& v, int line) {
                   if (v == "1" || v == "+1") c.precession_sign = 1;
                   else if (v == "-1") c.precession_sign = -1;
                   else throw ConfigError("line " + std::to_string(line) +
                                              ": 'precession_sign' must be +1 or -1",
                                          "precession_sign", line);
                 }});
    k.push_back({"hole_axis", nullptr,
                 [](const ExperimentConfig& c) { return fmt_vec(c.hole_axis); },
                 [](ExperimentConfig& c, const std::string& v, int line) {
                   c.hole_axis = parse_unit_vec(v, "hole_axis", line);
                 }});
    k.push_back({"electron_axis", nullptr,
                 [](const ExperimentConfig& c) { return fmt_vec(c.electron_axis); },
                 [](ExperimentConfig& c, const std::string& v, int line) {
                   c.electron_axis = parse_unit_vec(v, "electron_axis", line);
                 }});
    add_num("hole_g", "Ground-state hole", [](auto& c) -> auto& { return c.hole.g_factor; });
    add_num("hole_t2_star_ps", nullptr, [](auto& c) -> auto& { return c.hole.t2_star; });
    add_num("electron_g", "Trion electron",
            [](auto& c) -> auto& { return c.electron.g_factor; });
    add_num("electron_t2_star_ps", nullptr,
            [](auto& c) -> auto& { return c.electron.t2_star; });
    add_num("rep_period_ps", "Pulse sequence",
            [](auto& c) -> auto& { return c.pulses.rep_period; });
    add_num("pulse_separation_ps", nullptr,
            [](auto& c) -> auto& { return c.pulses.pulse_separation; });
    k.push_back({"pulse1_pol", nullptr,
                 [](const ExperimentConfig& c) { return fmt_pol(c.pulses.pulse1_pol); },
                 [](ExperimentConfig& c, const std::string& v, int line) {
                   c.pulses.pulse1_pol = parse_pol(v, "pulse1_pol", line);
                 }});
    k.push_back({"pulse2_pol", nullptr,
                 [](const ExperimentConfig& c) { return fmt_pol(c.pulses.pulse2_pol); },
                 [](ExperimentConfig& c, const std::string& v, int line) {
                   c.pulses.pulse2_pol = parse_pol(v, "pulse2_pol", line);
                 }});
    add_num("pulse2_phase_offset_rad", nullptr,
            [](auto& c) -> auto& { return c.pulses.pulse2_phase_offset; });
    add_num("excitation_prob", nullptr,
            [](auto& c) -> auto& { return c.pulses.excitation_prob; });
    add_num("radiative_lifetime_ps", "Instrument",
            [](auto& c) -> auto& { return c.instrument.radiative_lifetime; });
    add_num("jitter_sigma_ps", nullptr,
            [](auto& c) -> auto& { return c.instrument.jitter_sigma; });
    add_num("detection_efficiency", nullptr,
            [](auto& c) -> auto& { return c.instrument.detection_efficiency; });
    add_num("dark_count_rate_per_ps", nullptr,
            [](auto& c) -> auto& { return c.instrument.dark_count_rate; });
    k.push_back({"seed", "Random number generation",
                 [](const ExperimentConfig& c) { return std::to_string(c.seed); },
                 [](ExperimentConfig& c, const std::string& v, int line) {
                   std::uint64_t s = 0;
                   auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), s);
                   if (ec != std::errc{} || p != v.data() + v.size()) {
                     throw ConfigError("line " + std::to_string(line) +
                                           ": 'seed' expects an unsigned integer",
                                       "seed", line);
                   }
                   c.seed = s;
                 }});
    return k;
  }();
  return table;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void PulseSequence::validate() const {
  if (!(rep_period > 0.0)) throw ConfigError("rep_period_ps must be positive", "rep_period_ps", 0);
  if (!(pulse_separation > 0.0 && pulse_separation < rep_period)) {
    throw ConfigError("pulse_separation_ps must lie in (0, rep_period_ps)", "pulse_separation_ps", 0);
  }
  if (!(excitation_prob > 0.0 && excitation_prob <= 1.0)) {
    throw ConfigError("excitation_prob must lie in (0, 1]", "excitation_prob", 0);
  }
  if (!std::isfinite(pulse2_phase_offset) || !std::isfinite(pulse1_pol.angle) ||
      !std::isfinite(pulse2_pol.angle)) {
    throw ConfigError("pulse angles must be finite", "pulse2_pol", 0);
  }
}

void InstrumentModel::validate() const {
  if (!(radiative_lifetime > 0.0) || !std::isfinite(radiative_lifetime)) {
    throw ConfigError("radiative_lifetime_ps must be positive", "radiative_lifetime_ps", 0);
  }
  if (!(jitter_sigma >= 0.0) || !std::isfinite(jitter_sigma)) {
    throw ConfigError("jitter_sigma_ps must be non-negative", "jitter_sigma_ps", 0);
  }
  if (!(detection_efficiency >= 0.0 && detection_efficiency <= 1.0)) {
    throw ConfigError("detection_efficiency must lie in [0, 1]", "detection_efficiency", 0);
  }
  if (!(dark_count_rate >= 0.0) || !std::isfinite(dark_count_rate)) {
    throw ConfigError("dark_count_rate_per_ps must be non-negative", "dark_count_rate_per_ps", 0);
  }
}

void ExperimentConfig::validate() const {
  auto species = [](const SpinSpecies& s, const char* gkey, const char* tkey) {
    if (!(s.g_factor > 0.0) || !std::isfinite(s.g_factor)) {
      throw ConfigError(std::string(gkey) + " must be positive", gkey, 0);
    }
    if (!(s.t2_star > 0.0)) throw ConfigError(std::string(tkey) + " must be positive", tkey, 0);
  };
  species(hole, "hole_g", "hole_t2_star_ps");
  species(electron, "electron_g", "electron_t2_star_ps");
  if (!(b_field >= 0.0) || !std::isfinite(b_field)) {
    throw ConfigError("b_field_tesla must be non-negative", "b_field_tesla", 0);
  }
  if (std::abs(norm(hole_axis) - 1.0) > 1e-12) throw ConfigError("hole_axis must be unit", "hole_axis", 0);
  if (std::abs(norm(electron_axis) - 1.0) > 1e-12) {
    throw ConfigError("electron_axis must be unit", "electron_axis", 0);
  }
  pulses.validate();
  instrument.validate();
}

std::string serialize_config(const ExperimentConfig& config) {
  std::string out = "# qdspin experiment configuration (key = value; '#' starts a comment)\n";
  for (const Key& k : keys()) {
    if (k.comment) {
      out += "\n# ";
      out += k.comment;
      out += "\n";
    }
    out += k.name;
    out += " = ";
    out += k.get(config);
    out += "\n";
  }
  return out;
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string content = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (content.empty()) continue;
    const auto eq = content.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line) + ": expected 'key = value'", "", line);
    }
    const std::string key = trim(content.substr(0, eq));
    const std::string value = trim(content.substr(eq + 1));
    const Key* spec = nullptr;
    for (const Key& k : keys()) {
      if (key == k.name) spec = &k;
    }
    if (!spec) throw ConfigError("line " + std::to_string(line) + ": unknown key '" + key + "'", key, line);
    if (!seen.insert(key).second) {
      throw ConfigError("line " + std::to_string(line) + ": duplicate key '" + key + "'", key, line);
    }
    spec->set(cfg, value, line);
  }
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    // Attach the line where the offending key was set, if it was.
    std::istringstream again(text);
    int l = 0;
    while (std::getline(again, raw)) {
      ++l;
      const std::string content = trim(raw.substr(0, raw.find('#')));
      if (content.rfind(e.key(), 0) == 0) {
        throw ConfigError("line " + std::to_string(l) + ": " + e.what(), e.key(), l);
      }
    }
    throw;
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void save_config(const ExperimentConfig& config, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config file '" + path + "'");
  out << serialize_config(config);
  if (!out) throw IoError("write failed for '" + path + "'");
}

Digest config_digest(const ExperimentConfig& config) {
  const std::string text = serialize_config(config);
  Digest d{};
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), d.data(), &len, EVP_sha256(), nullptr) != 1 ||
      len != d.size()) {
    throw std::runtime_error("SHA-256 computation failed");
  }
  return d;
}

std::string to_hex(const Digest& d) {
  static const char* hex = "0123456789abcdef";
  std::string s;
  s.reserve(64);
  for (auto b : d) {
    s += hex[b >> 4];
    s += hex[b & 15];
  }
  return s;
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  return serialize_config(a) == serialize_config(b);
}

}  // namespace qdspin
