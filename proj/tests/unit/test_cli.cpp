#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "helpers.hpp"
#include "qdspin/config.hpp"
#include "qdspin/timetag_io.hpp"

using namespace qdspin;
namespace fs = std::filesystem;
using qdspin::app::run_cli;

namespace {

int run(std::vector<std::string> args) { return run_cli(args); }

std::size_t lines(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  std::string l;
  while (std::getline(in, l)) ++n;
  return n;
}

}  // namespace

TEST_CASE("simulate: usage errors and determinism") {
  auto dir = testutil::scratch("cli_sim");
  std::string a = (dir / "a.qdtag").string(), b = (dir / "b.qdtag").string(), c = (dir / "c.qdtag").string();
  CHECK(run({"simulate", "--reps", "0", "--out", a}) == 2);
  CHECK(run({"simulate", "--out", a}) == 2);
  CHECK(run({"simulate", "--reps", "100000", "--out", a}) == 0);
  CHECK(run({"simulate", "--reps", "100000", "--out", b, "--threads", "3"}) == 0);
  CHECK(testutil::slurp(a) == testutil::slurp(b));
  EventFile f = read_events(a);
  CHECK(f.events.size() <= 100000);
  CHECK(f.header.config_digest == config_digest(ExperimentConfig{}));
  CHECK(run({"simulate", "--reps", "1000", "--out", c, "--pulse2", "D", "--csv", (dir / "c.csv").string()}) == 0);
  ExperimentConfig d;
  d.pulses.pulse2_pol = LinearPolarization::D();
  CHECK(read_events(c).header.config_digest == config_digest(d));
  CHECK(import_csv(dir / "c.csv").events == read_events(c).events);
  CHECK(run({"simulate", "--reps", "10", "--out", c, "--pulse2", "X"}) == 2);
}

TEST_CASE("config errors exit 2, missing files exit 4, env var sets the default") {
  auto dir = testutil::scratch("cli_cfg");
  std::ofstream(dir / "bad.cfg") << "hole_g = 0.25\nnot_a_key = 3\n";
  CHECK(run({"simulate", "-c", (dir / "bad.cfg").string(), "--reps", "10", "--out", (dir / "x").string()}) == 2);
  CHECK(run({"simulate", "-c", (dir / "none.cfg").string(), "--reps", "10", "--out", (dir / "x").string()}) == 4);
  ExperimentConfig cfg;
  cfg.seed = 77;
  save_config(cfg, (dir / "env.cfg").string());
  ::setenv(app::kConfigEnv, (dir / "env.cfg").string().c_str(), 1);
  CHECK(run({"simulate", "--reps", "10", "--out", (dir / "e.qdtag").string()}) == 0);
  ::unsetenv(app::kConfigEnv);
  CHECK(read_events(dir / "e.qdtag").header.config_digest == config_digest(cfg));
  CHECK(run({"config", "--out", (dir / "dump.cfg").string()}) == 0);
  CHECK(load_config((dir / "dump.cfg").string()) == ExperimentConfig{});
}

TEST_CASE("correlate: rows, overflow and merge of split runs") {
  auto dir = testutil::scratch("cli_cor");
  std::string all = (dir / "all.qdtag").string();
  REQUIRE(run({"simulate", "--reps", "200000", "--out", all}) == 0);
  EventFile f = read_events(all);
  std::size_t half = f.events.size() / 2;
  std::span<const CoincidenceEvent> ev(f.events);
  write_events(dir / "p1.qdtag", f.header, ev.subspan(0, half));
  export_csv(dir / "p2.csv", f.header, ev.subspan(half));
  REQUIRE(run({"correlate", all, "--out", (dir / "m_all.csv").string()}) == 0);
  REQUIRE(run({"correlate", (dir / "p1.qdtag").string(), (dir / "p2.csv").string(), "--out",
               (dir / "m_split.csv").string()}) == 0);
  CHECK(testutil::slurp(dir / "m_all.csv") == testutil::slurp(dir / "m_split.csv"));
  CHECK(lines(dir / "m_all.csv") == 100 * 200 + 2);
  std::string head = testutil::slurp(dir / "m_all.csv").substr(0, 400);
  CHECK(head.find("overflow=") != std::string::npos);
  CHECK(head.find("config_digest=" + to_hex(config_digest(ExperimentConfig{}))) != std::string::npos);

  ExperimentConfig other;
  other.seed = 5;
  EventFileHeader h2 = f.header;
  h2.config_digest = config_digest(other);
  write_events(dir / "o.qdtag", h2, ev.subspan(0, 10));
  CHECK(run({"correlate", all, (dir / "o.qdtag").string(), "--out", (dir / "m.csv").string()}) == 2);
  CHECK(run({"correlate", all, (dir / "o.qdtag").string(), "--out", (dir / "m.csv").string(), "--allow-mismatch"}) == 0);
  std::ofstream(dir / "junk.qdtag") << "garbage";
  CHECK(run({"correlate", (dir / "junk.qdtag").string(), "--out", (dir / "m.csv").string()}) == 4);
}

TEST_CASE("fit: report, scan and analysis failure") {
  auto dir = testutil::scratch("cli_fit");
  std::string ev = (dir / "run.qdtag").string();
  REQUIRE(run({"simulate", "--reps", "3000000", "--out", ev, "--threads", "2"}) == 0);
  std::string rep = (dir / "fit.txt").string();
  REQUIRE(run({"fit", ev, "--slice", "horizontal", "--center", "48", "--channel", "co", "--out", rep}) == 0);
  std::string text = testutil::slurp(rep);
  for (const char* key : {"g = ", "t2_star_ps = ", "t_prec_ps = ", "config_digest = ", "converged = true"})
    CHECK(text.find(key) != std::string::npos);
  REQUIRE(run({"fit", ev, "--slice", "vertical", "--center", "32", "--width", "32", "--channel", "dcp", "--t-min", "48", "--t-max", "1552",
               "--reweight", "2", "--out", (dir / "v.txt").string()}) == 0);
  CHECK(testutil::slurp(dir / "v.txt").find("slice = vertical") != std::string::npos);
  std::string scan = (dir / "scan.csv").string();
  CHECK(run({"fit", ev, "--channel", "co", "--scan-start", "48", "--scan-end", "112", "--scan-step", "32",
             "--scan-out", scan, "--threads", "2"}) == 0);
  CHECK(lines(scan) == 2 + 3);
  CHECK(run({"fit", ev, "--channel", "XX", "--center", "48"}) == 2);
  CHECK(run({"fit", ev, "--channel", "co"}) == 2);

  // a handful of events cannot constrain the model
  EventFile f = read_events(ev);
  f.events.resize(3);
  write_events(dir / "tiny.qdtag", f.header, f.events);
  CHECK(run({"fit", (dir / "tiny.qdtag").string(), "--center", "48", "--channel", "RR"}) == 3);
}

TEST_CASE("tomo: outputs, digest checks and run report") {
  auto dir = testutil::scratch("cli_tomo");
  std::string out = (dir / "analytic").string();
  REQUIRE(run({"tomo", "--analytic", "--out-dir", out, "--sigma-scan", "--threads", "2"}) == 0);
  for (const char* name : {"trajectory.csv", "bloch_xz.svg", "bloch_xy.svg", "plane_report.txt",
                           "sigma_scan_h.csv", "sigma_scan_d.csv"})
    CHECK(fs::exists(fs::path(out) / name));
  CHECK(lines(fs::path(out) / "trajectory.csv") == 2 + 35);
  CHECK(testutil::slurp(fs::path(out) / "plane_report.txt").find("plane_tilt_deg = ") != std::string::npos);

  std::string h = (dir / "h.qdtag").string(), d = (dir / "d.qdtag").string();
  REQUIRE(run({"simulate", "--reps", "400000", "--out", h, "--pulse2", "H", "--threads", "2"}) == 0);
  REQUIRE(run({"simulate", "--reps", "400000", "--out", d, "--pulse2", "D", "--threads", "2"}) == 0);
  // swapped files carry the wrong digests
  CHECK(run({"tomo", "--events-h", d, "--events-d", h, "--out-dir", (dir / "bad").string()}) == 2);
  CHECK(run({"tomo", "--out-dir", (dir / "bad").string()}) == 2);

  CHECK(run({"report", (dir / "empty_missing").string()}) == 2);
  fs::create_directories(dir / "empty");
  CHECK(run({"report", (dir / "empty").string()}) == 2);
  REQUIRE(run({"report", out}) == 0);
  std::string first = testutil::slurp(fs::path(out) / "summary.txt");
  REQUIRE(run({"report", out}) == 0);
  CHECK(testutil::slurp(fs::path(out) / "summary.txt") == first);
  CHECK(first.find("config_digest = " + to_hex(config_digest(ExperimentConfig{}))) != std::string::npos);
  CHECK(first.find("seed = 20251014") != std::string::npos);
  CHECK(first.find("[plane_report.txt]") != std::string::npos);
  CHECK(first.find("g_hole = ") != std::string::npos);
}
