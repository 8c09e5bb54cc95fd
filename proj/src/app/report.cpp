#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "qdspin/errors.hpp"

namespace fs = std::filesystem;

namespace qdspin::app {

namespace {

constexpr const char* kSummaryName = "summary.txt";

std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

// Pulls "key=value" tokens out of a metadata comment line.
void scan_tokens(const std::string& line, std::map<std::string, std::string>& kv) {
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) {
    auto eq = tok.find('=');
    if (eq == std::string::npos || eq == 0) continue;
    kv.emplace(tok.substr(0, eq), tok.substr(eq + 1));
  }
}

struct Entry {
  std::string name;
  std::uintmax_t bytes = 0;
  std::map<std::string, std::string> meta;   // provenance keys
  std::vector<std::string> lines;            // report body for .txt files
  std::size_t data_rows = 0;                 // for .csv files
};

Entry inspect(const fs::path& p) {
  Entry e;
  e.name = p.filename().string();
  e.bytes = fs::file_size(p);
  std::ifstream in(p);
  if (!in) throw IoError("cannot open '" + p.string() + "'");
  std::string ext = p.extension().string();
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (ext == ".csv") {
      if (!line.empty() && line[0] == '#') {
        scan_tokens(line.substr(1), e.meta);
      } else if (!header_seen) {
        header_seen = true;
      } else if (!line.empty()) {
        ++e.data_rows;
      }
    } else if (ext == ".txt") {
      if (line.empty() || line[0] == '#') continue;
      auto eq = line.find(" = ");
      if (eq != std::string::npos) {
        std::string k = trim(line.substr(0, eq));
        std::string v = trim(line.substr(eq + 3));
        if (k == "config_digest" || k == "seed" || k == "version") {
          e.meta.emplace(k, v);
          continue;
        }
      }
      e.lines.push_back(line);
    }
  }
  return e;
}

}  // namespace

int run_report(const std::string& dir) {
  fs::path root(dir);
  if (!fs::is_directory(root)) {
    std::cerr << "error: '" << dir << "' is not a directory\n";
    return kUsage;
  }
  std::vector<fs::path> files;
  for (const auto& de : fs::directory_iterator(root)) {
    if (!de.is_regular_file()) continue;
    std::string name = de.path().filename().string();
    if (name == kSummaryName) continue;
    std::string ext = de.path().extension().string();
    if (ext == ".txt" || ext == ".csv" || ext == ".svg") files.push_back(de.path());
  }
  if (files.empty()) {
    std::cerr << "error: no reports or CSV outputs in '" << dir << "'\n";
    return kUsage;
  }
  std::sort(files.begin(), files.end());

  std::vector<Entry> entries;
  for (const auto& f : files) entries.push_back(inspect(f));

  std::set<std::string> digests, seeds, versions;
  for (const auto& e : entries) {
    if (auto it = e.meta.find("config_digest"); it != e.meta.end()) digests.insert(it->second);
    if (auto it = e.meta.find("seed"); it != e.meta.end()) seeds.insert(it->second);
    if (auto it = e.meta.find("version"); it != e.meta.end()) versions.insert(it->second);
  }
  auto joined = [](const std::set<std::string>& s) {
    if (s.empty()) return std::string("unknown");
    std::string out;
    for (const auto& x : s) out += (out.empty() ? "" : ",") + x;
    return out;
  };

  std::ostringstream os;
  os << "# qdspin run summary\n";
  os << "config_digest = " << joined(digests) << "\n";
  os << "seed = " << joined(seeds) << "\n";
  os << "version = " << joined(versions) << "\n";
  if (digests.size() > 1) os << "warning = outputs carry different config digests\n";
  os << "files = " << entries.size() << "\n";
  for (const auto& e : entries) {
    os << "\n[" << e.name << "]\n";
    os << "bytes = " << e.bytes << "\n";
    if (e.name.ends_with(".csv")) os << "rows = " << e.data_rows << "\n";
    for (const auto& l : e.lines) os << l << "\n";
  }
  fs::path out = root / kSummaryName;
  std::ofstream f(out);
  if (!f) {
    std::cerr << "I/O error: cannot write '" << out.string() << "'\n";
    return kIo;
  }
  f << os.str();
  std::cout << "wrote " << out.string() << " (" << entries.size() << " inputs)\n";
  return kOk;
}

}  // namespace qdspin::app
