#pragma once

#include <filesystem>
#include <random>
#include <string>

namespace testutil {

/// Fresh scratch directory under the test working directory.
inline std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::current_path() / ("scratch_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace testutil
