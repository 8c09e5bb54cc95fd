#pragma once

// Binary event files and their CSV twin.
//
// Binary layout (little-endian):
//   header  56 bytes: magic "QDTAG\0\0\1" | config digest (32) | n_events u64 | bin_resolution_ps u64
//   record  24 bytes: rep_index u64 | delta_t u32 | t_e u32 | pol1 u8 | pol2 u8 | 6 zero bytes

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qdspin/config.hpp"
#include "qdspin/simulate.hpp"

namespace qdspin {

inline constexpr std::array<char, 8> kEventMagic = {'Q', 'D', 'T', 'A', 'G', '\0', '\0', '\1'};
inline constexpr std::size_t kHeaderBytes = 56;
inline constexpr std::size_t kRecordBytes = 24;

struct EventFileHeader {
  Digest config_digest{};
  std::uint64_t n_events = 0;
  std::uint64_t bin_resolution = 1;  // ps

  bool operator==(const EventFileHeader&) const = default;
};

/// Optional range check applied by writers; records outside are rejected.
struct EventLimits {
  std::uint32_t delta_t_max = UINT32_MAX;  // exclusive
  std::uint32_t t_e_max = UINT32_MAX;      // exclusive
};

EventLimits limits_for(const ExperimentConfig& config);

/// Exclusive owner of an output file. The header count is patched on close.
class EventWriter {
 public:
  EventWriter(const std::filesystem::path& path, const EventFileHeader& header, EventLimits limits = {});
  EventWriter(const EventWriter&) = delete;
  EventWriter& operator=(const EventWriter&) = delete;
  ~EventWriter();

  /// Returns false (and counts a rejection) for an invalid record.
  bool write(const CoincidenceEvent& event);
  void write(std::span<const CoincidenceEvent> events);
  void close();

  std::uint64_t written() const { return written_; }
  std::uint64_t rejected() const { return rejected_; }

 private:
  void flush_buffer();

  std::filesystem::path path_;
  std::ofstream out_;
  EventFileHeader header_;
  EventLimits limits_;
  std::vector<char> buffer_;
  std::uint64_t written_ = 0;
  std::uint64_t rejected_ = 0;
  bool closed_ = false;
};

struct WriteSummary {
  std::uint64_t written = 0;
  std::uint64_t rejected = 0;
};

WriteSummary write_events(const std::filesystem::path& path, const EventFileHeader& header,
                          std::span<const CoincidenceEvent> events, EventLimits limits = {});

/// Streaming reader; holds one fixed-size chunk in memory.
class EventReader {
 public:
  explicit EventReader(const std::filesystem::path& path);

  const EventFileHeader& header() const { return header_; }
  /// Records actually present (complete ones); used in place of a mismatched header count.
  std::uint64_t record_count() const { return present_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  std::optional<CoincidenceEvent> next();
  /// Appends up to `max` events to `out`; returns how many were appended.
  std::size_t read_chunk(std::vector<CoincidenceEvent>& out, std::size_t max);
  /// Calls fn on successive chunks until the end of the file.
  void for_each_chunk(const std::function<void(std::span<const CoincidenceEvent>)>& fn,
                      std::size_t chunk = 1 << 16);

 private:
  bool fill();

  std::filesystem::path path_;
  std::ifstream in_;
  EventFileHeader header_;
  std::uint64_t present_ = 0;
  std::uint64_t consumed_ = 0;
  bool truncated_ = false;
  std::uintmax_t file_size_ = 0;
  std::vector<char> buffer_;
  std::size_t buf_pos_ = 0;
  std::size_t buf_len_ = 0;
  std::vector<std::string> warnings_;
};

struct EventFile {
  EventFileHeader header;
  std::vector<CoincidenceEvent> events;
  std::vector<std::string> warnings;
};

EventFile read_events(const std::filesystem::path& path);

/// CSV twin: `# qdtag-csv v1 config_digest=<hex> bin_resolution_ps=<n>`, then
/// `rep_index,delta_t_ps,t_e_ps,pol1,pol2` with polarizations as R/L.
void export_csv(const std::filesystem::path& path, const EventFileHeader& header,
                std::span<const CoincidenceEvent> events);
EventFile import_csv(const std::filesystem::path& path);

/// Converts a binary file to CSV while streaming.
void binary_to_csv(const std::filesystem::path& binary, const std::filesystem::path& csv);

Digest parse_digest_hex(const std::string& hex);

}  // namespace qdspin
