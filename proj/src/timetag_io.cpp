#include "qdspin/timetag_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <sstream>

#include "qdspin/errors.hpp"

namespace qdspin {

namespace {

constexpr std::size_t kChunkRecords = 4096;

template <class T>
void put_le(char* p, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) p[i] = static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff);
}

template <class T>
T get_le(const char* p) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return static_cast<T>(v);
}

std::array<char, kHeaderBytes> encode_header(const EventFileHeader& h) {
  std::array<char, kHeaderBytes> b{};
  std::memcpy(b.data(), kEventMagic.data(), 8);
  std::memcpy(b.data() + 8, h.config_digest.data(), 32);
  put_le<std::uint64_t>(b.data() + 40, h.n_events);
  put_le<std::uint64_t>(b.data() + 48, h.bin_resolution);
  return b;
}

std::uint8_t pol_byte(Polarization p) {
  switch (p) {
    case Polarization::R: return 0;
    case Polarization::L: return 1;
    default: return 0xff;
  }
}

void encode_record(char* p, const CoincidenceEvent& e) {
  std::memset(p, 0, kRecordBytes);
  put_le<std::uint64_t>(p, e.rep_index);
  put_le<std::uint32_t>(p + 8, e.delta_t);
  put_le<std::uint32_t>(p + 12, e.t_e);
  p[16] = static_cast<char>(pol_byte(e.pol1));
  p[17] = static_cast<char>(pol_byte(e.pol2));
}

std::string offset_text(std::uint64_t off) { return "byte offset " + std::to_string(off); }

std::string pol_letter(Polarization p) { return p == Polarization::R ? "R" : "L"; }

}  // namespace

EventLimits limits_for(const ExperimentConfig& config) {
  const auto& ps = config.pulses;
  return {static_cast<std::uint32_t>(std::ceil(ps.pulse_separation)),
          static_cast<std::uint32_t>(std::ceil(ps.rep_period - ps.pulse_separation))};
}

// ---- writer -----------------------------------------------------------------

EventWriter::EventWriter(const std::filesystem::path& path, const EventFileHeader& header, EventLimits limits)
    : path_(path), header_(header), limits_(limits) {
  out_.open(path, std::ios::binary | std::ios::trunc);
  if (!out_) throw IoError("cannot open '" + path.string() + "' for writing");
  header_.n_events = 0;
  auto h = encode_header(header_);
  out_.write(h.data(), static_cast<std::streamsize>(h.size()));
  if (!out_) throw IoError("write failed on '" + path.string() + "'");
  buffer_.reserve(kChunkRecords * kRecordBytes);
}

EventWriter::~EventWriter() {
  try {
    close();
  } catch (...) {
    // destructor must not throw; explicit close() reports errors
  }
}

bool EventWriter::write(const CoincidenceEvent& e) {
  if (closed_) throw IoError("write to closed event file '" + path_.string() + "'");
  bool ok = pol_byte(e.pol1) <= 1 && pol_byte(e.pol2) <= 1 && e.delta_t < limits_.delta_t_max &&
            e.t_e < limits_.t_e_max;
  if (!ok) {
    ++rejected_;
    return false;
  }
  std::size_t at = buffer_.size();
  buffer_.resize(at + kRecordBytes);
  encode_record(buffer_.data() + at, e);
  ++written_;
  if (buffer_.size() >= kChunkRecords * kRecordBytes) flush_buffer();
  return true;
}

void EventWriter::write(std::span<const CoincidenceEvent> events) {
  for (const auto& e : events) write(e);
}

void EventWriter::flush_buffer() {
  if (buffer_.empty()) return;
  out_.write(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
  if (!out_) throw IoError("write failed on '" + path_.string() + "'");
  buffer_.clear();
}

void EventWriter::close() {
  if (closed_) return;
  closed_ = true;
  flush_buffer();
  header_.n_events = written_;
  auto h = encode_header(header_);
  out_.seekp(0);
  out_.write(h.data(), static_cast<std::streamsize>(h.size()));
  out_.close();
  if (!out_) throw IoError("failed to finalize '" + path_.string() + "'");
}

WriteSummary write_events(const std::filesystem::path& path, const EventFileHeader& header,
                          std::span<const CoincidenceEvent> events, EventLimits limits) {
  EventWriter w(path, header, limits);
  w.write(events);
  w.close();
  return {w.written(), w.rejected()};
}

// ---- reader -----------------------------------------------------------------

EventReader::EventReader(const std::filesystem::path& path) : path_(path) {
  std::error_code ec;
  file_size_ = std::filesystem::file_size(path, ec);
  if (ec) throw IoError("cannot stat '" + path.string() + "': " + ec.message());
  in_.open(path, std::ios::binary);
  if (!in_) throw IoError("cannot open '" + path.string() + "'");
  if (file_size_ < kHeaderBytes)
    throw FormatError("'" + path.string() + "': truncated header at " + offset_text(file_size_));
  std::array<char, kHeaderBytes> h{};
  in_.read(h.data(), static_cast<std::streamsize>(h.size()));
  if (!in_) throw IoError("read failed on '" + path.string() + "'");
  if (!std::equal(kEventMagic.begin(), kEventMagic.end(), h.begin()))
    throw FormatError("'" + path.string() + "': bad magic, not a qdtag event file");
  std::memcpy(header_.config_digest.data(), h.data() + 8, 32);
  header_.n_events = get_le<std::uint64_t>(h.data() + 40);
  header_.bin_resolution = get_le<std::uint64_t>(h.data() + 48);

  std::uintmax_t body = file_size_ - kHeaderBytes;
  present_ = body / kRecordBytes;
  truncated_ = body % kRecordBytes != 0;
  if (header_.n_events != present_) {
    warnings_.push_back("'" + path.string() + "': header declares " + std::to_string(header_.n_events) +
                        " events but " + std::to_string(present_) + " records are present; using " +
                        std::to_string(present_));
  }
  buffer_.resize(kChunkRecords * kRecordBytes);
}

bool EventReader::fill() {
  std::uint64_t remaining = present_ - consumed_;
  if (remaining == 0) {
    if (truncated_)
      throw FormatError("'" + path_.string() + "': truncated record at " +
                        offset_text(kHeaderBytes + present_ * kRecordBytes));
    return false;
  }
  std::size_t n = static_cast<std::size_t>(std::min<std::uint64_t>(remaining, kChunkRecords));
  in_.read(buffer_.data(), static_cast<std::streamsize>(n * kRecordBytes));
  if (static_cast<std::size_t>(in_.gcount()) != n * kRecordBytes)
    throw FormatError("'" + path_.string() + "': truncated record at " +
                      offset_text(kHeaderBytes + consumed_ * kRecordBytes + static_cast<std::uint64_t>(in_.gcount())));
  buf_pos_ = 0;
  buf_len_ = n;
  return true;
}

std::optional<CoincidenceEvent> EventReader::next() {
  if (buf_pos_ == buf_len_ && !fill()) return std::nullopt;
  const char* p = buffer_.data() + buf_pos_ * kRecordBytes;
  std::uint64_t index = consumed_;
  ++buf_pos_;
  ++consumed_;
  auto where = [&] {
    return "'" + path_.string() + "': record " + std::to_string(index) + " at " +
           offset_text(kHeaderBytes + index * kRecordBytes);
  };
  auto b1 = static_cast<unsigned char>(p[16]);
  auto b2 = static_cast<unsigned char>(p[17]);
  if (b1 > 1 || b2 > 1) throw FormatError(where() + ": polarization byte out of range");
  for (std::size_t i = 18; i < kRecordBytes; ++i)
    if (p[i] != 0) throw FormatError(where() + ": nonzero padding");
  CoincidenceEvent e;
  e.rep_index = get_le<std::uint64_t>(p);
  e.delta_t = get_le<std::uint32_t>(p + 8);
  e.t_e = get_le<std::uint32_t>(p + 12);
  e.pol1 = b1 == 0 ? Polarization::R : Polarization::L;
  e.pol2 = b2 == 0 ? Polarization::R : Polarization::L;
  return e;
}

std::size_t EventReader::read_chunk(std::vector<CoincidenceEvent>& out, std::size_t max) {
  std::size_t n = 0;
  while (n < max) {
    auto e = next();
    if (!e) break;
    out.push_back(*e);
    ++n;
  }
  return n;
}

void EventReader::for_each_chunk(const std::function<void(std::span<const CoincidenceEvent>)>& fn,
                                 std::size_t chunk) {
  std::vector<CoincidenceEvent> buf;
  buf.reserve(chunk);
  while (true) {
    buf.clear();
    if (read_chunk(buf, chunk) == 0) break;
    fn(buf);
  }
}

EventFile read_events(const std::filesystem::path& path) {
  EventReader r(path);
  EventFile f;
  f.header = r.header();
  f.header.n_events = r.record_count();
  f.warnings = r.warnings();
  f.events.reserve(static_cast<std::size_t>(r.record_count()));
  while (auto e = r.next()) f.events.push_back(*e);
  return f;
}

// ---- CSV --------------------------------------------------------------------

namespace {

constexpr const char* kCsvHeader = "rep_index,delta_t_ps,t_e_ps,pol1,pol2";

void write_csv_preamble(std::ostream& os, const EventFileHeader& h) {
  os << "# qdtag-csv v1 config_digest=" << to_hex(h.config_digest) << " bin_resolution_ps=" << h.bin_resolution
     << "\n";
  os << kCsvHeader << "\n";
}

void write_csv_row(std::ostream& os, const CoincidenceEvent& e) {
  os << e.rep_index << ',' << e.delta_t << ',' << e.t_e << ',' << pol_letter(e.pol1) << ',' << pol_letter(e.pol2)
     << '\n';
}

template <class T>
T parse_uint(std::string_view s, const std::string& ctx) {
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) throw FormatError(ctx + ": bad integer '" + std::string(s) + "'");
  return v;
}

Polarization parse_pol(std::string_view s, const std::string& ctx) {
  if (s == "R") return Polarization::R;
  if (s == "L") return Polarization::L;
  throw FormatError(ctx + ": polarization must be R or L, got '" + std::string(s) + "'");
}

}  // namespace

Digest parse_digest_hex(const std::string& hex) {
  if (hex.size() != 64) throw FormatError("config digest must be 64 hex characters");
  Digest d{};
  for (std::size_t i = 0; i < 32; ++i) {
    unsigned v = 0;
    auto [ptr, ec] = std::from_chars(hex.data() + 2 * i, hex.data() + 2 * i + 2, v, 16);
    if (ec != std::errc{} || ptr != hex.data() + 2 * i + 2) throw FormatError("config digest is not hexadecimal");
    d[i] = static_cast<std::uint8_t>(v);
  }
  return d;
}

void export_csv(const std::filesystem::path& path, const EventFileHeader& header,
                std::span<const CoincidenceEvent> events) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  write_csv_preamble(os, header);
  for (const auto& e : events) {
    if (!is_circular(e.pol1) || !is_circular(e.pol2)) throw DomainError("event polarization must be R or L");
    write_csv_row(os, e);
  }
  if (!os) throw IoError("write failed on '" + path.string() + "'");
}

void binary_to_csv(const std::filesystem::path& binary, const std::filesystem::path& csv) {
  EventReader r(binary);
  std::ofstream os(csv);
  if (!os) throw IoError("cannot open '" + csv.string() + "' for writing");
  EventFileHeader h = r.header();
  h.n_events = r.record_count();
  write_csv_preamble(os, h);
  while (auto e = r.next()) write_csv_row(os, *e);
  if (!os) throw IoError("write failed on '" + csv.string() + "'");
}

EventFile import_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path.string() + "'");
  EventFile f;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string ctx = path.string() + ":" + std::to_string(lineno);
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream ss(line.substr(1));
      std::string tok;
      while (ss >> tok) {
        if (tok.rfind("config_digest=", 0) == 0) f.header.config_digest = parse_digest_hex(tok.substr(14));
        else if (tok.rfind("bin_resolution_ps=", 0) == 0)
          f.header.bin_resolution = parse_uint<std::uint64_t>(tok.substr(18), ctx);
      }
      continue;
    }
    if (!have_header) {
      if (line != kCsvHeader) throw FormatError(ctx + ": expected header '" + std::string(kCsvHeader) + "'");
      have_header = true;
      continue;
    }
    std::array<std::string_view, 5> fields;
    std::string_view rest(line);
    for (std::size_t k = 0; k < 5; ++k) {
      auto comma = rest.find(',');
      if ((comma == std::string_view::npos) != (k == 4)) throw FormatError(ctx + ": expected 5 comma-separated fields");
      fields[k] = rest.substr(0, comma);
      if (comma != std::string_view::npos) rest.remove_prefix(comma + 1);
    }
    CoincidenceEvent e;
    e.rep_index = parse_uint<std::uint64_t>(fields[0], ctx);
    e.delta_t = parse_uint<std::uint32_t>(fields[1], ctx);
    e.t_e = parse_uint<std::uint32_t>(fields[2], ctx);
    e.pol1 = parse_pol(fields[3], ctx);
    e.pol2 = parse_pol(fields[4], ctx);
    f.events.push_back(e);
  }
  if (!have_header) throw FormatError(path.string() + ": missing CSV header line");
  f.header.n_events = f.events.size();
  return f;
}

}  // namespace qdspin
