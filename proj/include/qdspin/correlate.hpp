#pragma once

// Polarization-resolved two-photon correlation maps over (delta_t, t_e),
// slices through them and degree-of-circular-polarization traces.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qdspin/simulate.hpp"

namespace qdspin {

/// First-photon polarization, then second-photon polarization.
enum class Channel { RR = 0, RL = 1, LR = 2, LL = 3 };
inline constexpr std::array<Channel, 4> kChannels{Channel::RR, Channel::RL, Channel::LR, Channel::LL};

Channel channel_of(Polarization pol1, Polarization pol2);
std::string_view to_string(Channel c);
Channel parse_channel(std::string_view s);

/// Half-open bins [lo + k*w, lo + (k+1)*w) on both axes.
struct MapGeometry {
  double bin_width = 16.0;
  double delta_t_lo = 0.0;
  double delta_t_hi = 1600.0;
  double t_e_lo = 0.0;
  double t_e_hi = 3200.0;

  std::size_t n_delta_t() const;
  std::size_t n_t_e() const;
  void validate() const;

  /// Delta_t covers [0, T); t_e covers [0, 2T) rounded to whole bins.
  static MapGeometry defaults_for(const ExperimentConfig& config, double bin_width = 16.0);
  bool operator==(const MapGeometry&) const = default;
};

template <class Count>
class BasicCorrelationMap {
 public:
  BasicCorrelationMap() = default;
  explicit BasicCorrelationMap(const MapGeometry& geometry);

  const MapGeometry& geometry() const { return geometry_; }
  std::size_t rows() const { return rows_; }  // delta_t bins
  std::size_t cols() const { return cols_; }  // t_e bins

  Count& at(Channel c, std::size_t row, std::size_t col) {
    return grids_[static_cast<int>(c)][row * cols_ + col];
  }
  Count at(Channel c, std::size_t row, std::size_t col) const {
    return grids_[static_cast<int>(c)][row * cols_ + col];
  }
  std::span<const Count> grid(Channel c) const { return grids_[static_cast<int>(c)]; }

  std::uint64_t overflow() const { return overflow_; }
  void add_overflow(std::uint64_t n) { overflow_ += n; }
  Count total() const;

  /// Per-bin addition; geometries must match.
  BasicCorrelationMap& merge(const BasicCorrelationMap& other);

  bool operator==(const BasicCorrelationMap&) const = default;

 private:
  MapGeometry geometry_;
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::array<std::vector<Count>, 4> grids_;
  std::uint64_t overflow_ = 0;
};

using CorrelationMap = BasicCorrelationMap<std::uint64_t>;
using IntensityMap = BasicCorrelationMap<double>;

extern template class BasicCorrelationMap<std::uint64_t>;
extern template class BasicCorrelationMap<double>;

CorrelationMap build_map(std::span<const CoincidenceEvent> events, const MapGeometry& geometry);
void accumulate(CorrelationMap& map, std::span<const CoincidenceEvent> events);
IntensityMap to_intensity(const CorrelationMap& map);

enum class SliceAxis {
  horizontal,  // trace along t_e, summed over a delta_t window
  vertical,    // trace along delta_t, summed over a t_e window
};

std::string_view to_string(SliceAxis a);

struct SliceTrace {
  SliceAxis axis = SliceAxis::horizontal;
  double window_center = 0.0;
  double window_width = 32.0;
  double bin_width = 16.0;
  std::vector<double> times;  // bin centers along the trace axis
  std::array<std::vector<double>, 4> counts;

  const std::vector<double>& channel(Channel c) const { return counts[static_cast<int>(c)]; }
  /// sqrt(N) with a floor of 1 for empty bins.
  std::vector<double> errors(Channel c) const;
};

/// Sums the counts inside [center - width/2, center + width/2) across the
/// other axis; the window must sit on bin edges and inside the map.
template <class Count>
SliceTrace slice(const BasicCorrelationMap<Count>& map, SliceAxis axis, double window_center,
                 double window_width = 32.0);

struct DcpTrace {
  std::vector<double> times;
  std::vector<double> dcp;
  std::vector<double> sigma;
  std::vector<bool> masked;  // true where R + L < min_total
  std::vector<double> total;  // R + L per bin

  std::size_t n_unmasked() const;
};

/// Per-bin (R - L)/(R + L) with binomial errors 2 sqrt(R L/(R + L)^3); empty
/// channels are floored at half a count inside the error formula.
DcpTrace dcp(std::span<const double> times, std::span<const double> r, std::span<const double> l,
             double min_total = 20.0);

/// DCP of the second photon for a given herald polarization.
DcpTrace dcp(const SliceTrace& trace, Polarization herald = Polarization::R, double min_total = 20.0);

/// Both heralds pooled: an L herald leaves the opposite spin, so RR+LL counts
/// as co-polarized (R) and RL+LR as cross-polarized (L).
DcpTrace pooled_dcp(const SliceTrace& trace, double min_total = 20.0);

/// Unweighted sample standard deviation of unmasked DCP values with t in [t_lo, t_hi).
double sigma_dcp(const DcpTrace& trace, double t_lo, double t_hi);

// CSV exports. A leading '#' comment line carries the metadata.
template <class Count>
void write_map_csv(std::ostream& out, const BasicCorrelationMap<Count>& map,
                   const std::string& metadata = {});
void write_trace_csv(std::ostream& out, const SliceTrace& trace, const std::string& metadata = {});
void write_dcp_csv(std::ostream& out, const DcpTrace& trace, const std::string& metadata = {});

}  // namespace qdspin
