#include "qdspin/correlate.hpp"

#include <cmath>
#include <ostream>

#include "qdspin/errors.hpp"

namespace qdspin {

Channel channel_of(Polarization pol1, Polarization pol2) {
  if (!is_circular(pol1) || !is_circular(pol2)) {
    throw DomainError("channel_of: detections must be R or L");
  }
  const int a = pol1 == Polarization::R ? 0 : 2;
  const int b = pol2 == Polarization::R ? 0 : 1;
  return static_cast<Channel>(a + b);
}

std::string_view to_string(Channel c) {
  switch (c) {
    case Channel::RR: return "RR";
    case Channel::RL: return "RL";
    case Channel::LR: return "LR";
    case Channel::LL: return "LL";
  }
  return "?";
}

Channel parse_channel(std::string_view s) {
  for (Channel c : kChannels) {
    if (to_string(c) == s) return c;
  }
  throw DomainError("unknown channel '" + std::string(s) + "'");
}

std::string_view to_string(SliceAxis a) {
  return a == SliceAxis::horizontal ? "horizontal" : "vertical";
}

namespace {

std::size_t whole_bins(double lo, double hi, double w, const char* what) {
  const double n = (hi - lo) / w;
  const double r = std::round(n);
  if (!(hi > lo)) throw DomainError(std::string("map range for ") + what + " has zero area");
  if (std::abs(n - r) > 1e-9) {
    throw DomainError(std::string("map range for ") + what + " is not a whole number of bins");
  }
  return static_cast<std::size_t>(r);
}

}  // namespace

std::size_t MapGeometry::n_delta_t() const { return whole_bins(delta_t_lo, delta_t_hi, bin_width, "delta_t"); }
std::size_t MapGeometry::n_t_e() const { return whole_bins(t_e_lo, t_e_hi, bin_width, "t_e"); }

void MapGeometry::validate() const {
  if (!(bin_width > 0.0)) throw DomainError("bin_width must be positive");
  (void)n_delta_t();
  (void)n_t_e();
}

MapGeometry MapGeometry::defaults_for(const ExperimentConfig& config, double bin_width) {
  MapGeometry g;
  g.bin_width = bin_width;
  const double sep = config.pulses.pulse_separation;
  g.delta_t_hi = std::floor(sep / bin_width) * bin_width;
  g.t_e_hi = std::floor(std::min(2.0 * sep, config.pulses.rep_period - sep) / bin_width) * bin_width;
  g.validate();
  return g;
}

template <class Count>
BasicCorrelationMap<Count>::BasicCorrelationMap(const MapGeometry& geometry) : geometry_(geometry) {
  geometry_.validate();
  rows_ = geometry_.n_delta_t();
  cols_ = geometry_.n_t_e();
  for (auto& g : grids_) g.assign(rows_ * cols_, Count{});
}

template <class Count>
Count BasicCorrelationMap<Count>::total() const {
  Count t{};
  for (const auto& g : grids_) {
    for (Count c : g) t += c;
  }
  return t;
}

template <class Count>
BasicCorrelationMap<Count>& BasicCorrelationMap<Count>::merge(const BasicCorrelationMap& other) {
  if (!(geometry_ == other.geometry_)) throw DomainError("merge: map geometries differ");
  for (int c = 0; c < 4; ++c) {
    for (std::size_t i = 0; i < grids_[c].size(); ++i) grids_[c][i] += other.grids_[c][i];
  }
  overflow_ += other.overflow_;
  return *this;
}

template class BasicCorrelationMap<std::uint64_t>;
template class BasicCorrelationMap<double>;

void accumulate(CorrelationMap& map, std::span<const CoincidenceEvent> events) {
  const MapGeometry& g = map.geometry();
  std::uint64_t overflow = 0;
  for (const CoincidenceEvent& e : events) {
    const double dt = (static_cast<double>(e.delta_t) - g.delta_t_lo) / g.bin_width;
    const double te = (static_cast<double>(e.t_e) - g.t_e_lo) / g.bin_width;
    if (dt < 0.0 || te < 0.0) {
      ++overflow;
      continue;
    }
    const auto row = static_cast<std::size_t>(dt);
    const auto col = static_cast<std::size_t>(te);
    if (row >= map.rows() || col >= map.cols()) {
      ++overflow;
      continue;
    }
    ++map.at(channel_of(e.pol1, e.pol2), row, col);
  }
  map.add_overflow(overflow);
}

CorrelationMap build_map(std::span<const CoincidenceEvent> events, const MapGeometry& geometry) {
  CorrelationMap map(geometry);
  accumulate(map, events);
  return map;
}

IntensityMap to_intensity(const CorrelationMap& map) {
  IntensityMap out(map.geometry());
  for (Channel c : kChannels) {
    for (std::size_t r = 0; r < map.rows(); ++r) {
      for (std::size_t k = 0; k < map.cols(); ++k) {
        out.at(c, r, k) = static_cast<double>(map.at(c, r, k));
      }
    }
  }
  out.add_overflow(map.overflow());
  return out;
}

std::vector<double> SliceTrace::errors(Channel c) const {
  std::vector<double> e;
  e.reserve(channel(c).size());
  for (double n : channel(c)) e.push_back(std::sqrt(std::max(n, 1.0)));
  return e;
}

template <class Count>
SliceTrace slice(const BasicCorrelationMap<Count>& map, SliceAxis axis, double window_center,
                 double window_width) {
  const MapGeometry& g = map.geometry();
  const double w = g.bin_width;
  const double ratio = window_width / w;
  if (!(window_width > 0.0) || std::abs(ratio - std::round(ratio)) > 1e-9) {
    throw DomainError("slice: window width must be a positive multiple of the bin width");
  }
  const bool horiz = axis == SliceAxis::horizontal;
  const double lo_axis = horiz ? g.delta_t_lo : g.t_e_lo;
  const std::size_t n_axis = horiz ? map.rows() : map.cols();
  const double first = (window_center - 0.5 * window_width - lo_axis) / w;
  if (std::abs(first - std::round(first)) > 1e-9) {
    throw DomainError("slice: window edges must fall on bin edges");
  }
  const long i0 = std::lround(first);
  const long n = std::lround(ratio);
  if (i0 < 0 || i0 + n > static_cast<long>(n_axis)) {
    throw DomainError("slice: window lies outside the map range");
  }

  SliceTrace t;
  t.axis = axis;
  t.window_center = window_center;
  t.window_width = window_width;
  t.bin_width = w;
  const std::size_t len = horiz ? map.cols() : map.rows();
  const double lo_trace = horiz ? g.t_e_lo : g.delta_t_lo;
  t.times.resize(len);
  for (std::size_t k = 0; k < len; ++k) t.times[k] = lo_trace + (static_cast<double>(k) + 0.5) * w;
  for (Channel c : kChannels) {
    auto& v = t.counts[static_cast<int>(c)];
    v.assign(len, 0.0);
    for (long i = i0; i < i0 + n; ++i) {
      for (std::size_t k = 0; k < len; ++k) {
        v[k] += static_cast<double>(horiz ? map.at(c, static_cast<std::size_t>(i), k)
                                          : map.at(c, k, static_cast<std::size_t>(i)));
      }
    }
  }
  return t;
}

template SliceTrace slice(const CorrelationMap&, SliceAxis, double, double);
template SliceTrace slice(const IntensityMap&, SliceAxis, double, double);

std::size_t DcpTrace::n_unmasked() const {
  std::size_t n = 0;
  for (bool m : masked) n += m ? 0 : 1;
  return n;
}

DcpTrace dcp(std::span<const double> times, std::span<const double> r, std::span<const double> l,
             double min_total) {
  if (times.size() != r.size() || r.size() != l.size()) {
    throw DomainError("dcp: R and L traces must share one grid");
  }
  DcpTrace out;
  out.times.assign(times.begin(), times.end());
  out.dcp.resize(r.size());
  out.sigma.resize(r.size());
  out.masked.resize(r.size());
  out.total.resize(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double tot = r[i] + l[i];
    out.total[i] = tot;
    if (tot < min_total || !(tot > 0.0)) {
      out.masked[i] = true;
      out.dcp[i] = std::nan("");
      out.sigma[i] = std::nan("");
      continue;
    }
    out.masked[i] = false;
    out.dcp[i] = (r[i] - l[i]) / tot;
    const double rr = std::max(r[i], 0.5);
    const double ll = std::max(l[i], 0.5);
    out.sigma[i] = 2.0 * std::sqrt(rr * ll / (tot * tot * tot));
  }
  if (out.n_unmasked() == 0) throw DomainError("dcp: every bin is below the count guard");
  return out;
}

DcpTrace dcp(const SliceTrace& trace, Polarization herald, double min_total) {
  const Channel r = channel_of(herald, Polarization::R);
  const Channel l = channel_of(herald, Polarization::L);
  return dcp(trace.times, trace.channel(r), trace.channel(l), min_total);
}

DcpTrace pooled_dcp(const SliceTrace& trace, double min_total) {
  std::vector<double> r(trace.times.size()), l(trace.times.size());
  for (std::size_t i = 0; i < r.size(); ++i) {
    r[i] = trace.channel(Channel::RR)[i] + trace.channel(Channel::LL)[i];
    l[i] = trace.channel(Channel::RL)[i] + trace.channel(Channel::LR)[i];
  }
  return dcp(trace.times, r, l, min_total);
}

double sigma_dcp(const DcpTrace& trace, double t_lo, double t_hi) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < trace.times.size(); ++i) {
    if (trace.masked[i] || trace.times[i] < t_lo || trace.times[i] >= t_hi) continue;
    sum += trace.dcp[i];
    ++n;
  }
  if (n < 8) throw DomainError("sigma_dcp: fewer than 8 unmasked bins in the window");
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < trace.times.size(); ++i) {
    if (trace.masked[i] || trace.times[i] < t_lo || trace.times[i] >= t_hi) continue;
    ss += (trace.dcp[i] - mean) * (trace.dcp[i] - mean);
  }
  return std::sqrt(ss / static_cast<double>(n - 1));
}

template <class Count>
void write_map_csv(std::ostream& out, const BasicCorrelationMap<Count>& map, const std::string& metadata) {
  const MapGeometry& g = map.geometry();
  out << "# bin_width_ps=" << g.bin_width << " delta_t_range_ps=[" << g.delta_t_lo << ","
      << g.delta_t_hi << ") t_e_range_ps=[" << g.t_e_lo << "," << g.t_e_hi
      << ") overflow=" << map.overflow();
  if (!metadata.empty()) out << " " << metadata;
  out << "\n";
  out << "delta_t_lo_ps,t_e_lo_ps,RR,RL,LR,LL\n";
  out.precision(17);
  for (std::size_t r = 0; r < map.rows(); ++r) {
    for (std::size_t k = 0; k < map.cols(); ++k) {
      out << g.delta_t_lo + static_cast<double>(r) * g.bin_width << ","
          << g.t_e_lo + static_cast<double>(k) * g.bin_width;
      for (Channel c : kChannels) out << "," << map.at(c, r, k);
      out << "\n";
    }
  }
}

template void write_map_csv(std::ostream&, const CorrelationMap&, const std::string&);
template void write_map_csv(std::ostream&, const IntensityMap&, const std::string&);

void write_trace_csv(std::ostream& out, const SliceTrace& trace, const std::string& metadata) {
  out << "# axis=" << to_string(trace.axis) << " window_center_ps=" << trace.window_center
      << " window_width_ps=" << trace.window_width << " bin_width_ps=" << trace.bin_width;
  if (!metadata.empty()) out << " " << metadata;
  out << "\n";
  out << "t_ps,RR,RL,LR,LL,err_RR,err_RL,err_LR,err_LL\n";
  out.precision(12);
  std::array<std::vector<double>, 4> err;
  for (Channel c : kChannels) err[static_cast<int>(c)] = trace.errors(c);
  for (std::size_t i = 0; i < trace.times.size(); ++i) {
    out << trace.times[i];
    for (int c = 0; c < 4; ++c) out << "," << trace.counts[c][i];
    for (int c = 0; c < 4; ++c) out << "," << err[c][i];
    out << "\n";
  }
}

void write_dcp_csv(std::ostream& out, const DcpTrace& trace, const std::string& metadata) {
  out << "# dcp trace";
  if (!metadata.empty()) out << " " << metadata;
  out << "\n";
  out << "t_ps,dcp,sigma,masked\n";
  out.precision(12);
  for (std::size_t i = 0; i < trace.times.size(); ++i) {
    out << trace.times[i] << ",";
    if (trace.masked[i]) {
      out << ",," << 1 << "\n";
    } else {
      out << trace.dcp[i] << "," << trace.sigma[i] << "," << 0 << "\n";
    }
  }
}

}  // namespace qdspin
