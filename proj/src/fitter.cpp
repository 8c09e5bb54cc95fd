#include "qdspin/fitter.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <sstream>

#include "qdspin/errors.hpp"
#include "qdspin/spin.hpp"

namespace qdspin {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::size_t kMinPoints = 12;

// Internal parameterisation shared by both models. The dephasing rate is
// scaled by tau_s^2 so that it is O(1) on the fitted window.
struct Layout {
  std::vector<std::string> names;         // physical names, internal order
  std::vector<double> lower;              // bounds on internal values
  std::vector<std::string> degeneracy_order;
};

struct Window {
  std::vector<double> td, to, y, w;  // decay time, oscillation time, data, 1/sigma
  double tau_s = 1.0;
  double data_norm2 = 0.0;
};

Window select(const DataSeries& data, const FitOptions& opt) {
  if (data.t.size() != data.y.size() || data.t.size() != data.sigma.size())
    throw DomainError("data series arrays differ in length");
  Window win;
  for (std::size_t i = 0; i < data.size(); ++i) {
    double t = data.t[i];
    if (t < opt.t_min || t > opt.t_max) continue;
    if (!std::isfinite(data.y[i])) continue;
    if (!(data.sigma[i] > 0.0) || !std::isfinite(data.sigma[i]))
      throw DomainError("non-positive uncertainty in fit window");
    win.td.push_back(opt.frame.decay_time(t));
    win.to.push_back(opt.frame.oscillation_time(t));
    win.y.push_back(data.y[i]);
    win.w.push_back(1.0 / data.sigma[i]);
  }
  if (win.y.size() < kMinPoints)
    throw DomainError("fit window holds " + std::to_string(win.y.size()) + " points, need at least 12");
  double m = 0.0;
  for (double to : win.to) m = std::max(m, std::abs(to));
  win.tau_s = m > 0.0 ? m : 1.0;
  for (std::size_t i = 0; i < win.y.size(); ++i) win.data_norm2 += std::pow(win.y[i] * win.w[i], 2);
  return win;
}

// ---- model evaluation on internal parameters -------------------------------

struct Osc {
  double env, c, s, theta;
};

Osc oscillation(double to, double rs, double tau_s, double tp, double phi) {
  double u = to / tau_s;
  Osc o;
  o.env = std::exp(-rs * u * u);
  o.theta = -kTwoPi * to / tp + phi;
  o.c = std::cos(o.theta);
  o.s = std::sin(o.theta);
  return o;
}

// p = i0, v0, log t1, rs, log tp, phi
double eval_model1(const double* p, double td, double to, double tau_s, double* grad) {
  double t1 = std::exp(p[2]);
  double tp = std::exp(p[4]);
  double e = 0.5 * std::exp(-td / t1);
  Osc o = oscillation(to, p[3], tau_s, tp, p[5]);
  double bracket = 1.0 + p[1] * o.env * o.c;
  double f = p[0] * e * bracket;
  if (grad) {
    double u = to / tau_s;
    double amp = p[0] * e * p[1] * o.env;
    grad[0] = e * bracket;
    grad[1] = p[0] * e * o.env * o.c;
    grad[2] = f * td / t1;
    grad[3] = -amp * o.c * u * u;
    grad[4] = -amp * o.s * kTwoPi * to / tp;
    grad[5] = -amp * o.s;
  }
  return f;
}

// p = a0, rs, log tp, phi
double eval_model3(const double* p, double /*td*/, double to, double tau_s, double* grad) {
  double tp = std::exp(p[2]);
  Osc o = oscillation(to, p[1], tau_s, tp, p[3]);
  double f = p[0] * o.env * o.c;
  if (grad) {
    double u = to / tau_s;
    double amp = p[0] * o.env;
    grad[0] = o.env * o.c;
    grad[1] = -f * u * u;
    grad[2] = -amp * o.s * kTwoPi * to / tp;
    grad[3] = -amp * o.s;
  }
  return f;
}

// p = c, a0, rs, log tp, phi
double eval_model4(const double* p, double td, double to, double tau_s, double* grad) {
  double f = p[0] + eval_model3(p + 1, td, to, tau_s, grad ? grad + 1 : nullptr);
  if (grad) grad[0] = 1.0;
  return f;
}

using EvalFn = double (*)(const double*, double, double, double, double*);

// ---- Levenberg-Marquardt ----------------------------------------------------

struct LmResult {
  Eigen::VectorXd p;
  double cost = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> history;
  Eigen::MatrixXd jac;  // free columns at the solution
};

class Problem {
 public:
  Problem(const Window& win, EvalFn fn, std::vector<int> free_idx, std::vector<double> lower)
      : win_(win), fn_(fn), free_(std::move(free_idx)), lower_(std::move(lower)) {}

  std::size_t n() const { return win_.y.size(); }
  std::size_t m() const { return free_.size(); }
  const std::vector<int>& free() const { return free_; }

  // r = (f - y)/sigma, J = dr/dp over the free parameters.
  void evaluate(const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd* jac) const {
    r.resize(static_cast<Eigen::Index>(n()));
    if (jac) jac->resize(static_cast<Eigen::Index>(n()), static_cast<Eigen::Index>(m()));
    std::array<double, 8> g{};
    for (std::size_t i = 0; i < n(); ++i) {
      double f = fn_(p.data(), win_.td[i], win_.to[i], win_.tau_s, jac ? g.data() : nullptr);
      auto row = static_cast<Eigen::Index>(i);
      r[row] = (f - win_.y[i]) * win_.w[i];
      if (jac)
        for (std::size_t k = 0; k < m(); ++k)
          (*jac)(row, static_cast<Eigen::Index>(k)) = g[static_cast<std::size_t>(free_[k])] * win_.w[i];
    }
  }

  double lower(std::size_t k) const { return lower_[static_cast<std::size_t>(free_[k])]; }

 private:
  const Window& win_;
  EvalFn fn_;
  std::vector<int> free_;
  std::vector<double> lower_;
};

// Free columns that may move: a parameter sitting on its bound with the
// gradient pushing outward is held.
std::vector<Eigen::Index> movable(const Problem& prob, const Eigen::VectorXd& p, const Eigen::VectorXd& grad) {
  std::vector<Eigen::Index> idx;
  for (std::size_t k = 0; k < prob.m(); ++k) {
    double lo = prob.lower(k);
    double v = p[prob.free()[k]];
    if (std::isfinite(lo) && v <= lo && grad[static_cast<Eigen::Index>(k)] > 0.0) continue;
    idx.push_back(static_cast<Eigen::Index>(k));
  }
  return idx;
}

double newton_decrement(const Eigen::MatrixXd& a, const Eigen::VectorXd& g, const std::vector<Eigen::Index>& idx) {
  if (idx.empty()) return 0.0;
  auto k = static_cast<Eigen::Index>(idx.size());
  Eigen::MatrixXd ar(k, k);
  Eigen::VectorXd gr(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    gr[i] = g[idx[static_cast<std::size_t>(i)]];
    for (Eigen::Index j = 0; j < k; ++j) ar(i, j) = a(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  Eigen::VectorXd x = ar.completeOrthogonalDecomposition().solve(gr);
  return gr.dot(x);
}

LmResult levenberg_marquardt(const Problem& prob, Eigen::VectorXd p, int max_iter, double data_norm2) {
  LmResult out;
  Eigen::VectorXd r;
  Eigen::MatrixXd jac;
  prob.evaluate(p, r, &jac);
  double cost = 0.5 * r.squaredNorm();
  if (!std::isfinite(cost)) throw DomainError("model is not finite at the initial parameters");
  out.history.push_back(cost);

  double lambda = 1e-3;
  auto decrement_ok = [&](const Eigen::MatrixXd& a, const Eigen::VectorXd& g) {
    double dec = newton_decrement(a, g, movable(prob, p, g));
    return dec <= 1e-8 * 2.0 * cost + 1e-20 * (data_norm2 + 1.0);
  };

  bool stalled = false;
  int iter = 0;
  for (; iter < max_iter; ++iter) {
    Eigen::MatrixXd a = jac.transpose() * jac;
    Eigen::VectorXd g = jac.transpose() * r;
    auto idx = movable(prob, p, g);
    if (idx.empty()) {
      out.converged = true;
      break;
    }
    auto k = static_cast<Eigen::Index>(idx.size());
    Eigen::MatrixXd ar(k, k);
    Eigen::VectorXd gr(k), d(k);
    double dmax = 0.0;
    for (Eigen::Index i = 0; i < k; ++i) dmax = std::max(dmax, a(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(i)]));
    for (Eigen::Index i = 0; i < k; ++i) {
      auto ii = idx[static_cast<std::size_t>(i)];
      gr[i] = g[ii];
      d[i] = std::max(a(ii, ii), 1e-12 * dmax + 1e-300);
      for (Eigen::Index j = 0; j < k; ++j) ar(i, j) = a(ii, idx[static_cast<std::size_t>(j)]);
    }

    bool accepted = false;
    Eigen::VectorXd p_new, r_new;
    double cost_new = cost;
    double step_norm = 0.0;
    while (!accepted) {
      Eigen::MatrixXd lhs = ar;
      lhs.diagonal() += lambda * d;
      Eigen::VectorXd delta = lhs.ldlt().solve(-gr);
      p_new = p;
      for (Eigen::Index i = 0; i < k; ++i) {
        auto fk = static_cast<std::size_t>(idx[static_cast<std::size_t>(i)]);
        Eigen::Index pi = prob.free()[fk];
        p_new[pi] += delta[i];
        double lo = prob.lower(fk);
        if (std::isfinite(lo) && p_new[pi] < lo) p_new[pi] = lo;
      }
      step_norm = (p_new - p).norm();
      prob.evaluate(p_new, r_new, nullptr);
      cost_new = 0.5 * r_new.squaredNorm();
      if (std::isfinite(cost_new) && cost_new < cost) {
        accepted = true;
      } else if (step_norm <= 1e-15 * (p.norm() + 1e-15) || lambda > 1e16) {
        break;
      } else {
        lambda *= 10.0;
      }
    }
    if (!accepted) {
      stalled = true;
      break;
    }
    double rel = (cost - cost_new) / std::max(cost, 1e-300);
    p = p_new;
    cost = cost_new;
    prob.evaluate(p, r, &jac);
    out.history.push_back(cost);
    lambda = std::max(lambda / 10.0, 1e-15);
    if (rel < 1e-10 || step_norm < 1e-12 * (p.norm() + 1e-12)) {
      Eigen::MatrixXd a2 = jac.transpose() * jac;
      Eigen::VectorXd g2 = jac.transpose() * r;
      if (decrement_ok(a2, g2)) {
        out.converged = true;
        ++iter;
        break;
      }
    }
  }
  if (stalled || (!out.converged && iter < max_iter)) {
    Eigen::MatrixXd a2 = jac.transpose() * jac;
    Eigen::VectorXd g2 = jac.transpose() * r;
    out.converged = decrement_ok(a2, g2);
  }
  out.p = p;
  out.cost = cost;
  out.iterations = iter;
  out.jac = jac;
  return out;
}

// ---- initial estimates ------------------------------------------------------

struct Peak {
  double freq = 0.0;
  double amp = 0.0;
  double phase = 0.0;
};

std::complex<double> dft_at(const std::vector<double>& t, const std::vector<double>& d, const std::vector<double>& w,
                            double f) {
  std::complex<double> acc = 0.0;
  double wsum = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    acc += w[i] * d[i] * std::polar(1.0, -kTwoPi * f * t[i]);
    wsum += w[i];
  }
  return wsum > 0.0 ? acc / wsum : 0.0;
}

void detrend(const std::vector<double>& t, std::vector<double>& d, const std::vector<double>& w) {
  double sw = 0, st = 0, sd = 0, stt = 0, std_ = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    sw += w[i];
    st += w[i] * t[i];
    sd += w[i] * d[i];
    stt += w[i] * t[i] * t[i];
    std_ += w[i] * t[i] * d[i];
  }
  if (sw <= 0.0) return;
  double den = sw * stt - st * st;
  double b = den > 0.0 ? (sw * std_ - st * sd) / den : 0.0;
  double a = (sd - b * st) / sw;
  for (std::size_t i = 0; i < t.size(); ++i) d[i] -= a + b * t[i];
}

std::optional<Peak> dominant_frequency(const std::vector<double>& t, std::vector<double> d,
                                       const std::vector<double>& w) {
  detrend(t, d, w);
  auto [lo, hi] = std::minmax_element(t.begin(), t.end());
  double span = *hi - *lo;
  if (!(span > 0.0)) return std::nullopt;
  std::vector<double> sorted(t);
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> gaps;
  for (std::size_t i = 1; i < sorted.size(); ++i)
    if (sorted[i] > sorted[i - 1]) gaps.push_back(sorted[i] - sorted[i - 1]);
  if (gaps.empty()) return std::nullopt;
  std::nth_element(gaps.begin(), gaps.begin() + static_cast<long>(gaps.size() / 2), gaps.end());
  double dt = gaps[gaps.size() / 2];

  double f_lo = 1.0 / span;
  double f_hi = 0.5 / dt;
  double df = 1.0 / (8.0 * span);
  std::vector<double> freqs, mags;
  for (double f = f_lo; f <= f_hi; f += df) {
    freqs.push_back(f);
    mags.push_back(std::abs(dft_at(t, d, w, f)));
  }
  if (freqs.empty()) return std::nullopt;
  auto it = std::max_element(mags.begin(), mags.end());
  auto k = static_cast<std::size_t>(it - mags.begin());
  if (2.0 * *it < 1e-9) return std::nullopt;
  double f = freqs[k];
  if (k > 0 && k + 1 < mags.size()) {
    double a = mags[k - 1], b = mags[k], c = mags[k + 1];
    double den = a - 2.0 * b + c;
    if (den < 0.0) f += 0.5 * (a - c) / den * df;
  }
  std::complex<double> x = dft_at(t, d, w, f);
  return Peak{f, 2.0 * std::abs(x), -std::arg(x)};
}

// Gaussian envelope rate from the oscillation amplitude in the two halves of
// the window. Returns the scaled rate and the amplitude at zero time.
std::pair<double, double> envelope_guess(const std::vector<double>& to, const std::vector<double>& d,
                                         const std::vector<double>& w, double tau_s, const Peak& pk) {
  std::vector<double> t1, d1, w1, t2, d2, w2;
  std::vector<double> sorted(to);
  std::sort(sorted.begin(), sorted.end(), [](double a, double b) { return std::abs(a) < std::abs(b); });
  double mid = std::abs(sorted[sorted.size() / 2]);
  for (std::size_t i = 0; i < to.size(); ++i) {
    bool near = std::abs(to[i]) <= mid;
    (near ? t1 : t2).push_back(to[i]);
    (near ? d1 : d2).push_back(d[i]);
    (near ? w1 : w2).push_back(w[i]);
  }
  auto half = [&](const std::vector<double>& t, std::vector<double> dd, const std::vector<double>& ww) {
    detrend(t, dd, ww);
    double a = 2.0 * std::abs(dft_at(t, dd, ww, pk.freq));
    double c2 = 0.0, wsum = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      c2 += ww[i] * t[i] * t[i];
      wsum += ww[i];
    }
    return std::pair{a, wsum > 0.0 ? c2 / wsum : 0.0};
  };
  if (t1.size() < 4 || t2.size() < 4) return {0.1, pk.amp};
  auto [a1, u1] = half(t1, d1, w1);
  auto [a2, u2] = half(t2, d2, w2);
  double rs = 0.1;
  if (a1 > 0.0 && a2 > 0.0 && a2 < a1 && u2 > u1) rs = std::log(a1 / a2) / ((u2 - u1) / (tau_s * tau_s));
  rs = std::clamp(rs, 1e-3, 50.0);
  double amp = a1 * std::exp(rs * u1 / (tau_s * tau_s));
  return {rs, amp};
}

struct RawInit1 {
  double i0, v0, t1, rs, tp, phi;
  bool flagged;
};

RawInit1 init_model1(const Window& win) {
  // weighted log-linear decay fit
  double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t npos = 0;
  for (std::size_t i = 0; i < win.y.size(); ++i) {
    if (win.y[i] <= 0.0) continue;
    double wt = std::pow(win.y[i] * win.w[i], 2);
    double ly = std::log(win.y[i]);
    sw += wt;
    sx += wt * win.td[i];
    sy += wt * ly;
    sxx += wt * win.td[i] * win.td[i];
    sxy += wt * win.td[i] * ly;
    ++npos;
  }
  auto [lo, hi] = std::minmax_element(win.td.begin(), win.td.end());
  double span_d = std::max(*hi - *lo, 1.0);
  RawInit1 r{};
  double den = sw * sxx - sx * sx;
  if (npos >= 2 && den > 0.0) {
    double b = (sw * sxy - sx * sy) / den;
    double a = (sy - b * sx) / sw;
    r.t1 = b < 0.0 ? -1.0 / b : 10.0 * span_d;
    r.i0 = 2.0 * std::exp(a);
    if (b >= 0.0) {
      double mean = 0.0;
      for (double y : win.y) mean += y;
      r.i0 = 2.0 * mean / static_cast<double>(win.y.size());
    }
  } else {
    double mean = 0.0;
    for (double y : win.y) mean += y;
    r.i0 = 2.0 * std::max(mean / static_cast<double>(win.y.size()), 1e-12);
    r.t1 = span_d;
  }

  std::vector<double> d(win.y.size()), w(win.y.size());
  for (std::size_t i = 0; i < win.y.size(); ++i) {
    double trend = 0.5 * r.i0 * std::exp(-win.td[i] / r.t1);
    d[i] = trend > 0.0 ? win.y[i] / trend - 1.0 : 0.0;
    w[i] = std::pow(trend * win.w[i], 2);
  }
  auto pk = dominant_frequency(win.to, d, w);
  auto [tlo, thi] = std::minmax_element(win.to.begin(), win.to.end());
  if (!pk) {
    r.v0 = 0.0;
    r.tp = std::max(*thi - *tlo, 1.0);
    r.phi = 0.0;
    r.rs = 0.0;
    r.flagged = true;
    return r;
  }
  auto [rs, amp] = envelope_guess(win.to, d, w, win.tau_s, *pk);
  r.v0 = std::min(amp, 1.0);
  r.tp = 1.0 / pk->freq;
  r.phi = pk->phase;
  r.rs = rs;
  r.flagged = false;
  return r;
}

struct RawInit3 {
  double a0, rs, tp, phi;
  bool flagged;
};

RawInit3 init_model3(const Window& win) {
  std::vector<double> w(win.y.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = win.w[i] * win.w[i];
  auto pk = dominant_frequency(win.to, win.y, w);
  auto [tlo, thi] = std::minmax_element(win.to.begin(), win.to.end());
  if (!pk) return {0.0, 0.0, std::max(*thi - *tlo, 1.0), 0.0, true};
  auto [rs, amp] = envelope_guess(win.to, win.y, w, win.tau_s, *pk);
  return {std::min(amp, 1.0), rs, 1.0 / pk->freq, pk->phase, false};
}

struct RawInit4 {
  double c;
  RawInit3 osc;
};

RawInit4 init_model4(const Window& win) {
  double sw = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < win.y.size(); ++i) {
    double w2 = win.w[i] * win.w[i];
    sw += w2;
    sy += w2 * win.y[i];
  }
  double c = sy / sw;
  Window centred = win;
  for (double& y : centred.y) y -= c;
  RawInit3 r = init_model3(centred);
  r.a0 = std::abs(r.a0) > 0.0 ? r.a0 : 0.0;
  return {c, r};
}

// ---- generic driver ---------------------------------------------------------

double rs_from_t2(double t2, double tau_s) { return std::isfinite(t2) ? std::pow(tau_s / t2, 2) : 0.0; }
double t2_from_rs(double rs, double tau_s) { return rs > 0.0 ? tau_s / std::sqrt(rs) : kInf; }

struct Spec {
  EvalFn fn;
  std::vector<std::string> names;
  int rate_index;
  int amp_index;                  // visibility/amplitude; fixing it at 0 freezes the oscillation
  std::vector<int> osc_indices;   // rate, log tp, phi
  std::vector<int> log_indices;   // physical = exp(internal)
  std::vector<std::string> degeneracy_order;
  int t1_index = -1;
};

struct Solved {
  Eigen::VectorXd p;             // internal
  Eigen::MatrixXd cov_internal;  // full size, zero for fixed
  LmResult lm;
  std::vector<bool> is_free;
  double tau_s;
  std::size_t n_points;
};

bool is_fixed(const FitOptions& opt, const std::string& name) {
  return std::find(opt.fixed.begin(), opt.fixed.end(), name) != opt.fixed.end();
}

Solved solve(const Spec& spec, const Window& win, Eigen::VectorXd p0, const FitOptions& opt) {
  auto np = static_cast<int>(spec.names.size());
  for (const auto& f : opt.fixed)
    if (std::find(spec.names.begin(), spec.names.end(), f) == spec.names.end())
      throw DomainError("unknown fit parameter '" + f + "'");
  std::vector<bool> is_free(static_cast<std::size_t>(np), true);
  for (int i = 0; i < np; ++i)
    if (is_fixed(opt, spec.names[static_cast<std::size_t>(i)])) is_free[static_cast<std::size_t>(i)] = false;
  if (!is_free[static_cast<std::size_t>(spec.amp_index)] && p0[spec.amp_index] == 0.0)
    for (int k : spec.osc_indices) is_free[static_cast<std::size_t>(k)] = false;

  std::vector<int> free_idx;
  for (int i = 0; i < np; ++i)
    if (is_free[static_cast<std::size_t>(i)]) free_idx.push_back(i);
  std::vector<double> lower(static_cast<std::size_t>(np), -kInf);
  lower[static_cast<std::size_t>(spec.rate_index)] = 0.0;
  p0[spec.rate_index] = std::max(p0[spec.rate_index], 0.0);

  Solved out;
  out.tau_s = win.tau_s;
  out.n_points = win.y.size();
  out.is_free = is_free;
  if (free_idx.empty()) {
    out.p = p0;
    out.cov_internal = Eigen::MatrixXd::Zero(np, np);
    Problem prob(win, spec.fn, free_idx, lower);
    Eigen::VectorXd r;
    prob.evaluate(p0, r, nullptr);
    out.lm.p = p0;
    out.lm.cost = 0.5 * r.squaredNorm();
    out.lm.converged = true;
    out.lm.history = {out.lm.cost};
    return out;
  }
  Problem prob(win, spec.fn, free_idx, lower);

  // Parameters with no leverage on the residual at the starting point.
  auto check_degenerate = [&](const Eigen::MatrixXd& jac) {
    std::vector<std::string> bad;
    for (std::size_t k = 0; k < free_idx.size(); ++k)
      if (jac.col(static_cast<Eigen::Index>(k)).norm() < 1e-6) bad.push_back(spec.names[static_cast<std::size_t>(free_idx[k])]);
    if (bad.empty()) {
      Eigen::MatrixXd a = jac.transpose() * jac;
      Eigen::VectorXd s = a.diagonal().cwiseSqrt();
      Eigen::MatrixXd c = s.asDiagonal().inverse() * a * s.asDiagonal().inverse();
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c);
      if (es.eigenvalues()[0] < 1e-13) {
        Eigen::VectorXd v = es.eigenvectors().col(0).cwiseAbs();
        for (std::size_t k = 0; k < free_idx.size(); ++k)
          if (v[static_cast<Eigen::Index>(k)] > 0.3) bad.push_back(spec.names[static_cast<std::size_t>(free_idx[k])]);
      }
    }
    if (bad.empty()) return;
    for (const auto& name : spec.degeneracy_order)
      if (std::find(bad.begin(), bad.end(), name) != bad.end())
        throw DegenerateFitError("parameter '" + name + "' is not constrained by the data", name);
    throw DegenerateFitError("parameter '" + bad.front() + "' is not constrained by the data", bad.front());
  };

  {
    Eigen::VectorXd r;
    Eigen::MatrixXd jac;
    prob.evaluate(p0, r, &jac);
    check_degenerate(jac);
  }
  out.lm = levenberg_marquardt(prob, p0, opt.max_iterations, win.data_norm2);
  check_degenerate(out.lm.jac);
  out.p = out.lm.p;

  Eigen::MatrixXd a = out.lm.jac.transpose() * out.lm.jac;
  Eigen::MatrixXd c = a.completeOrthogonalDecomposition().pseudoInverse();
  out.cov_internal = Eigen::MatrixXd::Zero(np, np);
  for (std::size_t i = 0; i < free_idx.size(); ++i)
    for (std::size_t j = 0; j < free_idx.size(); ++j)
      out.cov_internal(free_idx[i], free_idx[j]) = c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  return out;
}

// Converts the internal solution into physical values with a delta-method
// covariance. Returns the physical vector and covariance.
void physical(const Spec& spec, const Solved& s, Eigen::VectorXd& val, Eigen::MatrixXd& cov) {
  auto np = static_cast<Eigen::Index>(spec.names.size());
  val = s.p;
  Eigen::VectorXd jd = Eigen::VectorXd::Ones(np);
  for (int k : spec.log_indices) {
    val[k] = std::exp(s.p[k]);
    jd[k] = val[k];
  }
  double rs = s.p[spec.rate_index];
  val[spec.rate_index] = t2_from_rs(rs, s.tau_s);
  jd[spec.rate_index] = rs > 0.0 ? -0.5 * s.tau_s * std::pow(rs, -1.5) : std::numeric_limits<double>::quiet_NaN();
  cov = jd.asDiagonal() * s.cov_internal * jd.asDiagonal();
  if (!(rs > 0.0)) {
    for (Eigen::Index i = 0; i < np; ++i) {
      cov(spec.rate_index, i) = cov(i, spec.rate_index) = 0.0;
    }
    cov(spec.rate_index, spec.rate_index) = s.is_free[static_cast<std::size_t>(spec.rate_index)] ? kInf : 0.0;
  }
  // positive amplitude convention
  if (val[spec.amp_index] < 0.0) {
    int phi = spec.osc_indices.back();
    val[spec.amp_index] = -val[spec.amp_index];
    val[phi] += std::numbers::pi;
    cov.row(spec.amp_index) *= -1.0;
    cov.col(spec.amp_index) *= -1.0;
  }
  int phi = spec.osc_indices.back();
  val[phi] = wrap_phase(val[phi]);
}

FitDiagnostics diagnostics(const Spec& spec, const Solved& s, bool flagged) {
  FitDiagnostics d;
  d.n_points = s.n_points;
  d.chi2 = 2.0 * s.lm.cost;
  std::size_t nfree = static_cast<std::size_t>(std::count(s.is_free.begin(), s.is_free.end(), true));
  d.reduced_chi2 = s.n_points > nfree ? d.chi2 / static_cast<double>(s.n_points - nfree) : kInf;
  d.converged = s.lm.converged;
  d.n_iterations = s.lm.iterations;
  d.cost_history = s.lm.history;
  d.init_flagged = flagged;
  if (flagged) d.notes.push_back("flat trace: default initial parameters");
  if (!d.converged) d.notes.push_back("did not converge within the iteration limit");

  double ts2 = s.tau_s * s.tau_s;
  double rate = s.p[spec.rate_index] / ts2;
  double var = s.cov_internal(spec.rate_index, spec.rate_index);
  double err = var > 0.0 ? std::sqrt(var) / ts2 : 0.0;
  d.dephasing_rate = rate;
  d.dephasing_rate_err = err;
  d.t2_star_lower_1sigma = rate + err > 0.0 ? 1.0 / std::sqrt(rate + err) : kInf;
  d.t2_star_upper_1sigma = rate - err > 0.0 ? 1.0 / std::sqrt(rate - err) : kInf;
  d.t2_star_lower_bound = s.is_free[static_cast<std::size_t>(spec.rate_index)] && rate <= err;
  if (d.t2_star_lower_bound) d.notes.push_back("dephasing consistent with zero: T2* is a lower bound");

  if (spec.t1_index >= 0) {
    double c11 = s.cov_internal(spec.t1_index, spec.t1_index);
    double c22 = s.cov_internal(spec.rate_index, spec.rate_index);
    if (c11 > 0.0 && c22 > 0.0) {
      d.t1_t2_correlation = s.cov_internal(spec.t1_index, spec.rate_index) / std::sqrt(c11 * c22);
      d.envelope_degenerate = std::abs(d.t1_t2_correlation) > 0.99;
      if (d.envelope_degenerate) d.notes.push_back("T1 and T2* are degenerate");
    }
  }
  return d;
}

const Spec& spec1() {
  static const Spec s{eval_model1,
                      {"i0", "v0", "t1", "t2_star", "t_prec", "phi0"},
                      3,
                      1,
                      {3, 4, 5},
                      {2, 4},
                      {"t_prec", "phi0", "t2_star", "t1", "v0", "i0"},
                      2};
  return s;
}

const Spec& spec3() {
  static const Spec s{eval_model3, {"a0", "t2_star", "t_prec", "phi0"}, 1, 0, {1, 2, 3}, {2}, {"t_prec", "phi0", "t2_star", "a0"}};
  return s;
}

const Spec& spec4() {
  static const Spec s{eval_model4,
                      {"c", "a0", "t2_star", "t_prec", "phi0"},
                      2,
                      1,
                      {2, 3, 4},
                      {3},
                      {"t_prec", "phi0", "t2_star", "a0", "c"}};
  return s;
}

template <class Model>
FitResult<Model> package(const Spec& spec, const Solved& s, bool flagged);

template <>
FitResult<OffsetOscModel> package(const Spec& spec, const Solved& s, bool flagged) {
  Eigen::VectorXd v;
  Eigen::MatrixXd c;
  physical(spec, s, v, c);
  FitResult<OffsetOscModel> r;
  r.params = {v[0], v[1], v[2], v[3], v[4]};
  auto e = [&](int i) { return std::sqrt(std::max(c(i, i), 0.0)); };
  r.errors = {e(0), e(1), e(2), e(3), e(4)};
  r.names = spec.names;
  r.covariance = c;
  r.diag = diagnostics(spec, s, flagged);
  return r;
}

template <>
FitResult<DampedOscModel1> package(const Spec& spec, const Solved& s, bool flagged) {
  Eigen::VectorXd v;
  Eigen::MatrixXd c;
  physical(spec, s, v, c);
  FitResult<DampedOscModel1> r;
  r.params = {v[0], v[1], v[2], v[3], v[4], v[5]};
  auto e = [&](int i) { return std::sqrt(std::max(c(i, i), 0.0)); };
  r.errors = {e(0), e(1), e(2), e(3), e(4), e(5)};
  r.names = spec.names;
  r.covariance = c;
  r.diag = diagnostics(spec, s, flagged);
  return r;
}

template <>
FitResult<DcpModel3> package(const Spec& spec, const Solved& s, bool flagged) {
  Eigen::VectorXd v;
  Eigen::MatrixXd c;
  physical(spec, s, v, c);
  FitResult<DcpModel3> r;
  r.params = {v[0], v[1], v[2], v[3]};
  auto e = [&](int i) { return std::sqrt(std::max(c(i, i), 0.0)); };
  r.errors = {e(0), e(1), e(2), e(3)};
  r.names = spec.names;
  r.covariance = c;
  r.diag = diagnostics(spec, s, flagged);
  return r;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

void report_common(std::ostringstream& os, const FitDiagnostics& d) {
  os << "chi2 = " << fmt(d.chi2) << "\n";
  os << "reduced_chi2 = " << fmt(d.reduced_chi2) << "\n";
  os << "n_points = " << d.n_points << "\n";
  os << "converged = " << (d.converged ? "true" : "false") << "\n";
  os << "n_iterations = " << d.n_iterations << "\n";
  os << "init_flagged = " << (d.init_flagged ? "true" : "false") << "\n";
  os << "t2_star_lower_bound = " << (d.t2_star_lower_bound ? "true" : "false") << "\n";
  os << "t2_star_1sigma_range_ps = " << fmt(d.t2_star_lower_1sigma) << " " << fmt(d.t2_star_upper_1sigma) << "\n";
}

}  // namespace

double wrap_phase(double phi) {
  double w = std::remainder(phi, kTwoPi);
  if (w <= -std::numbers::pi) w += kTwoPi;
  return w;
}

double DampedOscModel1::operator()(double t, const TimeFrame& frame) const {
  double p[6] = {i0, v0, std::log(t1), rs_from_t2(t2_star, 1.0), std::log(t_prec), phi0};
  return eval_model1(p, frame.decay_time(t), frame.oscillation_time(t), 1.0, nullptr);
}

double DcpModel3::operator()(double t, const TimeFrame& frame) const {
  double p[4] = {a0, rs_from_t2(t2_star, 1.0), std::log(t_prec), phi0};
  return eval_model3(p, frame.decay_time(t), frame.oscillation_time(t), 1.0, nullptr);
}

double OffsetOscModel::operator()(double t, const TimeFrame& frame) const {
  double p[5] = {c, a0, rs_from_t2(t2_star, 1.0), std::log(t_prec), phi0};
  return eval_model4(p, frame.decay_time(t), frame.oscillation_time(t), 1.0, nullptr);
}

std::vector<double> model_gradient(const OffsetOscModel& m, double t, const TimeFrame& frame) {
  double p[5] = {m.c, m.a0, rs_from_t2(m.t2_star, 1.0), std::log(m.t_prec), m.phi0};
  std::vector<double> g(5);
  eval_model4(p, frame.decay_time(t), frame.oscillation_time(t), 1.0, g.data());
  return g;
}

std::vector<double> model_gradient(const DampedOscModel1& m, double t, const TimeFrame& frame) {
  double p[6] = {m.i0, m.v0, std::log(m.t1), rs_from_t2(m.t2_star, 1.0), std::log(m.t_prec), m.phi0};
  std::vector<double> g(6);
  eval_model1(p, frame.decay_time(t), frame.oscillation_time(t), 1.0, g.data());
  return g;
}

std::vector<double> model_gradient(const DcpModel3& m, double t, const TimeFrame& frame) {
  double p[4] = {m.a0, rs_from_t2(m.t2_star, 1.0), std::log(m.t_prec), m.phi0};
  std::vector<double> g(4);
  eval_model3(p, frame.decay_time(t), frame.oscillation_time(t), 1.0, g.data());
  return g;
}

template <class Model>
double FitResult<Model>::cov(const std::string& a, const std::string& b) const {
  auto ia = std::find(names.begin(), names.end(), a);
  auto ib = std::find(names.begin(), names.end(), b);
  if (ia == names.end() || ib == names.end()) throw DomainError("unknown fit parameter");
  return covariance(ia - names.begin(), ib - names.begin());
}

template struct FitResult<DampedOscModel1>;
template struct FitResult<DcpModel3>;
template struct FitResult<OffsetOscModel>;

DataSeries series_from(const SliceTrace& trace, Channel channel) {
  DataSeries s;
  s.t = trace.times;
  s.y = trace.channel(channel);
  s.sigma = trace.errors(channel);
  return s;
}

DataSeries series_from(const DcpTrace& trace) {
  DataSeries s;
  for (std::size_t i = 0; i < trace.times.size(); ++i) {
    if (trace.masked[i]) continue;
    s.t.push_back(trace.times[i]);
    s.y.push_back(trace.dcp[i]);
    s.sigma.push_back(trace.sigma[i]);
    if (!trace.total.empty()) s.trials.push_back(trace.total[i]);
  }
  return s;
}

InitialEstimate<DampedOscModel1> estimate_initial_params(const DataSeries& data, const FitOptions& options) {
  Window win = select(data, options);
  RawInit1 r = init_model1(win);
  return {{r.i0, r.v0, r.t1, t2_from_rs(r.rs, win.tau_s), r.tp, wrap_phase(r.phi)}, r.flagged};
}

InitialEstimate<DcpModel3> estimate_initial_dcp_params(const DataSeries& data, const FitOptions& options) {
  Window win = select(data, options);
  RawInit3 r = init_model3(win);
  return {{r.a0, t2_from_rs(r.rs, win.tau_s), r.tp, wrap_phase(r.phi)}, r.flagged};
}

namespace {

FitResult<DampedOscModel1> fit1_once(const DataSeries& data, const FitOptions& options,
                                     std::optional<DampedOscModel1> init) {
  Window win = select(data, options);
  Eigen::VectorXd p0(6);
  bool flagged = false;
  if (init) {
    if (!(init->t1 > 0.0) || !(init->t_prec > 0.0) || !(init->t2_star > 0.0))
      throw DomainError("initial T1, T2* and T_prec must be positive");
    p0 << init->i0, init->v0, std::log(init->t1), rs_from_t2(init->t2_star, win.tau_s), std::log(init->t_prec), init->phi0;
  } else {
    RawInit1 r = init_model1(win);
    flagged = r.flagged;
    p0 << r.i0, r.v0, std::log(r.t1), r.rs, std::log(r.tp), r.phi;
  }
  Solved s = solve(spec1(), win, p0, options);
  return package<DampedOscModel1>(spec1(), s, flagged);
}

FitResult<DcpModel3> fit3_once(const DataSeries& data, const FitOptions& options, std::optional<DcpModel3> init);

template <class Model, class Once, class Sigma>
FitResult<Model> reweighted(const DataSeries& data, const FitOptions& options, std::optional<Model> init,
                            Once once, Sigma sigma) {
  FitResult<Model> fit = once(data, options, init);
  if (options.reweight_iterations <= 0) return fit;
  DataSeries w = data;
  for (int it = 0; it < options.reweight_iterations; ++it) {
    for (std::size_t i = 0; i < w.size(); ++i) w.sigma[i] = sigma(fit.params, i, w.t[i]);
    bool flagged = fit.diag.init_flagged;
    fit = once(w, options, fit.params);
    fit.diag.init_flagged = flagged;
  }
  fit.diag.notes.push_back("model-weighted refit x" + std::to_string(options.reweight_iterations));
  return fit;
}

}  // namespace

FitResult<DampedOscModel1> fit_decaying_oscillation(const DataSeries& data, const FitOptions& options,
                                                    std::optional<DampedOscModel1> init) {
  return reweighted<DampedOscModel1>(data, options, init, fit1_once,
                                     [&](const DampedOscModel1& m, std::size_t, double t) {
                                       return std::sqrt(std::max(m(t, options.frame), 1.0));
                                     });
}

FitResult<DampedOscModel1> fit_decaying_oscillation(const SliceTrace& trace, Channel channel,
                                                    const FitOptions& options, std::optional<DampedOscModel1> init) {
  return fit_decaying_oscillation(series_from(trace, channel), options, init);
}

FitResult<DcpModel3> fit_dcp(const DataSeries& data, const FitOptions& options, std::optional<DcpModel3> init) {
  if (options.reweight_iterations > 0 && data.trials.size() != data.size())
    throw DomainError("model-weighted DCP fits need per-point trial counts");
  return reweighted<DcpModel3>(data, options, init, fit3_once, [&](const DcpModel3& m, std::size_t i, double t) {
    double v = m(t, options.frame);
    return std::sqrt(std::max(1.0 - v * v, 1e-6) / std::max(data.trials[i], 1.0));
  });
}

namespace {

FitResult<DcpModel3> fit3_once(const DataSeries& data, const FitOptions& options, std::optional<DcpModel3> init) {
  Window win = select(data, options);
  Eigen::VectorXd p0(4);
  bool flagged = false;
  if (init) {
    if (!(init->t_prec > 0.0) || !(init->t2_star > 0.0)) throw DomainError("initial T2* and T_prec must be positive");
    p0 << init->a0, rs_from_t2(init->t2_star, win.tau_s), std::log(init->t_prec), init->phi0;
  } else {
    RawInit3 r = init_model3(win);
    flagged = r.flagged;
    p0 << r.a0, r.rs, std::log(r.tp), r.phi;
  }
  Solved s = solve(spec3(), win, p0, options);
  return package<DcpModel3>(spec3(), s, flagged);
}

}  // namespace

FitResult<DcpModel3> fit_dcp(const DcpTrace& trace, const FitOptions& options, std::optional<DcpModel3> init) {
  return fit_dcp(series_from(trace), options, init);
}

FitResult<OffsetOscModel> fit_offset_oscillation(const DataSeries& data, const FitOptions& options,
                                                 std::optional<OffsetOscModel> init) {
  Window win = select(data, options);
  Eigen::VectorXd p0(5);
  bool flagged = false;
  if (init) {
    if (!(init->t_prec > 0.0) || !(init->t2_star > 0.0)) throw DomainError("initial T2* and T_prec must be positive");
    p0 << init->c, init->a0, rs_from_t2(init->t2_star, win.tau_s), std::log(init->t_prec), init->phi0;
  } else {
    RawInit4 r = init_model4(win);
    flagged = r.osc.flagged;
    p0 << r.c, r.osc.a0, r.osc.rs, std::log(r.osc.tp), r.osc.phi;
  }
  Solved s = solve(spec4(), win, p0, options);
  return package<OffsetOscModel>(spec4(), s, flagged);
}

GFactor g_from_period(double t_prec, double b_tesla, double sigma_t_prec) {
  if (!(t_prec > 0.0) || !(b_tesla > 0.0)) throw DomainError("period and field must be positive");
  double g = constants::planck_uev_ps / (constants::mu_b_uev_per_t * b_tesla * t_prec);
  return {g, g * sigma_t_prec / t_prec};
}

namespace {

template <class Model, class Fn>
std::vector<BatchFit<Model>> run_batch(std::span<const DataSeries> traces, unsigned threads, Fn fn) {
  std::vector<BatchFit<Model>> out(traces.size());
  parallel_for(traces.size(), threads, [&](std::size_t i) {
    try {
      out[i].result = fn(traces[i]);
    } catch (const std::exception& e) {
      out[i].error = e.what();
    }
  });
  return out;
}

}  // namespace

std::vector<BatchFit<DampedOscModel1>> fit_batch(std::span<const DataSeries> traces, const FitOptions& options,
                                                 unsigned threads) {
  return run_batch<DampedOscModel1>(traces, threads,
                                    [&](const DataSeries& d) { return fit_decaying_oscillation(d, options); });
}

std::vector<BatchFit<DcpModel3>> fit_dcp_batch(std::span<const DataSeries> traces, const FitOptions& options,
                                               unsigned threads) {
  return run_batch<DcpModel3>(traces, threads, [&](const DataSeries& d) { return fit_dcp(d, options); });
}

std::string fit_report(const FitResult<DampedOscModel1>& fit, double b_tesla) {
  std::ostringstream os;
  const auto& p = fit.params;
  const auto& e = fit.errors;
  os << "model = damped_oscillation\n";
  os << "i0 = " << fmt(p.i0) << " +- " << fmt(e.i0) << "\n";
  os << "v0 = " << fmt(p.v0) << " +- " << fmt(e.v0) << "\n";
  os << "t1_ps = " << fmt(p.t1) << " +- " << fmt(e.t1) << "\n";
  os << "t2_star_ps = " << fmt(p.t2_star) << " +- " << fmt(e.t2_star) << "\n";
  os << "t_prec_ps = " << fmt(p.t_prec) << " +- " << fmt(e.t_prec) << "\n";
  os << "phi0_rad = " << fmt(p.phi0) << " +- " << fmt(e.phi0) << "\n";
  if (b_tesla > 0.0) {
    auto g = g_from_period(p.t_prec, b_tesla, e.t_prec);
    os << "g = " << fmt(g.g) << " +- " << fmt(g.sigma) << "\n";
  }
  report_common(os, fit.diag);
  os << "envelope_degenerate = " << (fit.diag.envelope_degenerate ? "true" : "false") << "\n";
  return os.str();
}

std::string fit_report(const FitResult<DcpModel3>& fit, double b_tesla) {
  std::ostringstream os;
  const auto& p = fit.params;
  const auto& e = fit.errors;
  os << "model = dcp\n";
  os << "a0 = " << fmt(p.a0) << " +- " << fmt(e.a0) << "\n";
  os << "t2_star_ps = " << fmt(p.t2_star) << " +- " << fmt(e.t2_star) << "\n";
  os << "t_prec_ps = " << fmt(p.t_prec) << " +- " << fmt(e.t_prec) << "\n";
  os << "phi0_rad = " << fmt(p.phi0) << " +- " << fmt(e.phi0) << "\n";
  if (b_tesla > 0.0) {
    auto g = g_from_period(p.t_prec, b_tesla, e.t_prec);
    os << "g = " << fmt(g.g) << " +- " << fmt(g.sigma) << "\n";
  }
  report_common(os, fit.diag);
  return os.str();
}

}  // namespace qdspin
