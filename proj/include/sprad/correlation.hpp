// correlation.hpp -- beam-splitter routing, time-difference histograms,
// g2[0] from a fitted peak comb, and afterpulse probability from
// consecutive-click delays.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "sprad/detectors.hpp"
#include "sprad/errors.hpp"
#include "sprad/least_squares.hpp"
#include "sprad/random.hpp"
#include "sprad/timestamp_stream.hpp"
#include "sprad/units.hpp"

namespace sprad {

/// Routes each photon to arm A or B with probability 1/2.
inline std::pair<TimestampStream, TimestampStream> hbt_split(const TimestampStream& photons, std::uint64_t seed) {
  Engine rng = make_engine(seed, 30);
  std::vector<Picoseconds> a, b;
  a.reserve(photons.size() / 2 + 16);
  b.reserve(photons.size() / 2 + 16);
  for (Picoseconds t : photons.times()) (rng() >> 63 ? b : a).push_back(t);
  return {TimestampStream(std::move(a), photons.duration_ps(), "arm_a"),
          TimestampStream(std::move(b), photons.duration_ps(), "arm_b")};
}

enum class Normalization { Raw, PerPeak };

/// Uniformly binned lag histogram. Bin i is centred on (first_index + i) * w.
struct Histogram {
  Picoseconds bin_width_ps = 400;
  std::int64_t first_index = 0;
  std::vector<double> counts;
  Normalization normalization = Normalization::Raw;
  std::uint64_t events_a = 0;  ///< start events (clicks of the first stream)
  std::uint64_t events_b = 0;
  Picoseconds duration_ps = 0;

  std::size_t size() const noexcept { return counts.size(); }
  double bin_width() const noexcept { return to_seconds(bin_width_ps); }
  Picoseconds lag_ps(std::size_t i) const noexcept {
    return (first_index + static_cast<std::int64_t>(i)) * bin_width_ps;
  }
  double lag(std::size_t i) const noexcept { return to_seconds(lag_ps(i)); }
  double total() const { return std::accumulate(counts.begin(), counts.end(), 0.0); }
};

namespace detail {

/// Bin index of a lag, rounding half away from zero so +t and -t mirror.
inline std::int64_t lag_bin(Picoseconds lag, Picoseconds w) {
  const Picoseconds mag = lag < 0 ? -lag : lag;
  const std::int64_t k = (mag + w / 2) / w;
  return lag < 0 ? -k : k;
}

inline Histogram empty_histogram(Picoseconds w, std::int64_t first, std::int64_t last) {
  Histogram h;
  h.bin_width_ps = w;
  h.first_index = first;
  h.counts.assign(static_cast<std::size_t>(last - first + 1), 0.0);
  return h;
}

inline Picoseconds checked_bin(double bin_width) {
  const Picoseconds w = to_ps(bin_width);
  if (w < 1) throw ParameterError("bin_width", "must be at least 1 ps");
  return w;
}

// Pairs (a_i, b_j), i in [begin, end), with |t_b - t_a| <= max_lag.
inline void accumulate_pairs(std::span<const Picoseconds> a, std::span<const Picoseconds> b, std::size_t begin,
                             std::size_t end, Picoseconds max_lag, Histogram& h, bool skip_same_index) {
  const Picoseconds w = h.bin_width_ps;
  std::size_t lo = static_cast<std::size_t>(
      std::lower_bound(b.begin(), b.end(), begin < a.size() ? a[begin] - max_lag : 0) - b.begin());
  for (std::size_t i = begin; i < end; ++i) {
    const Picoseconds ta = a[i];
    while (lo < b.size() && b[lo] < ta - max_lag) ++lo;
    for (std::size_t j = lo; j < b.size() && b[j] <= ta + max_lag; ++j) {
      if (skip_same_index && j == i) continue;
      const std::int64_t k = lag_bin(b[j] - ta, w);
      h.counts[static_cast<std::size_t>(k - h.first_index)] += 1.0;
    }
  }
}

}  // namespace detail

/// Adds `other` into `into` bin by bin; binning must match.
inline void merge(Histogram& into, const Histogram& other) {
  if (into.bin_width_ps != other.bin_width_ps || into.first_index != other.first_index ||
      into.size() != other.size())
    throw ParameterError("histogram", "cannot merge histograms with different binning");
  for (std::size_t i = 0; i < into.size(); ++i) into.counts[i] += other.counts[i];
}

/// Full cross-correlation histogram of t_b - t_a over all pairs with
/// |t_b - t_a| <= max_lag. `threads` > 1 splits the start events into
/// contiguous chunks whose partial histograms are summed.
inline Histogram interarrival_histogram(const TimestampStream& a, const TimestampStream& b, double bin_width,
                                        double max_lag, unsigned threads = 1) {
  const Picoseconds w = detail::checked_bin(bin_width);
  const Picoseconds max_ps = to_ps(max_lag);
  if (max_ps < 0) throw ParameterError("max_lag", "must be >= 0");
  const std::int64_t k = (max_ps + w / 2) / w;
  Histogram h = detail::empty_histogram(w, -k, k);
  h.events_a = a.size();
  h.events_b = b.size();
  h.duration_ps = std::max(a.duration_ps(), b.duration_ps());
  if (a.empty() || b.empty()) return h;

  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(a.size() / 4096 + 1)));
  if (threads == 1) {
    detail::accumulate_pairs(a.times(), b.times(), 0, a.size(), max_ps, h, false);
    return h;
  }
  std::vector<Histogram> partial(threads, h);
  std::vector<std::thread> pool;
  const std::size_t per = (a.size() + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    const std::size_t begin = std::min(a.size(), t * per);
    const std::size_t end = std::min(a.size(), begin + per);
    pool.emplace_back([&, t, begin, end] {
      detail::accumulate_pairs(a.times(), b.times(), begin, end, max_ps, partial[t], false);
    });
  }
  for (auto& th : pool) th.join();
  for (const auto& p : partial) merge(h, p);
  return h;
}

inline Histogram interarrival_histogram(const ClickStream& a, const ClickStream& b, double bin_width,
                                        double max_lag) {
  return interarrival_histogram(a.stream, b.stream, bin_width, max_lag);
}

/// Auto-correlation of one stream over all pairs i != j; symmetric in lag.
inline Histogram autocorrelation_histogram(const TimestampStream& a, double bin_width, double max_lag) {
  const Picoseconds w = detail::checked_bin(bin_width);
  const Picoseconds max_ps = to_ps(max_lag);
  const std::int64_t k = (max_ps + w / 2) / w;
  Histogram h = detail::empty_histogram(w, -k, k);
  h.events_a = h.events_b = a.size();
  h.duration_ps = a.duration_ps();
  detail::accumulate_pairs(a.times(), a.times(), 0, a.size(), max_ps, h, true);
  return h;
}

/// Delays between each click and the next one on the same detector, up to
/// max_lag (start-stop). Bins cover lags [0, max_lag].
inline Histogram consecutive_delay_histogram(const TimestampStream& a, double bin_width, double max_lag) {
  const Picoseconds w = detail::checked_bin(bin_width);
  const Picoseconds max_ps = to_ps(max_lag);
  const std::int64_t k = (max_ps + w / 2) / w;
  Histogram h = detail::empty_histogram(w, 0, k);
  h.events_a = h.events_b = a.size();
  h.duration_ps = a.duration_ps();
  const auto t = a.times();
  for (std::size_t i = 1; i < t.size(); ++i) {
    const Picoseconds d = t[i] - t[i - 1];
    if (d <= max_ps) h.counts[static_cast<std::size_t>(detail::lag_bin(d, w))] += 1.0;
  }
  return h;
}

/// Copy of `h` with every bin divided by `reference` (e.g. the mean side-peak
/// amplitude of a comb fit).
inline Histogram normalized(const Histogram& h, double reference) {
  if (!(reference > 0.0)) throw DomainError("normalization reference must be positive");
  Histogram out = h;
  for (double& c : out.counts) c /= reference;
  out.normalization = Normalization::PerPeak;
  return out;
}

// ---------------------------------------------------------------------------
// Comb fit
// ---------------------------------------------------------------------------

struct LagWindow {
  double start = 0.0;  ///< s
  double end = 0.0;    ///< s
  bool contains(double lag) const noexcept { return lag >= start && lag <= end; }
};

/// Windows around +-20 ns and +-40 ns where detector afterpulsing and
/// afterglow distort cross-correlations.
inline std::vector<LagWindow> default_excluded_windows() {
  return {{-42e-9, -38e-9}, {-22e-9, -18e-9}, {18e-9, 22e-9}, {38e-9, 42e-9}};
}

struct CombFitOptions {
  double initial_decay = 2e-9;  ///< s
  int reweight_passes = 3;      ///< Poisson reweighting rounds (w = 1/model)
  LsqOptions solver{.max_iterations = 300, .xtol_abs = 1e-10, .xtol_rel = 1e-9};
};

/// Parameters of B + sum_k A_k exp(-|tau - k/R| / decay) fitted to a histogram.
struct CombModel {
  std::vector<int> orders;           ///< k of each fitted peak
  Eigen::VectorXd params;            ///< [A_k..., B, decay_ns]
  Eigen::MatrixXd covariance;
  double chi2 = 0.0;
  int dof = 0;
  bool converged = false;
  int iterations = 0;

  std::size_t peaks() const noexcept { return orders.size(); }
  double background() const { return params[static_cast<Eigen::Index>(peaks())]; }
  double decay_ns() const { return params[static_cast<Eigen::Index>(peaks()) + 1]; }
};

namespace detail {

inline double comb_value(const std::vector<int>& orders, const Eigen::VectorXd& p, double period_ns, double x_ns) {
  const auto n = static_cast<Eigen::Index>(orders.size());
  const double decay = p[n + 1];
  double v = p[n];
  for (Eigen::Index j = 0; j < n; ++j) {
    const double d = std::abs(x_ns - orders[static_cast<std::size_t>(j)] * period_ns);
    if (d < 40.0 * decay) v += p[j] * std::exp(-d / decay);
  }
  return v;
}

/// Fits a comb to the bins flagged in `use`. Peaks are the orders whose
/// centre bin lies inside the lag range and is used; `candidate_orders`
/// limits the choice when non-empty.
inline CombModel fit_comb(const Histogram& h, double rep_rate, const std::vector<bool>& use,
                          const std::vector<int>& candidate_orders, const CombFitOptions& opt) {
  const double period_ns = 1e9 / rep_rate;
  const double w_ns = h.bin_width() * 1e9;
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < h.size(); ++i)
    if (use[i]) {
      xs.push_back(h.lag(i) * 1e9);
      ys.push_back(h.counts[i]);
    }
  if (xs.empty()) throw DomainError("comb fit: no usable bins");
  const double lo = h.lag(0) * 1e9, hi = h.lag(h.size() - 1) * 1e9;

  CombModel m;
  const auto kmin = static_cast<int>(std::ceil(lo / period_ns - 1e-9));
  const auto kmax = static_cast<int>(std::floor(hi / period_ns + 1e-9));
  for (int k = kmin; k <= kmax; ++k) {
    if (!candidate_orders.empty() &&
        std::find(candidate_orders.begin(), candidate_orders.end(), k) == candidate_orders.end())
      continue;
    const double c = k * period_ns;
    const bool seen = std::any_of(xs.begin(), xs.end(), [&](double x) { return std::abs(x - c) <= 0.5001 * w_ns; });
    if (seen) m.orders.push_back(k);
  }
  const auto n = static_cast<Eigen::Index>(m.orders.size());
  if (n == 0) throw DomainError("comb fit: no peak has usable bins");

  // Initial guess: background from bins far from every peak, amplitudes from
  // the highest bin near each centre.
  std::vector<double> far;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double r = std::remainder(xs[i], period_ns);
    if (std::abs(r) > period_ns / 4) far.push_back(ys[i]);
  }
  double b0 = 0.0;
  if (!far.empty()) {
    std::nth_element(far.begin(), far.begin() + static_cast<std::ptrdiff_t>(far.size() / 2), far.end());
    b0 = far[far.size() / 2];
  }
  Eigen::VectorXd x0(n + 2);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double c = m.orders[static_cast<std::size_t>(j)] * period_ns;
    double peak = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i)
      if (std::abs(xs[i] - c) <= std::max(2.0 * w_ns, 1.0)) peak = std::max(peak, ys[i]);
    x0[j] = std::max(peak - b0, 0.0);
  }
  x0[n] = b0;
  x0[n + 1] = std::clamp(opt.initial_decay * 1e9, w_ns / 4, period_ns / 2);

  LsqBounds bounds;
  bounds.lower = Eigen::VectorXd::Zero(n + 2);
  bounds.upper = Eigen::VectorXd::Constant(n + 2, std::numeric_limits<double>::infinity());
  bounds.lower[n + 1] = w_ns / 4;
  bounds.upper[n + 1] = period_ns / 2;

  std::vector<double> weight(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) weight[i] = 1.0 / std::max(ys[i], 1.0);

  LsqResult lsq;
  for (int pass = 0; pass <= opt.reweight_passes; ++pass) {
    auto residuals = [&](const Eigen::VectorXd& p) {
      Eigen::VectorXd r(static_cast<Eigen::Index>(xs.size()));
      for (std::size_t i = 0; i < xs.size(); ++i)
        r[static_cast<Eigen::Index>(i)] = (ys[i] - comb_value(m.orders, p, period_ns, xs[i])) * std::sqrt(weight[i]);
      return r;
    };
    try {
      lsq = solve_least_squares(residuals, x0, opt.solver, bounds);
    } catch (const FitError& e) {
      std::ostringstream os;
      os << "comb fit failed on pass " << pass << ": " << e.what() << "; used bins " << xs.size()
         << ", total counts " << std::accumulate(ys.begin(), ys.end(), 0.0);
      throw FitError(os.str());
    }
    x0 = lsq.params;
    for (std::size_t i = 0; i < xs.size(); ++i)
      weight[i] = 1.0 / std::max(comb_value(m.orders, x0, period_ns, xs[i]), 0.5);
  }
  m.params = lsq.params;
  m.covariance = lsq.covariance;
  m.chi2 = lsq.chi2;
  m.dof = static_cast<int>(xs.size()) - static_cast<int>(n + 2);
  m.converged = lsq.converged;
  m.iterations = lsq.iterations;
  return m;
}

}  // namespace detail

struct G2Fit {
  double g2_zero = 0.0;
  double g2_zero_u = 0.0;
  double central_amplitude = 0.0;
  std::vector<int> side_orders;
  std::vector<double> side_amplitudes;
  double background = 0.0;
  double decay_time = 0.0;  ///< fitted peak decay (s)
  double decay_time_u = 0.0;
  std::vector<LagWindow> excluded_windows;
  std::vector<std::string> param_names;
  Eigen::MatrixXd covariance;  ///< over param_names; amplitudes in counts, decay in ns
  double chi2 = 0.0;
  int dof = 0;
  bool converged = false;
  int iterations = 0;
};

/// g2[0] as the ratio of the fitted zero-delay peak amplitude to the mean
/// fitted side-peak amplitude.
inline G2Fit fit_g2_comb(const Histogram& h, double rep_rate, const std::vector<LagWindow>& excluded,
                         const CombFitOptions& opt = {}) {
  if (!(rep_rate > 0.0)) throw ParameterError("rep_rate", "must be > 0");
  if (h.size() == 0 || h.total() <= 0.0) throw DomainError("fit_g2_comb: empty histogram");
  std::vector<bool> use(h.size(), true);
  for (std::size_t i = 0; i < h.size(); ++i)
    for (const auto& w : excluded)
      if (w.contains(h.lag(i))) use[i] = false;

  const CombModel m = detail::fit_comb(h, rep_rate, use, {}, opt);
  const auto central = std::find(m.orders.begin(), m.orders.end(), 0);
  if (central == m.orders.end()) throw DomainError("fit_g2_comb: zero-delay peak is excluded or out of range");
  if (m.orders.size() < 2) throw DomainError("fit_g2_comb: every side peak is excluded");

  const auto n = static_cast<Eigen::Index>(m.peaks());
  const auto c = static_cast<Eigen::Index>(central - m.orders.begin());
  G2Fit fit;
  double side_sum = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    fit.param_names.push_back("A" + std::to_string(m.orders[static_cast<std::size_t>(j)]));
    if (j == c) continue;
    fit.side_orders.push_back(m.orders[static_cast<std::size_t>(j)]);
    fit.side_amplitudes.push_back(m.params[j]);
    side_sum += m.params[j];
  }
  fit.param_names.push_back("background");
  fit.param_names.push_back("decay_ns");
  const double ns = static_cast<double>(fit.side_orders.size());
  const double side_mean = side_sum / ns;
  if (!(side_mean > 0.0)) throw DomainError("fit_g2_comb: side peaks have zero amplitude");

  fit.central_amplitude = m.params[c];
  fit.g2_zero = m.params[c] / side_mean;
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(n + 2);
  for (Eigen::Index j = 0; j < n; ++j)
    grad[j] = j == c ? 1.0 / side_mean : -fit.central_amplitude / (ns * side_mean * side_mean);
  fit.g2_zero_u = std::sqrt(std::max(0.0, grad.dot(m.covariance * grad)));
  fit.background = m.background();
  fit.decay_time = m.decay_ns() * 1e-9;
  fit.decay_time_u = std::sqrt(std::max(0.0, m.covariance(n + 1, n + 1))) * 1e-9;
  fit.excluded_windows = excluded;
  fit.covariance = m.covariance;
  fit.chi2 = m.chi2;
  fit.dof = m.dof;
  fit.converged = m.converged;
  fit.iterations = m.iterations;
  return fit;
}

struct AfterpulseEstimate {
  double p = 0.0;
  double u = 0.0;
  double excess = 0.0;        ///< afterpulse counts in the window, shadows removed
  double window_counts = 0.0;
  double baseline = 0.0;      ///< fitted baseline integrated over the window
  double next_pulse_click = 0.0;  ///< q: click probability of the next live pulse
  double window_start = 0.0;  ///< s
  double window_end = 0.0;    ///< s
};

/// Afterpulse probability per click from a consecutive-delay histogram: counts
/// in (D, 1/R - guard) above a comb baseline, divided by the number of clicks.
///
/// An afterpulse at delay d also moves its successor: the next photon click,
/// at the following pulse with probability q, now follows at P - d instead of
/// P. For d in (D, P - D) that shadow lands inside the window at the mirror
/// lag, so the window holds X(t) = a(t) + q a(P - t) and the afterpulse total
/// over (D, P - D) is sum X / (1 + q); over (P - D, P - guard) the mirror lies
/// in the dead time and X = a. Shadows of later pulses sit between the higher
/// peaks, so the baseline is fitted only on [kP - guard, kP + D), k >= 1,
/// where no shadow can fall. q comes from the geometric decay of the peak
/// amplitudes, A_(k+1) / A_k = 1 - q.
inline AfterpulseEstimate estimate_afterpulsing(const Histogram& h, double rep_rate, double dead_time,
                                                double guard = 3e-9, const CombFitOptions& opt = {}) {
  if (!(rep_rate > 0.0) || !(dead_time > 0.0)) throw ParameterError("rep_rate/dead_time", "must be > 0");
  if (rep_rate * dead_time >= 1.0) throw ParameterError("rep_rate", "needs R * D < 1");
  const double period = 1.0 / rep_rate;
  AfterpulseEstimate est;
  est.window_start = dead_time;
  est.window_end = period - guard;
  if (est.window_end <= est.window_start) throw DomainError("estimate_afterpulsing: empty window");
  if (h.events_a == 0) throw DomainError("estimate_afterpulsing: histogram has no clicks");

  const double half = 0.5 * h.bin_width();
  const double max_lag = h.lag(h.size() - 1);
  // peaks whose baseline region is complete; at least two for the decay ratio
  std::vector<int> orders;
  for (int k = 1; k * period + dead_time <= max_lag + half; ++k) orders.push_back(k);

  std::vector<bool> use(h.size(), false);
  std::vector<std::size_t> window;
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double lag = h.lag(i);
    if (lag >= est.window_end) {
      const double k = std::floor((lag + guard) / period);  // nearest peak at or above lag - guard
      use[i] = k >= 1.0 && k <= static_cast<double>(orders.size()) && lag < k * period + dead_time;
    } else if (lag + half > est.window_start && lag > 0.0) {
      window.push_back(i);
    }
  }
  if (window.empty()) throw DomainError("estimate_afterpulsing: window holds no bins");
  if (orders.size() < 2)
    throw DomainError("estimate_afterpulsing: histogram must reach the second comb peak plus one dead time");
  const CombModel m = detail::fit_comb(h, rep_rate, use, orders, opt);
  const double period_ns = period * 1e9;
  const auto kpeaks = static_cast<Eigen::Index>(m.peaks());

  auto next_click = [&](const Eigen::VectorXd& p) {
    double head = 0.0, tail = 0.0;
    for (Eigen::Index j = 0; j + 1 < kpeaks; ++j) head += p[j];
    for (Eigen::Index j = 1; j < kpeaks; ++j) tail += p[j];
    return head > 0.0 ? 1.0 - tail / head : 0.0;
  };
  auto unshadow = [&](std::size_t i, double q) { return h.lag(i) < period - dead_time ? 1.0 / (1.0 + q) : 1.0; };
  auto total = [&](const Eigen::VectorXd& p) {
    const double q = next_click(p);
    double s = 0.0;
    for (std::size_t i : window)
      s += unshadow(i, q) * (h.counts[i] - detail::comb_value(m.orders, p, period_ns, h.lag(i) * 1e9));
    return s;
  };

  est.next_pulse_click = next_click(m.params);
  for (std::size_t i : window) {
    est.window_counts += h.counts[i];
    est.baseline += detail::comb_value(m.orders, m.params, period_ns, h.lag(i) * 1e9);
  }
  est.excess = total(m.params);

  Eigen::VectorXd grad(m.params.size());
  for (Eigen::Index j = 0; j < m.params.size(); ++j) {
    const double step = 1e-6 * std::max(std::abs(m.params[j]), 1e-3);
    Eigen::VectorXd up = m.params, dn = m.params;
    up[j] += step;
    dn[j] -= step;
    grad[j] = (total(up) - total(dn)) / (2.0 * step);
  }
  double var = 0.0;
  for (std::size_t i : window) var += std::pow(unshadow(i, est.next_pulse_click), 2) * h.counts[i];
  var += std::max(0.0, grad.dot(m.covariance * grad));
  const double n = static_cast<double>(h.events_a);
  est.p = est.excess / n;
  est.u = std::sqrt(std::max(var, 1.0)) / n;
  return est;
}

}  // namespace sprad
