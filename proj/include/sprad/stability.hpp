// stability.hpp -- count-trace stability: overlapping Allan deviation of the
// rate, choice of integration time, and linear drift detection.
#pragma once

#include <cmath>
#include <cstdint>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "sprad/errors.hpp"
#include "sprad/timestamp_stream.hpp"
#include "sprad/units.hpp"

namespace sprad {

/// Counts in consecutive bins of duration tau0 starting at `start`.
struct CountTrace {
  double tau0 = 1.0;  ///< s
  std::vector<double> counts;
  double start = 0.0;  ///< s

  std::size_t size() const noexcept { return counts.size(); }
};

inline void validate(const CountTrace& t) {
  if (!(t.tau0 > 0.0)) throw ParameterError("tau0", "must be > 0");
  if (t.counts.size() < 2) throw ParameterError("counts", "trace needs at least 2 bins");
  for (double c : t.counts)
    if (!(c >= 0.0)) throw ParameterError("counts", "must be non-negative");
}

/// Bins a timestamp stream into a count trace; a trailing partial bin is dropped.
inline CountTrace count_trace(const TimestampStream& s, double tau0) {
  if (!(tau0 > 0.0)) throw ParameterError("tau0", "must be > 0");
  const Picoseconds w = to_ps(tau0);
  CountTrace trace{tau0, std::vector<double>(static_cast<std::size_t>(s.duration_ps() / w), 0.0), 0.0};
  for (Picoseconds t : s.times()) {
    const auto i = static_cast<std::size_t>(t / w);
    if (i < trace.counts.size()) trace.counts[i] += 1.0;
  }
  return trace;
}

struct AllanPoint {
  double tau = 0.0;
  double sigma_rel = 0.0;
  friend bool operator==(const AllanPoint&, const AllanPoint&) = default;
};

/// Overlapping Allan deviation of the rate y = counts / tau0, divided by
/// the mean rate. Each tau is rounded to a multiple m of tau0; values with
/// m < 1 or tau > length * tau0 / 3 are omitted and reported in `skipped`.
inline std::vector<AllanPoint> allan_deviation(const CountTrace& trace, const std::vector<double>& taus,
                                               std::vector<double>* skipped = nullptr) {
  validate(trace);
  const std::size_t n = trace.size();
  std::vector<double> cum(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) cum[i + 1] = cum[i] + trace.counts[i];
  const double mean_count = cum[n] / static_cast<double>(n);

  std::vector<AllanPoint> out;
  for (double tau : taus) {
    const double ratio = tau / trace.tau0;
    const auto m = static_cast<std::size_t>(std::llround(ratio));
    if (m < 1 || std::abs(ratio - static_cast<double>(m)) > 1e-6 * ratio || 3 * m > n) {
      if (skipped) skipped->push_back(tau);
      else std::cerr << "warning: allan_deviation: tau " << tau << " s skipped\n";
      continue;
    }
    double acc = 0.0;
    const std::size_t terms = n - 2 * m + 1;
    for (std::size_t j = 0; j < terms; ++j) {
      const double d = (cum[j + 2 * m] - cum[j + m]) - (cum[j + m] - cum[j]);
      acc += d * d;
    }
    // Block sums differ by d counts; the mean-normalized rate difference is d / (m * mean_count).
    const double avar = acc / (2.0 * static_cast<double>(terms));
    const double sigma = mean_count > 0.0 ? std::sqrt(avar) / (static_cast<double>(m) * mean_count) : 0.0;
    out.push_back({static_cast<double>(m) * trace.tau0, sigma});
  }
  return out;
}

/// Integration time with the smallest deviation; ties go to the smaller tau.
inline double optimal_integration_time(const std::vector<AllanPoint>& curve) {
  if (curve.empty()) throw DomainError("optimal_integration_time: empty curve");
  const AllanPoint* best = &curve.front();
  for (const auto& p : curve)
    if (p.sigma_rel < best->sigma_rel || (p.sigma_rel == best->sigma_rel && p.tau < best->tau)) best = &p;
  return best->tau;
}

struct DriftEstimate {
  double slope = 0.0;         ///< rate change per second (counts/s per s)
  double slope_u = 0.0;       ///< Poisson-scale standard error of the slope
  double significance = 0.0;  ///< |slope| / slope_u
};

/// Least-squares slope of the rate against bin-centre time, with its
/// t-statistic under Poisson noise at the mean count level.
inline DriftEstimate detect_linear_drift(const CountTrace& trace) {
  validate(trace);
  if (trace.size() < 10) throw ParameterError("counts", "drift detection needs at least 10 bins");
  const auto n = static_cast<double>(trace.size());
  double tm = 0.0, ym = 0.0;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    tm += trace.start + (static_cast<double>(i) + 0.5) * trace.tau0;
    ym += trace.counts[i] / trace.tau0;
  }
  tm /= n;
  ym /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const double dt = trace.start + (static_cast<double>(i) + 0.5) * trace.tau0 - tm;
    sxx += dt * dt;
    sxy += dt * (trace.counts[i] / trace.tau0 - ym);
  }
  DriftEstimate d;
  d.slope = sxy / sxx;
  const double rate_var = ym / trace.tau0;  // Poisson variance of counts/tau0
  d.slope_u = std::sqrt(rate_var / sxx);
  d.significance = d.slope_u > 0.0 ? std::abs(d.slope) / d.slope_u : (d.slope == 0.0 ? 0.0 : INFINITY);
  return d;
}

}  // namespace sprad
