// detectors.hpp -- click detector (SPAD) and analog reference detector models.
//
// The SPAD is non-paralyzable: an event is registered only if it falls
// outside the closed window [t_last_click, t_last_click + D], and blocked
// events do not extend the window. Every registered click, afterpulse clicks
// included, spawns an afterpulse candidate with probability p_after at
// t_click + D + Exp(after_delay_mean); candidates are gated like any event.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <queue>
#include <random>
#include <span>
#include <vector>

#include "sprad/errors.hpp"
#include "sprad/random.hpp"
#include "sprad/sources.hpp"
#include "sprad/timestamp_stream.hpp"
#include "sprad/units.hpp"

namespace sprad {

struct SpadModel {
  double eta0 = 0.665;            ///< intrinsic detection efficiency
  double dead_time = 20e-9;       ///< D (s)
  double p_after = 0.0;           ///< afterpulse probability per click
  double after_delay_mean = 5e-9; ///< mean afterpulse delay beyond D (s)
  double dark_rate = 0.0;         ///< N_DC (1/s)
  friend bool operator==(const SpadModel&, const SpadModel&) = default;
};

/// Above this N_DC * D the dark/dead-time interplay is no longer negligible.
inline constexpr double kDarkDeadTimeWarnLevel = 1e-3;

inline void validate(const SpadModel& m) {
  if (!(m.eta0 > 0.0 && m.eta0 <= 1.0)) throw ParameterError("eta0", "must lie in (0, 1]");
  if (!(std::isfinite(m.dead_time) && m.dead_time >= 0.0)) throw ParameterError("dead_time", "must be >= 0");
  if (!(m.p_after >= 0.0 && m.p_after < 1.0)) throw ParameterError("p_after", "must lie in [0, 1)");
  if (!(std::isfinite(m.after_delay_mean) && m.after_delay_mean >= 0.0))
    throw ParameterError("after_delay_mean", "must be >= 0");
  if (!(std::isfinite(m.dark_rate) && m.dark_rate >= 0.0)) throw ParameterError("dark_rate", "must be >= 0");
}

/// N_DC * D: weight of dark counts interacting with the dead time.
inline double dark_correction_weight(const SpadModel& m) {
  validate(m);
  return m.dark_rate * m.dead_time;
}

inline bool dark_correction_significant(const SpadModel& m) {
  return dark_correction_weight(m) > kDarkDeadTimeWarnLevel;
}

struct LnpdModel {
  double responsivity = 0.5562e12;               ///< S_LNPD (V/W)
  double responsivity_rel_u = 0.0019 / 0.5562;   ///< relative standard uncertainty of S_LNPD
  double offset = 0.0;                           ///< U0 at t = 0 (V)
  double offset_drift = 0.0;                     ///< dU0/dt (V/s)
  double noise_sd = 0.0;                         ///< per-reading noise (V)
  friend bool operator==(const LnpdModel&, const LnpdModel&) = default;
};

inline void validate(const LnpdModel& m) {
  if (!(std::isfinite(m.responsivity) && m.responsivity > 0.0))
    throw ParameterError("responsivity", "must be > 0");
  if (!(m.responsivity_rel_u >= 0.0)) throw ParameterError("responsivity_rel_u", "must be >= 0");
  if (!(m.noise_sd >= 0.0)) throw ParameterError("noise_sd", "must be >= 0");
  if (!std::isfinite(m.offset) || !std::isfinite(m.offset_drift))
    throw ParameterError("offset", "must be finite");
}

/// Noise-free LNPD voltage for a photon rate at time t.
inline double lnpd_mean_voltage(double photon_rate, double wavelength, const LnpdModel& m, double t) {
  const double power = photon_rate * photon_energy(wavelength);
  return m.responsivity * power + m.offset + m.offset_drift * t;
}

inline double lnpd_read(double photon_rate, double wavelength, const LnpdModel& m, double t, Engine& rng) {
  validate(m);
  if (!(photon_rate >= 0.0)) throw ParameterError("photon_rate", "must be >= 0");
  double u = lnpd_mean_voltage(photon_rate, wavelength, m, t);
  if (m.noise_sd > 0.0) u += std::normal_distribution<double>(0.0, m.noise_sd)(rng);
  return u;
}

inline double lnpd_read(double photon_rate, double wavelength, const LnpdModel& m, double t,
                        std::uint64_t seed) {
  Engine rng = make_engine(seed, 20);
  return lnpd_read(photon_rate, wavelength, m, t, rng);
}

struct DetectorCounters {
  std::uint64_t photons_in = 0;
  std::uint64_t clicks = 0;
  std::uint64_t photon_clicks = 0;
  std::uint64_t clicks_lost_to_deadtime = 0;  ///< detectable photons and darks that fell in a dead window
  std::uint64_t afterpulse_clicks = 0;
  std::uint64_t dark_clicks = 0;
  std::uint64_t afterpulses_blocked = 0;

  DetectorCounters& operator+=(const DetectorCounters& o) {
    photons_in += o.photons_in;
    clicks += o.clicks;
    photon_clicks += o.photon_clicks;
    clicks_lost_to_deadtime += o.clicks_lost_to_deadtime;
    afterpulse_clicks += o.afterpulse_clicks;
    dark_clicks += o.dark_clicks;
    afterpulses_blocked += o.afterpulses_blocked;
    return *this;
  }
  friend DetectorCounters operator-(DetectorCounters a, const DetectorCounters& b) {
    a.photons_in -= b.photons_in;
    a.clicks -= b.clicks;
    a.photon_clicks -= b.photon_clicks;
    a.clicks_lost_to_deadtime -= b.clicks_lost_to_deadtime;
    a.afterpulse_clicks -= b.afterpulse_clicks;
    a.dark_clicks -= b.dark_clicks;
    a.afterpulses_blocked -= b.afterpulses_blocked;
    return a;
  }
  friend bool operator==(const DetectorCounters&, const DetectorCounters&) = default;
};

struct ClickStream {
  TimestampStream stream;
  DetectorCounters counters;
};

/// Stateful SPAD fed in time-ordered chunks. Feeding [0, t1) then [t1, t2)
/// yields exactly the clicks of one call over [0, t2).
class SpadDetector {
 public:
  SpadDetector(const SpadModel& model, std::uint64_t seed)
      : model_(checked(model)),
        dead_ps_(to_ps(model.dead_time)),
        after_mean_ps_(model.after_delay_mean * kPicosecondsPerSecond),
        efficiency_rng_(make_engine(seed, 10)),
        dark_rng_(make_engine(seed, 11)),
        after_rng_(make_engine(seed, 12)) {
    if (model_.dark_rate > 0.0) {
      dark_mean_ps_ = kPicosecondsPerSecond / model_.dark_rate;
      advance_dark();
    }
  }

  /// Registers `photons` (sorted, all < until) and every dark or afterpulse
  /// event before `until`; clicks are appended to `clicks`.
  void process(std::span<const Picoseconds> photons, Picoseconds until, std::vector<Picoseconds>& clicks) {
    if (!photons.empty() && photons.back() >= until)
      throw ParameterError("photons", "chunk contains events at or after its end");
    std::size_t i = 0;
    while (true) {
      const Picoseconds tp = i < photons.size() ? photons[i] : detail::kNever;
      const Picoseconds ta = afterpulses_.empty() ? detail::kNever : afterpulses_.top();
      const Picoseconds t = std::min({tp, next_dark_, ta});
      if (t >= until) break;
      if (t == tp) {
        ++i;
        ++counters_.photons_in;
        if (uniform01(efficiency_rng_) >= model_.eta0) continue;
        if (blocked(t)) {
          ++counters_.clicks_lost_to_deadtime;
          continue;
        }
        ++counters_.photon_clicks;
      } else if (t == next_dark_) {
        advance_dark();
        if (blocked(t)) {
          ++counters_.clicks_lost_to_deadtime;
          continue;
        }
        ++counters_.dark_clicks;
      } else {
        afterpulses_.pop();
        if (blocked(t)) {
          ++counters_.afterpulses_blocked;
          continue;
        }
        ++counters_.afterpulse_clicks;
      }
      register_click(t, clicks);
    }
  }

  const DetectorCounters& counters() const noexcept { return counters_; }
  const SpadModel& model() const noexcept { return model_; }

 private:
  static const SpadModel& checked(const SpadModel& m) {
    validate(m);
    return m;
  }

  bool blocked(Picoseconds t) const { return has_clicked_ && t <= last_click_ + dead_ps_; }

  void register_click(Picoseconds t, std::vector<Picoseconds>& clicks) {
    clicks.push_back(t);
    ++counters_.clicks;
    last_click_ = t;
    has_clicked_ = true;
    if (model_.p_after > 0.0 && uniform01(after_rng_) < model_.p_after) {
      double delay = 0.0;
      if (after_mean_ps_ > 0.0) delay = std::exponential_distribution<double>(1.0 / after_mean_ps_)(after_rng_);
      afterpulses_.push(t + dead_ps_ + std::max<Picoseconds>(1, std::llround(delay)));
    }
  }

  void advance_dark() {
    dark_clock_ += std::exponential_distribution<double>(1.0 / dark_mean_ps_)(dark_rng_);
    const auto t = static_cast<Picoseconds>(std::llround(dark_clock_));
    next_dark_ = std::max(t, next_dark_ == detail::kNever ? t : next_dark_ + 1);
  }

  SpadModel model_;
  Picoseconds dead_ps_;
  double after_mean_ps_;
  double dark_mean_ps_ = 0.0;
  double dark_clock_ = 0.0;
  Engine efficiency_rng_;
  Engine dark_rng_;
  Engine after_rng_;
  Picoseconds next_dark_ = detail::kNever;
  Picoseconds last_click_ = 0;
  bool has_clicked_ = false;
  std::priority_queue<Picoseconds, std::vector<Picoseconds>, std::greater<>> afterpulses_;
  DetectorCounters counters_;
};

/// Runs a whole photon stream through a SPAD. Dark counts cover
/// [0, duration]; afterpulses past the end are dropped.
inline ClickStream detect(const TimestampStream& photons, const SpadModel& model, std::uint64_t seed) {
  SpadDetector spad(model, seed);
  std::vector<Picoseconds> clicks;
  clicks.reserve(photons.size() / 2 + 16);
  spad.process(photons.times(), photons.duration_ps() + 1, clicks);
  return {TimestampStream(std::move(clicks), photons.duration_ps(), "spad"), spad.counters()};
}

/// Photon and click totals of a chunked run that keeps no event lists.
struct CountingResult {
  std::uint64_t photons_emitted = 0;
  DetectorCounters counters;

  double efficiency() const {
    return photons_emitted ? static_cast<double>(counters.clicks) / static_cast<double>(photons_emitted) : 0.0;
  }
};

/// Streams a source through a SPAD over [0, duration) in chunks of
/// `chunk` seconds. `on_chunk(photons, clicks)` sees each chunk's events.
template <class OnChunk>
CountingResult run_chunked(const SourceSpec& source, const SpadModel& spad_model, double duration,
                           std::uint64_t seed, double chunk, OnChunk&& on_chunk) {
  if (!(chunk > 0.0)) throw ParameterError("chunk", "must be > 0");
  Emitter emitter(source, seed);
  SpadDetector spad(spad_model, seed ^ 0x9e3779b97f4a7c15ull);
  const Picoseconds end = to_ps(duration);
  const Picoseconds step = std::max<Picoseconds>(1, to_ps(chunk));
  std::vector<Picoseconds> photons;
  std::vector<Picoseconds> clicks;
  CountingResult result;
  for (Picoseconds t = 0; t < end;) {
    const Picoseconds until = std::min(end, t + step);
    photons.clear();
    clicks.clear();
    emitter.emit_until(until, photons);
    spad.process(photons, until, clicks);
    result.photons_emitted += photons.size();
    on_chunk(std::span<const Picoseconds>(photons), std::span<const Picoseconds>(clicks));
    t = until;
  }
  result.counters = spad.counters();
  return result;
}

inline CountingResult run_chunked(const SourceSpec& source, const SpadModel& spad_model, double duration,
                                  std::uint64_t seed, double chunk = 1e-2) {
  return run_chunked(source, spad_model, duration, seed, chunk,
                     [](std::span<const Picoseconds>, std::span<const Picoseconds>) {});
}

}  // namespace sprad
