// sources.hpp -- photon emission streams for pulsed single-photon sources,
// attenuated pulsed lasers and continuously driven single emitters.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "sprad/errors.hpp"
#include "sprad/random.hpp"
#include "sprad/timestamp_stream.hpp"
#include "sprad/units.hpp"

namespace sprad {

/// Per-pulse photon-number probabilities, truncated at two photons.
struct PhotonNumberDistribution {
  double p0 = 1.0;
  double p1 = 0.0;
  double p2 = 0.0;

  double mean() const noexcept { return p1 + 2.0 * p2; }
  friend bool operator==(const PhotonNumberDistribution&, const PhotonNumberDistribution&) = default;
};

struct PulsedSps {
  double rep_rate = 20e6;  ///< trigger rate R (Hz)
  PhotonNumberDistribution distribution;
  double lifetime = 4e-9;  ///< emitter lifetime (s); sets the emission delay after a trigger
  friend bool operator==(const PulsedSps&, const PulsedSps&) = default;
};

struct PulsedLaser {
  double rep_rate = 20e6;     ///< Hz
  double mean_photons = 0.0;  ///< Poissonian mean photon number per pulse
  double pulse_width = 50e-12;
  friend bool operator==(const PulsedLaser&, const PulsedLaser&) = default;
};

struct CwSps {
  double photon_rate = 0.0;  ///< long-run photon rate r (1/s)
  double lifetime = 4e-9;
  friend bool operator==(const CwSps&, const CwSps&) = default;
};

using SourceSpec = std::variant<PulsedSps, PulsedLaser, CwSps>;

namespace detail {
inline bool finite_positive(double v) { return std::isfinite(v) && v > 0.0; }
}  // namespace detail

inline void validate(const PhotonNumberDistribution& d) {
  const double ps[] = {d.p0, d.p1, d.p2};
  const char* names[] = {"p0", "p1", "p2"};
  for (int i = 0; i < 3; ++i)
    if (!(ps[i] >= 0.0 && ps[i] <= 1.0)) throw ParameterError(names[i], "must lie in [0, 1]");
  if (std::abs(d.p0 + d.p1 + d.p2 - 1.0) > 1e-12)
    throw ParameterError("p0+p1+p2", "probabilities must sum to 1");
  if (d.p2 > d.p1) throw ParameterError("p2", "must not exceed p1 (sub-Poissonian source)");
}

inline void validate(const PulsedSps& s) {
  if (!detail::finite_positive(s.rep_rate)) throw ParameterError("rep_rate", "must be > 0");
  if (!detail::finite_positive(s.lifetime)) throw ParameterError("lifetime", "must be > 0");
  validate(s.distribution);
}

inline void validate(const PulsedLaser& s) {
  if (!detail::finite_positive(s.rep_rate)) throw ParameterError("rep_rate", "must be > 0");
  if (!(std::isfinite(s.mean_photons) && s.mean_photons >= 0.0))
    throw ParameterError("mean_photons", "must be >= 0");
  if (!(std::isfinite(s.pulse_width) && s.pulse_width >= 0.0))
    throw ParameterError("pulse_width", "must be >= 0");
}

inline void validate(const CwSps& s) {
  if (!(std::isfinite(s.photon_rate) && s.photon_rate >= 0.0))
    throw ParameterError("photon_rate", "must be >= 0");
  if (!detail::finite_positive(s.lifetime)) throw ParameterError("lifetime", "must be > 0");
  if (s.photon_rate * s.lifetime >= 1.0)
    throw ParameterError("photon_rate", "rate * lifetime must be < 1");
}

inline void validate(const SourceSpec& spec) {
  std::visit([](const auto& s) { validate(s); }, spec);
}

namespace detail {
template <class Spec>
const Spec& checked(const Spec& spec) {
  validate(spec);
  return spec;
}
}  // namespace detail

/// Mean photons per second the source delivers.
inline double nominal_photon_rate(const SourceSpec& spec) {
  return std::visit(
      [](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, PulsedSps>) return s.rep_rate * s.distribution.mean();
        else if constexpr (std::is_same_v<T, PulsedLaser>) return s.rep_rate * s.mean_photons;
        else return s.photon_rate;
      },
      spec);
}

/// Trigger rate of pulsed sources; empty for continuous sources.
inline std::optional<double> repetition_rate(const SourceSpec& spec) {
  if (auto* p = std::get_if<PulsedSps>(&spec)) return p->rep_rate;
  if (auto* p = std::get_if<PulsedLaser>(&spec)) return p->rep_rate;
  return std::nullopt;
}

inline std::string source_label(const SourceSpec& spec) {
  static const char* labels[] = {"pulsed_sps", "pulsed_laser", "cw_sps"};
  return labels[spec.index()];
}

/// Normalized factorial moment <n(n-1)>/<n>^2 of the per-pulse distribution.
inline double per_pulse_g2_zero(const PhotonNumberDistribution& d) {
  validate(d);
  const double m = d.mean();
  if (m <= 0.0) throw DomainError("per_pulse_g2_zero: mean photon number is zero");
  return 2.0 * d.p2 / (m * m);
}

/// Inverse of per_pulse_g2_zero at a fixed mean photon number per pulse.
inline PhotonNumberDistribution distribution_for_g2(double mean, double g2) {
  if (!(mean > 0.0) || !(g2 >= 0.0)) throw ParameterError("mean/g2", "need mean > 0 and g2 >= 0");
  PhotonNumberDistribution d;
  d.p2 = 0.5 * g2 * mean * mean;
  d.p1 = mean - 2.0 * d.p2;
  d.p0 = 1.0 - d.p1 - d.p2;
  validate(d);
  return d;
}

namespace detail {

/// Emission times that may arrive out of trigger order; released in time
/// order and forced strictly increasing (a 1-ps nudge on collisions).
class PendingPhotons {
 public:
  void push(Picoseconds t) { heap_.push(t); }

  void release_before(Picoseconds until, std::vector<Picoseconds>& out) {
    while (!heap_.empty() && heap_.top() < until) {
      Picoseconds t = heap_.top();
      if (t <= last_) {
        t = last_ + 1;
        if (t >= until) {
          heap_.pop();
          heap_.push(t);
          return;
        }
      }
      heap_.pop();
      out.push_back(t);
      last_ = t;
    }
  }

 private:
  std::priority_queue<Picoseconds, std::vector<Picoseconds>, std::greater<>> heap_;
  Picoseconds last_ = -1;
};

/// Number of empty triggers before the next non-empty one.
inline std::int64_t empty_run(Engine& rng, double p_nonempty) {
  if (p_nonempty >= 1.0) return 0;
  std::geometric_distribution<std::int64_t> geo(p_nonempty);
  return geo(rng);
}

inline constexpr std::int64_t kNever = std::numeric_limits<std::int64_t>::max();

}  // namespace detail

/// Incremental pulsed single-photon emitter. Successive `emit_until` calls
/// produce the same events a single call over the whole span would.
class PulsedSpsEmitter {
 public:
  PulsedSpsEmitter(const PulsedSps& spec, std::uint64_t seed)
      : spec_(detail::checked(spec)), rng_(make_engine(seed, 1)),
        period_ps_(kPicosecondsPerSecond / spec.rep_rate),
        p_nonempty_(spec.distribution.p1 + spec.distribution.p2),
        lifetime_ps_(spec.lifetime * kPicosecondsPerSecond) {
    next_ = p_nonempty_ > 0.0 ? detail::empty_run(rng_, p_nonempty_) : detail::kNever;
  }

  void emit_until(Picoseconds until, std::vector<Picoseconds>& out) {
    std::exponential_distribution<double> delay(1.0 / lifetime_ps_);
    const double p_two = spec_.distribution.p2 / p_nonempty_;
    while (next_ != detail::kNever && trigger_time(next_) < until) {
      const Picoseconds trigger = trigger_time(next_);
      const int n = uniform01(rng_) < p_two ? 2 : 1;
      for (int i = 0; i < n; ++i)
        pending_.push(trigger + static_cast<Picoseconds>(std::llround(delay(rng_))));
      next_ += 1 + detail::empty_run(rng_, p_nonempty_);
    }
    pending_.release_before(until, out);
  }

 private:
  Picoseconds trigger_time(std::int64_t k) const {
    return static_cast<Picoseconds>(std::llround(static_cast<double>(k) * period_ps_));
  }

  PulsedSps spec_;
  Engine rng_;
  double period_ps_;
  double p_nonempty_;
  double lifetime_ps_;
  std::int64_t next_ = 0;  // index of the next non-empty trigger
  detail::PendingPhotons pending_;
};

/// Incremental Poissonian pulsed emitter with uniform jitter inside the pulse.
class PulsedLaserEmitter {
 public:
  PulsedLaserEmitter(const PulsedLaser& spec, std::uint64_t seed)
      : spec_(detail::checked(spec)), rng_(make_engine(seed, 2)),
        period_ps_(kPicosecondsPerSecond / spec.rep_rate),
        p_nonempty_(-std::expm1(-spec.mean_photons)),
        width_ps_(spec.pulse_width * kPicosecondsPerSecond) {
    next_ = p_nonempty_ > 0.0 ? detail::empty_run(rng_, p_nonempty_) : detail::kNever;
  }

  void emit_until(Picoseconds until, std::vector<Picoseconds>& out) {
    while (next_ != detail::kNever && trigger_time(next_) < until) {
      const Picoseconds trigger = trigger_time(next_);
      const int n = truncated_poisson();
      for (int i = 0; i < n; ++i)
        pending_.push(trigger + static_cast<Picoseconds>(std::llround(uniform01(rng_) * width_ps_)));
      next_ += 1 + detail::empty_run(rng_, p_nonempty_);
    }
    pending_.release_before(until, out);
  }

 private:
  Picoseconds trigger_time(std::int64_t k) const {
    return static_cast<Picoseconds>(std::llround(static_cast<double>(k) * period_ps_));
  }

  // Poisson(mu) conditioned on n >= 1, by inversion.
  int truncated_poisson() {
    const double mu = spec_.mean_photons;
    const double target = uniform01(rng_) * p_nonempty_;
    double pmf = std::exp(-mu) * mu;
    double cum = pmf;
    int n = 1;
    while (cum < target && n < 10000) {
      ++n;
      pmf *= mu / n;
      cum += pmf;
    }
    return n;
  }

  PulsedLaser spec_;
  Engine rng_;
  double period_ps_;
  double p_nonempty_;
  double width_ps_;
  std::int64_t next_ = 0;
  detail::PendingPhotons pending_;
};

/// Incremental continuously driven emitter. Gaps are the sum of an emission
/// delay ~ Exp(lifetime) and a re-excitation wait ~ Exp(1/r - lifetime), so
/// the rate is exactly r and the gap density vanishes at zero lag.
class CwSpsEmitter {
 public:
  CwSpsEmitter(const CwSps& spec, std::uint64_t seed)
      : spec_(detail::checked(spec)), rng_(make_engine(seed, 3)) {
    if (spec_.photon_rate > 0.0) {
      lifetime_ps_ = spec_.lifetime * kPicosecondsPerSecond;
      excitation_ps_ = (1.0 / spec_.photon_rate - spec_.lifetime) * kPicosecondsPerSecond;
      next_ = gap();
    }
  }

  void emit_until(Picoseconds until, std::vector<Picoseconds>& out) {
    if (spec_.photon_rate <= 0.0) return;
    while (true) {
      Picoseconds t = static_cast<Picoseconds>(std::llround(next_));
      if (t <= last_) t = last_ + 1;
      if (t >= until) return;
      out.push_back(t);
      last_ = t;
      next_ += gap();
    }
  }

 private:
  double gap() {
    std::exponential_distribution<double> emit(1.0 / lifetime_ps_);
    std::exponential_distribution<double> excite(1.0 / excitation_ps_);
    return excite(rng_) + emit(rng_);
  }

  CwSps spec_;
  Engine rng_;
  double lifetime_ps_ = 0.0;
  double excitation_ps_ = 0.0;
  double next_ = 0.0;
  Picoseconds last_ = -1;
};

/// Type-erased emitter over any SourceSpec.
class Emitter {
 public:
  Emitter(const SourceSpec& spec, std::uint64_t seed)
      : impl_(std::visit(
            [seed](const auto& s) -> Impl {
              using T = std::decay_t<decltype(s)>;
              if constexpr (std::is_same_v<T, PulsedSps>) return PulsedSpsEmitter(s, seed);
              else if constexpr (std::is_same_v<T, PulsedLaser>) return PulsedLaserEmitter(s, seed);
              else return CwSpsEmitter(s, seed);
            },
            spec)) {}

  void emit_until(Picoseconds until, std::vector<Picoseconds>& out) {
    std::visit([&](auto& e) { e.emit_until(until, out); }, impl_);
  }

 private:
  using Impl = std::variant<PulsedSpsEmitter, PulsedLaserEmitter, CwSpsEmitter>;
  Impl impl_;
};

/// Whole-stream generation over [0, duration] seconds.
inline TimestampStream generate(const SourceSpec& spec, double duration, std::uint64_t seed) {
  validate(spec);
  if (!(duration > 0.0)) throw EmptyStreamError("duration must be positive");
  if (auto rate = repetition_rate(spec); rate && duration * *rate < 1.0 - 1e-12)
    throw EmptyStreamError("duration shorter than one trigger period");
  const Picoseconds end = to_ps(duration);
  std::vector<Picoseconds> times;
  times.reserve(static_cast<std::size_t>(std::min(1e8, nominal_photon_rate(spec) * duration * 1.01 + 16)));
  Emitter emitter(spec, seed);
  emitter.emit_until(end + 1, times);
  return {std::move(times), end, source_label(spec)};
}

inline TimestampStream generate_pulsed_sps(const PulsedSps& spec, double duration, std::uint64_t seed) {
  return generate(SourceSpec{spec}, duration, seed);
}

inline TimestampStream generate_pulsed_laser(const PulsedLaser& spec, double duration, std::uint64_t seed) {
  return generate(SourceSpec{spec}, duration, seed);
}

inline TimestampStream generate_cw_sps(const CwSps& spec, double duration, std::uint64_t seed) {
  return generate(SourceSpec{spec}, duration, seed);
}

}  // namespace sprad
