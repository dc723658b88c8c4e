#include <gtest/gtest.h>

#include <cmath>

#include "sprad/detectors.hpp"
#include "sprad/sources.hpp"

using namespace sprad;

namespace {

SpadModel ideal(double eta0 = 1.0, double dead = 20e-9) { return {eta0, dead, 0.0, 5e-9, 0.0}; }

void expect_gaps_at_least_dead_time(const TimestampStream& clicks, double dead_time) {
  const Picoseconds d = to_ps(dead_time);
  const auto t = clicks.times();
  for (std::size_t i = 1; i < t.size(); ++i) ASSERT_GT(t[i] - t[i - 1], d) << "click " << i;
}

void expect_partition(const DetectorCounters& c) {
  EXPECT_EQ(c.clicks, c.photon_clicks + c.afterpulse_clicks + c.dark_clicks);
}

}  // namespace

TEST(Detectors, SinglePhotonSingleClick) {
  const TimestampStream photons({to_ps(1e-6)}, to_ps(2e-6));
  const ClickStream cs = detect(photons, ideal(), 1);
  ASSERT_EQ(cs.stream.size(), 1u);
  EXPECT_EQ(cs.stream.times()[0], 1000000);
  EXPECT_EQ(cs.counters.clicks, 1u);
}

TEST(Detectors, SecondPhotonInsideDeadTimeIsLost) {
  const TimestampStream photons({1000, 1000 + to_ps(10e-9)}, to_ps(1e-6));
  const ClickStream cs = detect(photons, ideal(), 1);
  EXPECT_EQ(cs.counters.clicks, 1u);
  EXPECT_EQ(cs.counters.clicks_lost_to_deadtime, 1u);
}

TEST(Detectors, DeadWindowIsClosed) {
  // exactly D after a click is still dead; one picosecond later is alive
  const Picoseconds d = to_ps(20e-9);
  EXPECT_EQ(detect(TimestampStream({0, d}, 2 * d), ideal(), 1).counters.clicks, 1u);
  EXPECT_EQ(detect(TimestampStream({0, d + 1}, 2 * d), ideal(), 1).counters.clicks, 2u);
}

TEST(Detectors, NonParalyzable) {
  // a blocked photon at 15 ns does not extend the window: 25 ns clicks
  const TimestampStream photons({0, 15000, 25000}, 100000);
  const ClickStream cs = detect(photons, ideal(), 1);
  EXPECT_EQ(cs.counters.clicks, 2u);
  EXPECT_EQ(cs.stream.times()[1], 25000);
}

TEST(Detectors, ReferenceScaleClickRate) {
  const PulsedSps src{20e6, distribution_for_g2(0.0227, 0.0), 4e-9};
  const SpadModel spad = ideal(0.665);
  const CountingResult r = run_chunked(src, spad, 10.0, 4);
  const double rate = static_cast<double>(r.counters.clicks) / 10.0;
  const double expected = 0.0227 * 20e6 * 0.665;  // Int[R D] = 0: no loss
  EXPECT_NEAR(expected, 3.0e5, 0.02e5);
  EXPECT_NEAR(rate, expected, 4.0 * std::sqrt(expected / 10.0));
}

TEST(Detectors, ClicksOverPhotonsTendToEta0WithoutDeadTime) {
  const TimestampStream photons = generate(CwSps{1e6, 1e-9}, 1.0, 8);
  const ClickStream cs = detect(photons, ideal(0.665, 0.0), 2);
  const double n = static_cast<double>(photons.size());
  EXPECT_NEAR(cs.counters.clicks / n, 0.665, 3.0 * std::sqrt(0.665 * 0.335 / n));
}

TEST(Detectors, GapAndPartitionPropertiesOverManyConfigurations) {
  const SourceSpec sources[] = {PulsedSps{60e6, {0.4, 0.5, 0.1}, 0.5e-9}, PulsedLaser{80e6, 0.9},
                                CwSps{2e7, 4e-9}};
  const SpadModel spads[] = {{0.665, 20e-9, 0.05, 5e-9, 1e5}, {0.9, 7e-9, 0.3, 1e-9, 1e6}, {0.3, 50e-9, 0.0, 0.0, 0.0},
                             {1.0, 20e-9, 0.5, 0.0, 1e4}};
  std::uint64_t seed = 1;
  for (const auto& src : sources)
    for (const auto& spad : spads) {
      const TimestampStream photons = generate(src, 2e-3, seed++);
      const ClickStream cs = detect(photons, spad, seed++);
      expect_gaps_at_least_dead_time(cs.stream, spad.dead_time);
      expect_partition(cs.counters);
      EXPECT_EQ(cs.counters.clicks, cs.stream.size());
      EXPECT_EQ(cs.counters.photons_in, photons.size());
    }
}

TEST(Detectors, AfterpulsesFollowTheDeadTime) {
  // isolated photons 1 us apart: every afterpulse lands in (D, D + tail)
  std::vector<Picoseconds> t;
  for (int i = 0; i < 20000; ++i) t.push_back(static_cast<Picoseconds>(i) * 1000000);
  const TimestampStream photons(t, t.back() + 1000000);
  const SpadModel spad{1.0, 20e-9, 0.1, 5e-9, 0.0};
  const ClickStream cs = detect(photons, spad, 3);
  // cascades: each click afterpulses with p, so afterpulses = p / (1 - p) per photon click
  const double expected = 20000 * 0.1 / 0.9;
  EXPECT_NEAR(static_cast<double>(cs.counters.afterpulse_clicks), expected, 3.0 * std::sqrt(expected));
  const auto c = cs.stream.times();
  for (std::size_t i = 1; i < c.size(); ++i) {
    const Picoseconds gap = c[i] - c[i - 1];
    if (gap < 500000) EXPECT_GT(gap, to_ps(20e-9));
  }
}

TEST(Detectors, DarkCountsArePoisson) {
  const TimestampStream nothing({}, to_ps(1.0));
  const SpadModel spad{0.665, 20e-9, 0.0, 5e-9, 1e3};
  const ClickStream cs = detect(nothing, spad, 6);
  EXPECT_NEAR(static_cast<double>(cs.counters.dark_clicks), 1e3, 3.0 * std::sqrt(1e3));
  EXPECT_EQ(cs.counters.clicks, cs.counters.dark_clicks);
}

TEST(Detectors, MonotoneInEta0) {
  const TimestampStream photons = generate(PulsedLaser{60e6, 0.5}, 0.02, 10);
  double prev = 0.0;
  for (double eta0 : {0.2, 0.4, 0.6, 0.8, 1.0}) {
    double clicks = 0.0;
    for (std::uint64_t seed = 0; seed < 4; ++seed)
      clicks += static_cast<double>(detect(photons, ideal(eta0), seed).counters.clicks);
    EXPECT_GT(clicks, prev) << "eta0 " << eta0;
    prev = clicks;
  }
}

TEST(Detectors, ChunkedRunMatchesWholeStream) {
  const SourceSpec src = PulsedSps{40e6, {0.5, 0.45, 0.05}, 4e-9};
  const SpadModel spad{0.665, 20e-9, 0.05, 5e-9, 2e4};
  const double duration = 5e-3;
  const std::uint64_t seed = 77;

  std::vector<Picoseconds> chunked_photons, chunked_clicks;
  const CountingResult r = run_chunked(src, spad, duration, seed, 1.234e-5,
                                       [&](std::span<const Picoseconds> p, std::span<const Picoseconds> c) {
                                         chunked_photons.insert(chunked_photons.end(), p.begin(), p.end());
                                         chunked_clicks.insert(chunked_clicks.end(), c.begin(), c.end());
                                       });

  // whole-stream path with the same sub-streams over [0, duration)
  Emitter emitter(src, seed);
  std::vector<Picoseconds> photons;
  emitter.emit_until(to_ps(duration), photons);
  SpadDetector det(spad, seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<Picoseconds> clicks;
  det.process(photons, to_ps(duration), clicks);

  EXPECT_EQ(chunked_photons, photons);
  EXPECT_EQ(chunked_clicks, clicks);
  EXPECT_EQ(r.counters, det.counters());
  EXPECT_EQ(r.photons_emitted, photons.size());
}

TEST(Detectors, Determinism) {
  const TimestampStream photons = generate(CwSps{5e6, 1e-9}, 1e-2, 1);
  const SpadModel spad{0.5, 20e-9, 0.05, 5e-9, 1e4};
  const ClickStream a = detect(photons, spad, 5), b = detect(photons, spad, 5);
  EXPECT_EQ(a.stream, b.stream);
  EXPECT_EQ(a.counters, b.counters);
}

TEST(Detectors, ValidationNamesTheField) {
  try {
    validate(SpadModel{1.5});
    FAIL();
  } catch (const ParameterError& e) {
    EXPECT_EQ(e.field(), "eta0");
  }
  EXPECT_THROW(validate(SpadModel{0.5, -1e-9}), ParameterError);
  EXPECT_THROW(validate(SpadModel{0.5, 20e-9, 1.0}), ParameterError);
}

TEST(Lnpd, ZeroRateReadsTheOffset) {
  const LnpdModel m{0.5562e12, 0.0, 1.25e-3, 0.0, 0.0};
  EXPECT_EQ(lnpd_read(0.0, 784.7e-9, m, 10.0, 1u), 1.25e-3);
}

TEST(Lnpd, ReferenceScaleVoltage) {
  const LnpdModel m{};
  const double hc = 1.98645e-25;  // J m, rounded
  const double power = 4.5e5 * hc / 784.7e-9;
  EXPECT_NEAR(power, 1.14e-13, 0.005e-13);
  const double u = lnpd_read(4.5e5, 784.7e-9, m, 0.0, 1u);
  EXPECT_NEAR(u, 6.34e-2, 0.005e-2);
  EXPECT_NEAR(u, 0.5562e12 * 4.5e5 * kPlanckTimesC / 784.7e-9, 1e-15);
}

TEST(Lnpd, LinearOffsetDrift) {
  const LnpdModel m{0.5562e12, 0.0, 2e-3, 1e-6, 0.0};
  EXPECT_NEAR(lnpd_read(0.0, 784.7e-9, m, 60.0, 1u), 2e-3 + 60e-6, 1e-18);
}

TEST(Lnpd, AffineInRate) {
  const LnpdModel m{0.5562e12, 0.0, 1e-4, 0.0, 0.0};
  const double lambda = 784.7e-9;
  const double a = lnpd_read(1e5, lambda, m, 0.0, 1u), b = lnpd_read(5e5, lambda, m, 0.0, 1u);
  const double slope = (b - a) / 4e5;
  const double expected = m.responsivity * kPlanckTimesC / lambda;
  EXPECT_NEAR(slope / expected, 1.0, 1e-12);
}

TEST(Lnpd, NoiseHasTheConfiguredSpread) {
  const LnpdModel m{0.5562e12, 0.0, 0.0, 0.0, 1e-4};
  Engine rng = make_engine(3, 20);
  double s = 0.0, s2 = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double u = lnpd_read(0.0, 784.7e-9, m, 0.0, rng);
    s += u;
    s2 += u * u;
  }
  const double sd = std::sqrt(s2 / n - (s / n) * (s / n));
  EXPECT_NEAR(sd, 1e-4, 3.0 * 1e-4 / std::sqrt(2.0 * n));
}

TEST(Detectors, DarkCorrectionWeight) {
  EXPECT_NEAR(dark_correction_weight({0.665, 2e-8, 0.0, 5e-9, 1e3}), 2e-5, 1e-20);
  EXPECT_EQ(dark_correction_weight({0.665, 2e-8, 0.0, 5e-9, 0.0}), 0.0);
  const SpadModel noisy{0.665, 2e-8, 0.0, 5e-9, 1e6};
  EXPECT_NEAR(dark_correction_weight(noisy), 0.02, 1e-15);
  EXPECT_TRUE(dark_correction_significant(noisy));
  EXPECT_FALSE(dark_correction_significant({0.665, 2e-8, 0.0, 5e-9, 1e3}));
}
