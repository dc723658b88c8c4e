#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "sprad/calibration.hpp"

using namespace sprad;

namespace {

constexpr double kLambda = 784.7e-9;

// Photon rate -> LNPD voltage, by hand.
double volts(double rate, const LnpdModel& m) { return m.responsivity * rate * kPlanckTimesC / kLambda; }

MeasurementSequence reference_scale_sequence(const LnpdModel& lnpd) {
  MeasurementSequence s;
  s.step_duration = 60.0;
  s.n_click_1 = 3.0e5;
  s.n_click_2 = 3.0e5;
  s.dark_rate = 100.0;
  s.u0_1 = 1.0e-4;
  s.u0_2 = 1.2e-4;
  s.voltage = 1.1e-4 + volts(4.5e5, lnpd);
  s.rep_rate = 20e6;
  s.g2_zero = 0.17;
  s.g2_zero_u = 0.02;
  s.p_after = 0.01;
  s.p_after_u = 0.001;
  return s;
}

double budget_value(const EfficiencyEstimate& e, const std::string& name) {
  for (const auto& b : e.budget)
    if (b.name == name) return b.relative;
  return 0.0;
}

}  // namespace

TEST(Epsilon, Formula) {
  const double eps = multi_photon_epsilon(0.17, 4.5e5, 2e7);
  EXPECT_NEAR(eps, 0.0019125, 1e-15);
  EXPECT_EQ(multi_photon_epsilon(0.0, 4.5e5, 2e7), 0.0);
  EXPECT_NEAR(multi_photon_epsilon(1.0, 0.02 * 2e7, 2e7), 0.01, 1e-15);
  EXPECT_THROW(multi_photon_epsilon(0.1, 1.0, 0.0), ParameterError);
}

TEST(FluxFromLnpd, Examples) {
  const LnpdModel m{};
  const double u = 6.34e-2;
  const double power = u / m.responsivity;
  EXPECT_NEAR(power, 1.14e-13, 0.005e-13);
  EXPECT_NEAR(flux_from_lnpd(u, 0.0, m, kLambda), 4.5e5, 0.01e5);
  EXPECT_NEAR(flux_from_lnpd(0.5 + m.responsivity * kPlanckTimesC / kLambda, 0.5, m, kLambda), 1.0, 1e-9);
  EXPECT_THROW(flux_from_lnpd(0.5, 0.5, m, kLambda), SignalBelowBackgroundError);
}

TEST(Calibrate, AllCorrectionsOffIsTheRawRatio) {
  const LnpdModel lnpd{0.5562e12, 0.0, 0.0, 0.0, 0.0};
  MeasurementSequence s;
  s.n_click_1 = s.n_click_2 = 2.9e5;
  s.voltage = 0.0634;
  s.rep_rate = 20e6;
  const EfficiencyEstimate e = calibrate(s, lnpd);
  const double expected = 2.9e5 * kPlanckTimesC * 0.5562e12 / (kLambda * 0.0634);
  EXPECT_NEAR(e.eta, expected, 1e-15 * expected);
  EXPECT_EQ(e.epsilon, 0.0);
}

TEST(Calibrate, CorrectionSwitches) {
  const LnpdModel lnpd{};
  const MeasurementSequence s = reference_scale_sequence(lnpd);
  const EfficiencyEstimate full = calibrate(s, lnpd);
  const EfficiencyEstimate raw = calibrate(s, lnpd, {false, false, false});
  const EfficiencyEstimate no_eps = calibrate(s, lnpd, {true, false, true});
  const double clicks = 3.0e5 - 100.0, flux = full.flux;
  EXPECT_NEAR(raw.eta, 3.0e5 / flux, 1e-14);
  EXPECT_NEAR(no_eps.eta, clicks * 0.99 / flux, 1e-14);
  EXPECT_NEAR(full.eta, clicks * 0.99 / (flux * (1.0 - full.epsilon)), 1e-14);
  EXPECT_NEAR(full.epsilon, 0.5 * 0.17 * flux / 20e6, 1e-15);
  EXPECT_EQ(budget_value(no_eps, "multi-photon (g2)"), 0.0);
  EXPECT_EQ(budget_value(raw, "afterpulsing"), 0.0);
}

TEST(Calibrate, ReferenceScaleBudgetIsDominatedByTheLnpd) {
  LnpdModel lnpd{};
  lnpd.noise_sd = 5e-6;
  EXPECT_NEAR(lnpd.responsivity_rel_u, 0.0034, 0.0001);
  const EfficiencyEstimate e = calibrate(reference_scale_sequence(lnpd), lnpd);
  EXPECT_LT(budget_value(e, "click statistics"), 1e-3);
  EXPECT_NEAR(budget_value(e, "wavelength"), 0.1 / 784.7 * (1 - 2 * e.epsilon) / (1 - e.epsilon), 1e-9);
  double largest = 0.0;
  std::string top;
  for (const auto& b : e.budget)
    if (b.relative > largest) largest = b.relative, top = b.name;
  EXPECT_EQ(top, "LNPD responsivity");
  EXPECT_NEAR(e.u_eta / e.eta, 0.0035, 0.0001);
}

TEST(Calibrate, BudgetClosesInQuadratureAndHasNoPhantoms) {
  LnpdModel lnpd{};
  lnpd.noise_sd = 2e-5;
  const EfficiencyEstimate e = calibrate(reference_scale_sequence(lnpd), lnpd);
  double sum = 0.0;
  for (const auto& b : e.budget) sum += b.relative * b.relative;
  EXPECT_NEAR(e.eta * std::sqrt(sum), e.u_eta, 1e-10 * e.u_eta);
  EXPECT_EQ(e.budget.size(), 9u);
  for (std::size_t skip = 0; skip < e.budget.size(); ++skip) {
    double partial = 0.0;
    for (std::size_t i = 0; i < e.budget.size(); ++i)
      if (i != skip) partial += e.budget[i].relative * e.budget[i].relative;
    EXPECT_LT(e.eta * std::sqrt(partial), e.u_eta) << e.budget[skip].name;
  }
}

TEST(Calibrate, AnalyticSensitivitiesMatchFiniteDifferences) {
  LnpdModel lnpd{};
  lnpd.noise_sd = 2e-5;
  // exaggerated epsilon and p_A so every term is well away from zero
  MeasurementSequence s = reference_scale_sequence(lnpd);
  s.g2_zero = 0.8;
  s.p_after = 0.05;
  s.dark_rate = 3e3;
  const CalibrationOptions opt{};
  const EfficiencyEstimate e = calibrate(s, lnpd, opt);
  const CalibrationInputs base = calibration_inputs(s, lnpd);

  auto partial = [&](auto member, std::initializer_list<double CalibrationInputs::*> also = {}) {
    const double x = base.*member;
    const double h = 1e-6 * std::abs(x);
    CalibrationInputs up = base, dn = base;
    up.*member += h;
    dn.*member -= h;
    for (auto m : also) up.*m += h, dn.*m -= h;
    return (efficiency_from_inputs(up, s.rep_rate, opt) - efficiency_from_inputs(dn, s.rep_rate, opt)) / (2 * h);
  };
  const double t = s.step_duration;
  std::map<std::string, double> fd;
  fd["click statistics"] = std::hypot(partial(&CalibrationInputs::n1) * std::sqrt(s.n_click_1 / t),
                                      partial(&CalibrationInputs::n2) * std::sqrt(s.n_click_2 / t));
  fd["dark counts"] = std::abs(partial(&CalibrationInputs::dark)) * std::sqrt(s.dark_rate / t);
  fd["LNPD signal noise"] = std::abs(partial(&CalibrationInputs::voltage)) * lnpd.noise_sd;
  fd["LNPD zero-level noise"] = std::hypot(partial(&CalibrationInputs::u0_1) * lnpd.noise_sd,
                                           partial(&CalibrationInputs::u0_2) * lnpd.noise_sd);
  // shift both zero-level readings together: the mean moves by h
  const double d_mean = partial(&CalibrationInputs::u0_1, {&CalibrationInputs::u0_2});
  fd["LNPD zero-level drift"] = std::abs(d_mean) * std::abs(s.u0_2 - s.u0_1) / (2 * std::sqrt(3.0));
  fd["LNPD responsivity"] =
      std::abs(partial(&CalibrationInputs::responsivity)) * lnpd.responsivity * lnpd.responsivity_rel_u;
  fd["wavelength"] = std::abs(partial(&CalibrationInputs::wavelength)) * s.wavelength_u;
  fd["afterpulsing"] = std::abs(partial(&CalibrationInputs::p_after)) * s.p_after_u;
  fd["multi-photon (g2)"] = std::abs(partial(&CalibrationInputs::g2)) * s.g2_zero_u;

  ASSERT_EQ(e.budget.size(), fd.size());
  for (const auto& b : e.budget) {
    ASSERT_TRUE(fd.count(b.name)) << b.name;
    EXPECT_NEAR(b.relative * e.eta / fd[b.name], 1.0, 1e-6) << b.name;
  }
}

TEST(Calibrate, HomogeneousWithoutEpsilon) {
  const LnpdModel lnpd{};
  MeasurementSequence s = reference_scale_sequence(lnpd);
  s.g2_zero = 0.0;
  const double eta = calibrate(s, lnpd).eta;
  MeasurementSequence d = s;
  d.n_click_1 = 2 * (s.n_click_1 - s.dark_rate) + s.dark_rate;
  d.n_click_2 = 2 * (s.n_click_2 - s.dark_rate) + s.dark_rate;
  d.voltage = 0.5 * (s.u0_1 + s.u0_2) + 2 * (s.voltage - 0.5 * (s.u0_1 + s.u0_2));
  EXPECT_NEAR(calibrate(d, lnpd).eta, eta, 1e-14);
}

TEST(Calibrate, CorrectionsCommuteAndStayFirstOrder) {
  const LnpdModel lnpd{};
  for (double pa : {0.0, 0.001, 0.005, 0.01})
    for (double g2 : {0.0, 0.05, 0.1, 0.2}) {
      MeasurementSequence s = reference_scale_sequence(lnpd);
      s.p_after = pa;
      s.g2_zero = g2;
      const EfficiencyEstimate full = calibrate(s, lnpd);
      const double raw = calibrate(s, lnpd, {false, false, true}).eta;
      const double eps = full.epsilon;
      EXPECT_NEAR(eps, 0.5 * g2 * full.flux / *s.rep_rate, 1e-15);
      ASSERT_LE(eps, 0.01);  // first-order regime
      EXPECT_DOUBLE_EQ(full.eta, raw * (1 - pa) / (1 - eps));
      EXPECT_DOUBLE_EQ(full.eta, raw / (1 - eps) * (1 - pa));
      EXPECT_NEAR(std::abs(full.eta - raw) / full.eta, std::abs(pa - eps) / (1 - pa), 1e-12);
    }
}

TEST(Calibrate, DiagnosticErrors) {
  const LnpdModel lnpd{};
  MeasurementSequence s = reference_scale_sequence(lnpd);
  s.voltage = s.u0_1 - 1e-3;
  EXPECT_THROW(calibrate(s, lnpd), SignalBelowBackgroundError);
  s = reference_scale_sequence(lnpd);
  s.n_click_1 = s.n_click_2 = 5e5;  // more clicks than photons
  try {
    calibrate(s, lnpd);
    FAIL();
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("N1=500000"), std::string::npos) << e.what();
  }
  s = reference_scale_sequence(lnpd);
  s.wavelength = 50e-9;
  EXPECT_THROW(calibrate(s, lnpd), ParameterError);
}

TEST(SequenceSim, DriftFreeStepsAgree) {
  const PulsedSps src{20e6, distribution_for_g2(0.0227, 0.17), 4e-9};
  const SpadModel spad{0.665, 20e-9, 0.01, 5e-9, 100.0};
  LnpdModel lnpd{};
  lnpd.noise_sd = 1e-5;
  SequenceProtocol protocol;
  protocol.step_duration = 5.0;
  SequenceTruth truth;
  const MeasurementSequence s = run_sequence_sim(src, spad, lnpd, protocol, 12, &truth);
  const double n1 = s.n_click_1 * 5.0, n2 = s.n_click_2 * 5.0;
  EXPECT_NEAR(n1, n2, 3.0 * std::sqrt(n1 + n2));
  EXPECT_NEAR(s.dark_rate, 100.0, 3.0 * std::sqrt(100.0 / 5.0) + 1.0);
  EXPECT_NEAR(s.g2_zero, 0.17, 1e-12);
  EXPECT_EQ(s.p_after, 0.01);
  EXPECT_EQ(*s.rep_rate, 20e6);

  // end to end: corrected efficiency is eta0 within its uncertainty
  const EfficiencyEstimate e = calibrate(s, lnpd);
  EXPECT_NEAR(e.eta, 0.665, 2.0 * e.u_eta);
}

TEST(SequenceSim, BracketingCancelsLinearFluxDrift) {
  // p2 = 0 keeps clicks exactly linear in the transmitted flux
  const PulsedSps src{20e6, {0.9, 0.1, 0.0}, 1e-9};
  const SpadModel spad{0.665, 20e-9, 0.0, 5e-9, 0.0};
  const LnpdModel lnpd{0.5562e12, 0.0, 0.0, 0.0, 0.0};
  SequenceProtocol protocol;
  protocol.step_duration = 20.0;
  protocol.flux_drift = -0.005 / 60.0;
  SequenceTruth truth;
  const MeasurementSequence s = run_sequence_sim(src, spad, lnpd, protocol, 13, &truth);
  // one step of drift is 0.17 %: a single SPAD reading would miss by that much
  const double drift_per_step = 0.005 / 60.0 * 20.0;
  EXPECT_GT(std::abs(truth.spad_flux[0] / truth.lnpd_flux - 1.0), 0.5 * drift_per_step);
  const double bracketed = 0.5 * (s.n_click_1 + s.n_click_2) / 0.665;
  EXPECT_NEAR(bracketed / truth.lnpd_flux, 1.0, 1e-3);
  // and the LNPD reads the flux it saw
  EXPECT_NEAR(flux_from_lnpd(s.voltage, 0.0, lnpd, kLambda) / truth.lnpd_flux, 1.0, 1e-12);
}

TEST(SequenceSim, ZeroLevelDriftCancels) {
  const PulsedSps src{20e6, {0.9, 0.1, 0.0}, 1e-9};
  const SpadModel spad{0.665, 20e-9, 0.0, 5e-9, 0.0};
  const LnpdModel lnpd{0.5562e12, 0.0, 1e-3, 1e-6, 0.0};
  SequenceProtocol protocol;
  protocol.step_duration = 0.5;
  SequenceTruth truth;
  const MeasurementSequence s = run_sequence_sim(src, spad, lnpd, protocol, 14, &truth);
  const double signal = volts(truth.lnpd_flux, lnpd);
  EXPECT_NEAR(s.voltage - 0.5 * (s.u0_1 + s.u0_2), signal, 1e-15);
  // using the first zero level alone leaves one step of drift behind
  EXPECT_NEAR(s.voltage - s.u0_1 - signal, 1e-6 * 0.5, 1e-15);
}

TEST(SequenceSim, TwoStepOrderRepeatsTheFirstReading) {
  const SourceSpec src = CwSps{1e6, 1e-9};
  SequenceProtocol protocol;
  protocol.step_duration = 0.2;
  protocol.order = SequenceOrder::SpadLnpd;
  const MeasurementSequence s = run_sequence_sim(src, SpadModel{}, LnpdModel{}, protocol, 15);
  EXPECT_EQ(s.n_click_1, s.n_click_2);
  EXPECT_EQ(s.u0_1, s.u0_2);
  EXPECT_FALSE(s.rep_rate.has_value());
  EXPECT_EQ(*s.photon_rate, 1e6);
  EXPECT_EQ(s.g2_zero_u, 0.0);
}

TEST(SequenceSim, Deterministic) {
  const SourceSpec src = PulsedLaser{20e6, 0.05};
  SequenceProtocol protocol;
  protocol.step_duration = 0.1;
  LnpdModel lnpd{};
  lnpd.noise_sd = 1e-5;
  EXPECT_EQ(run_sequence_sim(src, SpadModel{}, lnpd, protocol, 3), run_sequence_sim(src, SpadModel{}, lnpd, protocol, 3));
}
