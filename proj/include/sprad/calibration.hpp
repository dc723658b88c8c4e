// calibration.hpp -- SPAD efficiency against an analog reference detector.
//
// The protocol brackets one LNPD reading between two SPAD readings; each
// device records its zero-flux reference while the light is on the other one.
//
//   phi = (lambda / hc) (U - (U0_1 + U0_2)/2) / S
//   eta = ((N1 + N2)/2 - N_DC) (1 - p_A) / (phi (1 - eps)),  eps = g2 phi / (2R)
#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "sprad/detectors.hpp"
#include "sprad/errors.hpp"
#include "sprad/random.hpp"
#include "sprad/sources.hpp"
#include "sprad/units.hpp"

namespace sprad {

struct MeasurementSequence {
  double step_duration = 60.0;  ///< s, integration time of every step
  double n_click_1 = 0.0;       ///< SPAD count rate before the LNPD step (1/s)
  double voltage = 0.0;         ///< LNPD signal U (V)
  double n_click_2 = 0.0;       ///< SPAD count rate after the LNPD step (1/s)
  double dark_rate = 0.0;       ///< N_DC, SPAD rate while the light is on the LNPD
  double u0_1 = 0.0;            ///< LNPD zero level during the first SPAD step (V)
  double u0_2 = 0.0;            ///< LNPD zero level during the second SPAD step (V)
  double wavelength = 784.7e-9;
  double wavelength_u = 0.1e-9;
  std::optional<double> rep_rate;     ///< trigger rate of a pulsed source
  std::optional<double> photon_rate;  ///< nominal rate of a CW source (informational)
  double g2_zero = 0.0;
  double g2_zero_u = 0.0;
  double p_after = 0.0;
  double p_after_u = 0.0;
  friend bool operator==(const MeasurementSequence&, const MeasurementSequence&) = default;
};

inline void validate(const MeasurementSequence& s) {
  if (!(s.step_duration > 0.0)) throw ParameterError("step_duration", "must be > 0");
  const std::pair<const char*, double> rates[] = {
      {"n_click_1", s.n_click_1}, {"n_click_2", s.n_click_2}, {"dark_rate", s.dark_rate}};
  for (const auto& [name, v] : rates)
    if (!(v >= 0.0)) throw ParameterError(name, "must be >= 0");
  if (!(s.wavelength > 100e-9 && s.wavelength < 10e-6))
    throw ParameterError("wavelength", "outside the 100 nm - 10 um sanity band");
  if (!(s.wavelength_u >= 0.0)) throw ParameterError("wavelength_u", "must be >= 0");
  if (s.rep_rate && !(*s.rep_rate > 0.0)) throw ParameterError("rep_rate", "must be > 0");
  if (!(s.g2_zero >= 0.0) || !(s.g2_zero_u >= 0.0)) throw ParameterError("g2_zero", "must be >= 0");
  if (!(s.p_after >= 0.0 && s.p_after < 1.0) || !(s.p_after_u >= 0.0))
    throw ParameterError("p_after", "must lie in [0, 1)");
}

/// Probability of more than one photon per pulse, g2 * phi / (2 R).
inline double multi_photon_epsilon(double g2_zero, double flux, double rep_rate) {
  if (!(g2_zero >= 0.0) || !(flux >= 0.0)) throw ParameterError("g2_zero/flux", "must be >= 0");
  if (!(rep_rate > 0.0)) throw ParameterError("rep_rate", "must be > 0");
  return 0.5 * g2_zero * flux / rep_rate;
}

/// Photon flux (1/s) from the offset-corrected LNPD voltage.
inline double flux_from_lnpd(double voltage, double u0_mean, const LnpdModel& lnpd, double wavelength) {
  validate(lnpd);
  if (!(voltage > u0_mean)) {
    std::ostringstream os;
    os << "LNPD signal " << voltage << " V does not exceed its zero level " << u0_mean << " V";
    throw SignalBelowBackgroundError(os.str());
  }
  return (voltage - u0_mean) / lnpd.responsivity / photon_energy(wavelength);
}

struct CalibrationOptions {
  bool apply_afterpulsing = true;
  bool apply_multiphoton = true;  ///< the 1/(1 - eps) factor; needs a rep_rate
  bool subtract_dark = true;
};

struct BudgetEntry {
  std::string name;
  double relative = 0.0;  ///< |c_i u_i| / eta
  friend bool operator==(const BudgetEntry&, const BudgetEntry&) = default;
};

struct EfficiencyEstimate {
  double eta = 0.0;
  double u_eta = 0.0;
  std::vector<BudgetEntry> budget;  ///< components with non-zero weight
  double flux = 0.0;                ///< phi (1/s)
  double power = 0.0;               ///< P (W)
  double epsilon = 0.0;
  friend bool operator==(const EfficiencyEstimate&, const EfficiencyEstimate&) = default;
};

/// The scalar inputs of the efficiency formula, in one place so that tests
/// can perturb any of them.
struct CalibrationInputs {
  double n1, n2, dark, voltage, u0_1, u0_2, responsivity, wavelength, p_after, g2;
};

inline CalibrationInputs calibration_inputs(const MeasurementSequence& s, const LnpdModel& lnpd) {
  return {s.n_click_1, s.n_click_2, s.dark_rate, s.voltage,        s.u0_1,
          s.u0_2,      lnpd.responsivity, s.wavelength, s.p_after, s.g2_zero};
}

/// eta from raw inputs, with the correction switches of `opt`.
inline double efficiency_from_inputs(const CalibrationInputs& in, std::optional<double> rep_rate,
                                     const CalibrationOptions& opt) {
  const double clicks = 0.5 * (in.n1 + in.n2) - (opt.subtract_dark ? in.dark : 0.0);
  const double du = in.voltage - 0.5 * (in.u0_1 + in.u0_2);
  const double flux = du / in.responsivity / photon_energy(in.wavelength);
  const double eps = opt.apply_multiphoton && rep_rate ? 0.5 * in.g2 * flux / *rep_rate : 0.0;
  const double pa = opt.apply_afterpulsing ? in.p_after : 0.0;
  return clicks * (1.0 - pa) / (flux * (1.0 - eps));
}

inline EfficiencyEstimate calibrate(const MeasurementSequence& seq, const LnpdModel& lnpd,
                                    const CalibrationOptions& opt = {}) {
  validate(seq);
  validate(lnpd);
  const double u0_mean = 0.5 * (seq.u0_1 + seq.u0_2);
  const double du = seq.voltage - u0_mean;

  EfficiencyEstimate est;
  est.flux = flux_from_lnpd(seq.voltage, u0_mean, lnpd, seq.wavelength);
  est.power = du / lnpd.responsivity;
  const bool use_eps = opt.apply_multiphoton && seq.rep_rate.has_value();
  est.epsilon = use_eps ? multi_photon_epsilon(seq.g2_zero, est.flux, *seq.rep_rate) : 0.0;
  const double pa = opt.apply_afterpulsing ? seq.p_after : 0.0;
  const double clicks = 0.5 * (seq.n_click_1 + seq.n_click_2) - (opt.subtract_dark ? seq.dark_rate : 0.0);
  const double eps = est.epsilon;
  est.eta = clicks * (1.0 - pa) / (est.flux * (1.0 - eps));

  if (!(est.eta > 0.0 && est.eta < 1.0) || !(eps < 0.5)) {
    std::ostringstream os;
    os << "calibrated efficiency " << est.eta << " outside (0, 1): N1=" << seq.n_click_1
       << " N2=" << seq.n_click_2 << " N_DC=" << seq.dark_rate << " U=" << seq.voltage
       << " U0=(" << seq.u0_1 << ", " << seq.u0_2 << ") flux=" << est.flux << " eps=" << eps << " p_A=" << pa;
    throw DomainError(os.str());
  }

  // First-order sensitivities; kappa carries the flux dependence of eps.
  const double eta = est.eta;
  const double kappa = (1.0 - 2.0 * eps) / (1.0 - eps);
  const double t = seq.step_duration;
  const double c_n = eta / (2.0 * clicks);
  const double c_u = eta * kappa / du;  // magnitude for U; U0 mean enters with the same size

  auto add = [&](const char* name, double abs_contribution) {
    const double rel = std::abs(abs_contribution) / eta;
    if (rel > 0.0) est.budget.push_back({name, rel});
  };
  add("click statistics", c_n * std::sqrt((seq.n_click_1 + seq.n_click_2) / t));
  if (opt.subtract_dark) add("dark counts", (eta / clicks) * std::sqrt(seq.dark_rate / t));
  add("LNPD signal noise", c_u * lnpd.noise_sd);
  add("LNPD zero-level noise", 0.5 * c_u * std::sqrt(2.0) * lnpd.noise_sd);
  add("LNPD zero-level drift", c_u * std::abs(seq.u0_2 - seq.u0_1) / (2.0 * std::sqrt(3.0)));
  add("LNPD responsivity", eta * kappa * lnpd.responsivity_rel_u);
  add("wavelength", eta * kappa * seq.wavelength_u / seq.wavelength);
  if (opt.apply_afterpulsing) add("afterpulsing", eta / (1.0 - pa) * seq.p_after_u);
  if (use_eps) add("multi-photon (g2)", eta * est.flux / (2.0 * *seq.rep_rate) / (1.0 - eps) * seq.g2_zero_u);

  double sum = 0.0;
  for (const auto& b : est.budget) sum += b.relative * b.relative;
  est.u_eta = eta * std::sqrt(sum);
  return est;
}

// ---------------------------------------------------------------------------
// Protocol simulation
// ---------------------------------------------------------------------------

enum class SequenceOrder {
  SpadLnpdSpad,  ///< bracketed: SPAD, LNPD, SPAD
  SpadLnpd       ///< single SPAD step; N_click_2 and U0_2 repeat the first step
};

struct SequenceProtocol {
  double step_duration = 60.0;
  SequenceOrder order = SequenceOrder::SpadLnpdSpad;
  double flux_drift = 0.0;  ///< relative flux change per second
  double wavelength = 784.7e-9;
  double wavelength_u = 0.1e-9;
  double g2_zero_u = 0.02;
  double p_after_u = 0.0;
  double chunk = 1e-2;  ///< simulation chunk (s)
};

/// Ground truth of a simulated sequence, for checking the analysis.
struct SequenceTruth {
  double lnpd_flux = 0.0;          ///< photons/s reaching the LNPD during its step
  double spad_flux[2] = {0, 0};    ///< photons/s during the SPAD steps
  DetectorCounters spad_steps[2];  ///< detector counters of each SPAD step
};

/// Simulates the protocol end to end: the source runs continuously while the
/// light is routed to the SPAD or the LNPD, with the SPAD counting darks and
/// the LNPD reading its zero level on the steps they are not illuminated.
inline MeasurementSequence run_sequence_sim(const SourceSpec& source, const SpadModel& spad_model,
                                            const LnpdModel& lnpd, const SequenceProtocol& protocol,
                                            std::uint64_t seed, SequenceTruth* truth = nullptr) {
  validate(source);
  validate(spad_model);
  validate(lnpd);
  if (!(protocol.step_duration > 0.0)) throw ParameterError("step_duration", "must be > 0");
  const int slots = protocol.order == SequenceOrder::SpadLnpdSpad ? 3 : 2;
  const double total = slots * protocol.step_duration;
  const double t_peak = protocol.flux_drift > 0.0 ? total : 0.0;
  auto transmission = [&](double t) { return 1.0 + protocol.flux_drift * (t - t_peak); };
  if (transmission(0.0) <= 0.0 || transmission(total) <= 0.0)
    throw ParameterError("flux_drift", "drives the flux negative within the sequence");

  Emitter emitter(source, seed);
  SpadDetector spad(spad_model, seed ^ 0x9e3779b97f4a7c15ull);
  Engine thin_rng = make_engine(seed, 40);
  Engine lnpd_rng = make_engine(seed, 41);

  const Picoseconds step_ps = to_ps(protocol.step_duration);
  const Picoseconds chunk_ps = std::max<Picoseconds>(1, to_ps(protocol.chunk));
  std::vector<Picoseconds> photons, kept, clicks;
  std::uint64_t slot_photons[3] = {0, 0, 0};
  DetectorCounters slot_counters[3];

  for (int slot = 0; slot < slots; ++slot) {
    const bool on_spad = slot != 1;
    const DetectorCounters before = spad.counters();
    for (Picoseconds t = slot * step_ps; t < (slot + 1) * step_ps;) {
      const Picoseconds until = std::min((slot + 1) * step_ps, t + chunk_ps);
      photons.clear();
      kept.clear();
      clicks.clear();
      emitter.emit_until(until, photons);
      if (protocol.flux_drift != 0.0) {
        for (Picoseconds p : photons)
          if (uniform01(thin_rng) < transmission(to_seconds(p))) kept.push_back(p);
      } else {
        kept.swap(photons);
      }
      slot_photons[slot] += kept.size();
      spad.process(on_spad ? std::span<const Picoseconds>(kept) : std::span<const Picoseconds>(), until, clicks);
      t = until;
    }
    slot_counters[slot] = spad.counters() - before;
  }

  const double step = protocol.step_duration;
  auto mid = [&](int slot) { return (slot + 0.5) * step; };
  MeasurementSequence seq;
  seq.step_duration = step;
  seq.n_click_1 = static_cast<double>(slot_counters[0].clicks) / step;
  seq.dark_rate = static_cast<double>(slot_counters[1].clicks) / step;
  const double lnpd_flux = static_cast<double>(slot_photons[1]) / step;
  seq.u0_1 = lnpd_read(0.0, protocol.wavelength, lnpd, mid(0), lnpd_rng);
  seq.voltage = lnpd_read(lnpd_flux, protocol.wavelength, lnpd, mid(1), lnpd_rng);
  if (slots == 3) {
    seq.n_click_2 = static_cast<double>(slot_counters[2].clicks) / step;
    seq.u0_2 = lnpd_read(0.0, protocol.wavelength, lnpd, mid(2), lnpd_rng);
  } else {
    seq.n_click_2 = seq.n_click_1;
    seq.u0_2 = seq.u0_1;
  }
  seq.wavelength = protocol.wavelength;
  seq.wavelength_u = protocol.wavelength_u;
  seq.rep_rate = repetition_rate(source);
  if (std::holds_alternative<CwSps>(source)) seq.photon_rate = std::get<CwSps>(source).photon_rate;
  if (const auto* sps = std::get_if<PulsedSps>(&source))
    seq.g2_zero = sps->distribution.mean() > 0.0 ? per_pulse_g2_zero(sps->distribution) : 0.0;
  else if (std::holds_alternative<PulsedLaser>(source))
    seq.g2_zero = 1.0;
  seq.g2_zero_u = seq.rep_rate ? protocol.g2_zero_u : 0.0;
  seq.p_after = spad_model.p_after;
  seq.p_after_u = protocol.p_after_u;

  if (truth) {
    truth->lnpd_flux = lnpd_flux;
    truth->spad_flux[0] = static_cast<double>(slot_photons[0]) / step;
    truth->spad_flux[1] = static_cast<double>(slot_photons[slots == 3 ? 2 : 0]) / step;
    truth->spad_steps[0] = slot_counters[0];
    truth->spad_steps[1] = slot_counters[slots == 3 ? 2 : 0];
  }
  return seq;
}

}  // namespace sprad
