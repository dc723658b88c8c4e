// json_io.hpp -- JSON and CSV forms of sprad records.
#pragma once

#include <cstdint>
#include <cstdio>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sprad/calibration.hpp"
#include "sprad/correlation.hpp"
#include "sprad/deadtime_models.hpp"
#include "sprad/detectors.hpp"
#include "sprad/errors.hpp"
#include "sprad/sources.hpp"
#include "sprad/stability.hpp"

#ifndef SPRAD_VERSION
#define SPRAD_VERSION "0.0.0"
#endif

namespace sprad {

using Json = nlohmann::ordered_json;

inline constexpr const char* kVersion = SPRAD_VERSION;

/// 64-bit FNV-1a, used to tag outputs with the configuration they came from.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

namespace detail {

template <class T>
T field(const Json& j, const char* name, T fallback) {
  if (!j.contains(name) || j.at(name).is_null()) return fallback;
  try {
    return j.at(name).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ParameterError(name, "has the wrong type");
  }
}

template <class T>
T required(const Json& j, const char* name) {
  if (!j.contains(name) || j.at(name).is_null()) throw ParameterError(name, "is required");
  try {
    return j.at(name).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ParameterError(name, "has the wrong type");
  }
}

inline Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

}  // namespace detail

// --- sources ---------------------------------------------------------------

inline Json to_json(const SourceSpec& spec) {
  return std::visit(
      [](const auto& s) -> Json {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, PulsedSps>)
          return {{"type", "pulsed_sps"},        {"rep_rate", s.rep_rate},
                  {"p0", s.distribution.p0},     {"p1", s.distribution.p1},
                  {"p2", s.distribution.p2},     {"lifetime", s.lifetime}};
        else if constexpr (std::is_same_v<T, PulsedLaser>)
          return {{"type", "pulsed_laser"}, {"rep_rate", s.rep_rate},
                  {"mean_photons", s.mean_photons}, {"pulse_width", s.pulse_width}};
        else
          return {{"type", "cw_sps"}, {"photon_rate", s.photon_rate}, {"lifetime", s.lifetime}};
      },
      spec);
}

/// Pulsed SPS distributions may be given either as p0/p1/p2 or as
/// mean_photons plus g2_zero.
inline SourceSpec source_from_json(const Json& j) {
  const auto type = detail::required<std::string>(j, "type");
  SourceSpec spec;
  if (type == "pulsed_sps") {
    PulsedSps s;
    s.rep_rate = detail::required<double>(j, "rep_rate");
    s.lifetime = detail::field(j, "lifetime", s.lifetime);
    if (j.contains("g2_zero")) {
      s.distribution = distribution_for_g2(detail::required<double>(j, "mean_photons"),
                                           detail::required<double>(j, "g2_zero"));
    } else {
      s.distribution.p1 = detail::required<double>(j, "p1");
      s.distribution.p2 = detail::field(j, "p2", 0.0);
      s.distribution.p0 = detail::field(j, "p0", 1.0 - s.distribution.p1 - s.distribution.p2);
    }
    spec = s;
  } else if (type == "pulsed_laser") {
    PulsedLaser s;
    s.rep_rate = detail::required<double>(j, "rep_rate");
    s.mean_photons = detail::required<double>(j, "mean_photons");
    s.pulse_width = detail::field(j, "pulse_width", s.pulse_width);
    spec = s;
  } else if (type == "cw_sps") {
    CwSps s;
    s.photon_rate = detail::required<double>(j, "photon_rate");
    s.lifetime = detail::field(j, "lifetime", s.lifetime);
    spec = s;
  } else {
    throw ParameterError("type", "unknown source type '" + type + "'");
  }
  validate(spec);
  return spec;
}

// --- detectors ---------------------------------------------------------------

inline Json to_json(const SpadModel& m) {
  return {{"eta0", m.eta0},           {"dead_time", m.dead_time},
          {"p_after", m.p_after},     {"after_delay_mean", m.after_delay_mean},
          {"dark_rate", m.dark_rate}};
}

inline SpadModel spad_from_json(const Json& j) {
  SpadModel m;
  m.eta0 = detail::field(j, "eta0", m.eta0);
  m.dead_time = detail::field(j, "dead_time", m.dead_time);
  m.p_after = detail::field(j, "p_after", m.p_after);
  m.after_delay_mean = detail::field(j, "after_delay_mean", m.after_delay_mean);
  m.dark_rate = detail::field(j, "dark_rate", m.dark_rate);
  validate(m);
  return m;
}

inline Json to_json(const LnpdModel& m) {
  return {{"responsivity", m.responsivity}, {"responsivity_rel_u", m.responsivity_rel_u},
          {"offset", m.offset},             {"offset_drift", m.offset_drift},
          {"noise_sd", m.noise_sd}};
}

inline LnpdModel lnpd_from_json(const Json& j) {
  LnpdModel m;
  m.responsivity = detail::field(j, "responsivity", m.responsivity);
  m.responsivity_rel_u = detail::field(j, "responsivity_rel_u", m.responsivity_rel_u);
  m.offset = detail::field(j, "offset", m.offset);
  m.offset_drift = detail::field(j, "offset_drift", m.offset_drift);
  m.noise_sd = detail::field(j, "noise_sd", m.noise_sd);
  validate(m);
  return m;
}

inline Json to_json(const DetectorCounters& c) {
  return {{"photons_in", c.photons_in},
          {"clicks", c.clicks},
          {"photon_clicks", c.photon_clicks},
          {"clicks_lost_to_deadtime", c.clicks_lost_to_deadtime},
          {"afterpulse_clicks", c.afterpulse_clicks},
          {"dark_clicks", c.dark_clicks},
          {"afterpulses_blocked", c.afterpulses_blocked}};
}

inline DetectorCounters counters_from_json(const Json& j) {
  DetectorCounters c;
  c.photons_in = detail::field<std::uint64_t>(j, "photons_in", 0);
  c.clicks = detail::field<std::uint64_t>(j, "clicks", 0);
  c.photon_clicks = detail::field<std::uint64_t>(j, "photon_clicks", 0);
  c.clicks_lost_to_deadtime = detail::field<std::uint64_t>(j, "clicks_lost_to_deadtime", 0);
  c.afterpulse_clicks = detail::field<std::uint64_t>(j, "afterpulse_clicks", 0);
  c.dark_clicks = detail::field<std::uint64_t>(j, "dark_clicks", 0);
  c.afterpulses_blocked = detail::field<std::uint64_t>(j, "afterpulses_blocked", 0);
  return c;
}

// --- calibration -------------------------------------------------------------

inline Json to_json(const MeasurementSequence& s) {
  return {{"step_duration", s.step_duration},
          {"n_click_1", s.n_click_1},
          {"voltage", s.voltage},
          {"n_click_2", s.n_click_2},
          {"dark_rate", s.dark_rate},
          {"u0_1", s.u0_1},
          {"u0_2", s.u0_2},
          {"wavelength", s.wavelength},
          {"wavelength_u", s.wavelength_u},
          {"rep_rate", detail::optional_number(s.rep_rate)},
          {"photon_rate", detail::optional_number(s.photon_rate)},
          {"g2_zero", s.g2_zero},
          {"g2_zero_u", s.g2_zero_u},
          {"p_after", s.p_after},
          {"p_after_u", s.p_after_u}};
}

inline MeasurementSequence sequence_from_json(const Json& j) {
  MeasurementSequence s;
  s.step_duration = detail::required<double>(j, "step_duration");
  s.n_click_1 = detail::required<double>(j, "n_click_1");
  s.voltage = detail::required<double>(j, "voltage");
  s.n_click_2 = detail::field(j, "n_click_2", s.n_click_1);
  s.dark_rate = detail::field(j, "dark_rate", 0.0);
  s.u0_1 = detail::field(j, "u0_1", 0.0);
  s.u0_2 = detail::field(j, "u0_2", s.u0_1);
  s.wavelength = detail::field(j, "wavelength", s.wavelength);
  s.wavelength_u = detail::field(j, "wavelength_u", s.wavelength_u);
  if (j.contains("rep_rate") && !j.at("rep_rate").is_null()) s.rep_rate = detail::required<double>(j, "rep_rate");
  if (j.contains("photon_rate") && !j.at("photon_rate").is_null())
    s.photon_rate = detail::required<double>(j, "photon_rate");
  s.g2_zero = detail::field(j, "g2_zero", 0.0);
  s.g2_zero_u = detail::field(j, "g2_zero_u", 0.0);
  s.p_after = detail::field(j, "p_after", 0.0);
  s.p_after_u = detail::field(j, "p_after_u", 0.0);
  validate(s);
  return s;
}

inline Json to_json(const EfficiencyEstimate& e) {
  Json budget = Json::array();
  for (const auto& b : e.budget) budget.push_back({{"name", b.name}, {"relative", b.relative}});
  return {{"eta", e.eta},   {"u_eta", e.u_eta}, {"relative_u", e.u_eta / e.eta},
          {"budget", budget}, {"flux", e.flux},  {"power", e.power}, {"epsilon", e.epsilon}};
}

inline EfficiencyEstimate estimate_from_json(const Json& j) {
  EfficiencyEstimate e;
  e.eta = detail::required<double>(j, "eta");
  e.u_eta = detail::required<double>(j, "u_eta");
  for (const auto& b : j.at("budget"))
    e.budget.push_back({detail::required<std::string>(b, "name"), detail::required<double>(b, "relative")});
  e.flux = detail::field(j, "flux", 0.0);
  e.power = detail::field(j, "power", 0.0);
  e.epsilon = detail::field(j, "epsilon", 0.0);
  return e;
}

// --- fits --------------------------------------------------------------------

inline Json matrix_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    rows.push_back(row);
  }
  return rows;
}

inline Json to_json(const G2Fit& f) {
  Json windows = Json::array();
  for (const auto& w : f.excluded_windows) windows.push_back({w.start, w.end});
  return {{"g2_zero", f.g2_zero},
          {"g2_zero_u", f.g2_zero_u},
          {"central_amplitude", f.central_amplitude},
          {"side_orders", f.side_orders},
          {"side_amplitudes", f.side_amplitudes},
          {"background", f.background},
          {"decay_time", f.decay_time},
          {"decay_time_u", f.decay_time_u},
          {"excluded_windows", windows},
          {"param_names", f.param_names},
          {"covariance", matrix_json(f.covariance)},
          {"chi2", f.chi2},
          {"dof", f.dof},
          {"converged", f.converged},
          {"iterations", f.iterations}};
}

inline Json to_json(const AfterpulseEstimate& a) {
  return {{"p_after", a.p},         {"p_after_u", a.u},           {"excess", a.excess},
          {"window_counts", a.window_counts}, {"baseline", a.baseline}, {"next_pulse_click", a.next_pulse_click},
          {"window_start", a.window_start},   {"window_end", a.window_end}};
}

inline Json to_json(const FitResult& f) {
  Json used = Json::array(), excluded = Json::array();
  for (const auto& p : f.used) used.push_back({p.x, p.eta, p.u});
  for (const auto& p : f.excluded) excluded.push_back({p.x, p.eta, p.u});
  std::vector<double> params(f.params.data(), f.params.data() + f.params.size());
  return {{"eta0", f.eta0},           {"eta0_u", f.eta0_u},     {"param_names", f.param_names},
          {"params", params},         {"covariance", matrix_json(f.covariance)},
          {"residuals", f.residuals}, {"chi2", f.chi2},          {"converged", f.converged},
          {"iterations", f.iterations}, {"used_points", used},  {"excluded_points", excluded}};
}

// --- CSV ---------------------------------------------------------------------

inline std::string format_g(double v, int digits = 17) {
  std::ostringstream os;
  os << std::setprecision(digits) << v;
  return os.str();
}

inline void write_histogram_csv(std::ostream& out, const Histogram& h) {
  out << "lag_ns,counts\n";
  for (std::size_t i = 0; i < h.size(); ++i)
    out << format_g(static_cast<double>(h.lag_ps(i)) / 1000.0) << ',' << format_g(h.counts[i]) << '\n';
}

inline void write_allan_csv(std::ostream& out, const std::vector<AllanPoint>& curve) {
  out << "tau_s,sigma_rel\n";
  for (const auto& p : curve) out << format_g(p.tau) << ',' << format_g(p.sigma_rel) << '\n';
}

/// CSV with header `x,eta,u_eta`.
inline std::vector<EfficiencyPoint> read_points_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("x,eta,u_eta", 0) != 0) throw IoError("expected header x,eta,u_eta");
  std::vector<EfficiencyPoint> pts;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    EfficiencyPoint p;
    char c1 = 0, c2 = 0;
    std::istringstream row(line);
    if (!(row >> p.x >> c1 >> p.eta >> c2 >> p.u) || c1 != ',' || c2 != ',') throw IoError("bad data row: " + line);
    pts.push_back(p);
  }
  return pts;
}

inline void write_points_csv(std::ostream& out, const std::vector<EfficiencyPoint>& pts) {
  out << "x,eta,u_eta\n";
  for (const auto& p : pts) out << format_g(p.x) << ',' << format_g(p.eta) << ',' << format_g(p.u) << '\n';
}

/// Trace CSV with header `t_s,counts`; tau0 is the spacing of the first two rows.
inline CountTrace read_trace_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("t_s,counts", 0) != 0) throw IoError("expected header t_s,counts");
  std::vector<double> ts;
  CountTrace trace;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    double t = 0, c = 0;
    char comma = 0;
    std::istringstream row(line);
    if (!(row >> t >> comma >> c) || comma != ',') throw IoError("bad trace row: " + line);
    ts.push_back(t);
    trace.counts.push_back(c);
  }
  if (ts.size() < 2) throw IoError("trace needs at least two rows");
  trace.start = ts.front();
  trace.tau0 = ts[1] - ts[0];
  validate(trace);
  return trace;
}

inline void write_trace_csv(std::ostream& out, const CountTrace& trace) {
  out << "t_s,counts\n";
  for (std::size_t i = 0; i < trace.size(); ++i)
    out << format_g(trace.start + static_cast<double>(i) * trace.tau0) << ',' << format_g(trace.counts[i]) << '\n';
}

}  // namespace sprad
