// sprad -- command-line front end: simulate | g2 | allan | calibrate | fit.
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sprad/json_io.hpp"
#include "sprad/sprad.hpp"

namespace fs = std::filesystem;
using namespace sprad;

namespace {

constexpr int kSchema = 1;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
};

struct Context {
  Json config = Json::object();
  fs::path base = ".";  // relative paths in the config resolve against this
  fs::path out;
};

Json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParameterError(path.string(), std::string("is not valid JSON: ") + e.what());
  }
}

Context make_context(const Common& c) {
  Context ctx;
  if (!c.config_path.empty()) {
    ctx.config = read_json_file(c.config_path);
    if (!ctx.config.is_object()) throw ParameterError("config", "must be a JSON object");
    if (detail::field<int>(ctx.config, "schema", 0) != kSchema)
      throw ParameterError("schema", "unsupported config schema (expected 1)");
    ctx.base = fs::path(c.config_path).parent_path();
  }
  ctx.out = c.out;
  std::error_code ec;
  fs::create_directories(ctx.out, ec);
  if (ec) throw IoError("cannot create output directory " + ctx.out.string() + ": " + ec.message());
  return ctx;
}

fs::path resolve(const Context& ctx, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || ctx.base.empty() ? path : ctx.base / path;
}

const Json& section(const Context& ctx, const char* name) {
  static const Json empty = Json::object();
  if (ctx.config.contains("analysis") && ctx.config["analysis"].contains(name)) return ctx.config["analysis"][name];
  return empty;
}

// Hash of the effective inputs of a command, written into every output.
std::string config_hash(const Json& effective) {
  return "fnv1a64:" + hex64(fnv1a64(nlohmann::json(effective).dump()));
}

Json provenance(const char* command, const Json& effective) {
  Json p = {{"tool", "sprad"}, {"version", kVersion}, {"command", command}, {"config_hash", config_hash(effective)}};
  if (effective.contains("seed")) p["seed"] = effective["seed"];
  return p;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

void write_json(const fs::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

template <class Writer>
void write_stream(const fs::path& path, Writer&& w) {
  std::ostringstream os;
  w(os);
  write_text(path, os.str());
}

std::uint64_t require_seed(const Common& c, const Context& ctx) {
  if (c.seed) return *c.seed;
  if (ctx.config.contains("seed")) return detail::required<std::uint64_t>(ctx.config, "seed");
  throw ParameterError("seed", "is required (--seed or config 'seed')");
}

SequenceProtocol protocol_from_json(const Json& j) {
  SequenceProtocol p;
  p.step_duration = detail::field(j, "step_duration", p.step_duration);
  const auto order = detail::field<std::string>(j, "order", "spad_lnpd_spad");
  if (order == "spad_lnpd_spad") p.order = SequenceOrder::SpadLnpdSpad;
  else if (order == "spad_lnpd") p.order = SequenceOrder::SpadLnpd;
  else throw ParameterError("order", "must be spad_lnpd_spad or spad_lnpd");
  p.flux_drift = detail::field(j, "flux_drift", p.flux_drift);
  p.wavelength = detail::field(j, "wavelength", p.wavelength);
  p.wavelength_u = detail::field(j, "wavelength_u", p.wavelength_u);
  p.g2_zero_u = detail::field(j, "g2_zero_u", p.g2_zero_u);
  p.p_after_u = detail::field(j, "p_after_u", p.p_after_u);
  p.chunk = detail::field(j, "chunk", p.chunk);
  return p;
}

// Durations are not stored in .phts files; a `<stem>.json` sidecar carries them.
TimestampStream load_stream(const fs::path& path) {
  std::optional<Picoseconds> duration;
  fs::path sidecar = path;
  sidecar.replace_extension(".json");
  if (fs::exists(sidecar)) {
    const Json j = read_json_file(sidecar);
    if (j.contains("duration_ps")) duration = j["duration_ps"].get<Picoseconds>();
  }
  return load_binary(path, duration);
}

// ---------------------------------------------------------------------------

int cmd_simulate(const Common& c) {
  Context ctx = make_context(c);
  const Json& cfg = ctx.config;
  if (!cfg.contains("source")) throw ParameterError("source", "is required");
  const SourceSpec source = source_from_json(cfg["source"]);
  const std::uint64_t seed = require_seed(c, ctx);
  const double duration = detail::required<double>(cfg, "duration");

  std::vector<SpadModel> spads;
  if (cfg.contains("detectors"))
    for (const auto& d : cfg["detectors"]) spads.push_back(spad_from_json(d));
  const bool hbt = detail::field(cfg, "hbt", false);
  if (hbt && spads.size() != 2) throw ParameterError("detectors", "hbt needs exactly two detectors");

  Json effective = cfg;
  effective["seed"] = seed;
  const Json prov = provenance("simulate", effective);

  const TimestampStream photons = generate(source, duration, seed);
  save_binary(ctx.out / "photons.phts", photons);
  write_json(ctx.out / "photons.json", {{"provenance", prov},
                                        {"source", to_json(source)},
                                        {"duration_ps", photons.duration_ps()},
                                        {"events", photons.size()},
                                        {"rate", photons.rate()}});
  std::cout << "photons: " << photons.size() << " over " << photons.duration() << " s\n";

  std::vector<TimestampStream> arms;
  if (hbt) {
    auto [a, b] = hbt_split(photons, seed);
    arms.push_back(std::move(a));
    arms.push_back(std::move(b));
  }
  for (std::size_t i = 0; i < spads.size(); ++i) {
    const TimestampStream& input = hbt ? arms[i] : photons;
    const std::uint64_t det_seed = seed ^ (0x9e3779b97f4a7c15ull * (i + 1));
    const ClickStream cs = detect(input, spads[i], det_seed);
    const std::string stem = "clicks_" + std::to_string(i);
    save_binary(ctx.out / (stem + ".phts"), cs.stream);
    write_json(ctx.out / (stem + ".json"), {{"provenance", prov},
                                            {"detector", to_json(spads[i])},
                                            {"duration_ps", cs.stream.duration_ps()},
                                            {"counters", to_json(cs.counters)}});
    std::cout << stem << ": " << cs.counters.clicks << " clicks (" << cs.stream.rate() << " cps)\n";
  }

  if (cfg.contains("lnpd") && cfg.contains("protocol")) {
    if (spads.empty()) throw ParameterError("detectors", "a sequence needs a SPAD");
    const LnpdModel lnpd = lnpd_from_json(cfg["lnpd"]);
    const SequenceProtocol protocol = protocol_from_json(cfg["protocol"]);
    SequenceTruth truth;
    const MeasurementSequence seq = run_sequence_sim(source, spads[0], lnpd, protocol, seed, &truth);
    Json j = to_json(seq);
    j["truth"] = {{"lnpd_flux", truth.lnpd_flux},
                  {"spad_flux", {truth.spad_flux[0], truth.spad_flux[1]}},
                  {"spad_steps", {to_json(truth.spad_steps[0]), to_json(truth.spad_steps[1])}}};
    j["provenance"] = prov;
    write_json(ctx.out / "sequence.json", j);
    write_json(ctx.out / "lnpd.json", to_json(lnpd));
    std::cout << "sequence: N1=" << seq.n_click_1 << " U=" << seq.voltage << " N2=" << seq.n_click_2 << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct G2Args {
  std::vector<std::string> clicks;
  std::optional<double> rep_rate;
  std::optional<double> bin_width;
  std::optional<double> max_lag;
  std::optional<double> dead_time;
  bool no_exclude = false;
  unsigned threads = 1;
};

int cmd_g2(const Common& c, const G2Args& a) {
  Context ctx = make_context(c);
  const Json& sec = section(ctx, "g2");
  Json effective = sec;

  std::vector<std::string> files = a.clicks;
  if (files.empty() && sec.contains("clicks"))
    for (const auto& f : sec["clicks"]) files.push_back(resolve(ctx, f.get<std::string>()).string());
  if (files.size() != 2) throw ParameterError("clicks", "need exactly two click files");
  effective["clicks"] = files;

  double rep_rate = 0.0;
  if (a.rep_rate) rep_rate = *a.rep_rate;
  else if (sec.contains("rep_rate")) rep_rate = detail::required<double>(sec, "rep_rate");
  else if (ctx.config.contains("source")) {
    const auto r = repetition_rate(source_from_json(ctx.config["source"]));
    if (r) rep_rate = *r;
  }
  if (!(rep_rate > 0.0)) throw ParameterError("rep_rate", "is required and must be > 0");
  const double bin = a.bin_width.value_or(detail::field(sec, "bin_width", 0.4e-9));
  const double max_lag = a.max_lag.value_or(detail::field(sec, "max_lag", 10.5 / rep_rate));

  std::vector<LagWindow> windows = default_excluded_windows();
  if (a.no_exclude) windows.clear();
  else if (sec.contains("excluded_windows")) {
    windows.clear();
    for (const auto& w : sec["excluded_windows"]) windows.push_back({w.at(0).get<double>(), w.at(1).get<double>()});
  }
  effective["rep_rate"] = rep_rate;
  effective["bin_width"] = bin;
  effective["max_lag"] = max_lag;
  Json jw = Json::array();
  for (const auto& w : windows) jw.push_back({w.start, w.end});
  effective["excluded_windows"] = jw;
  std::optional<double> dead_time = a.dead_time;
  if (!dead_time && sec.contains("dead_time")) dead_time = detail::required<double>(sec, "dead_time");
  if (dead_time) effective["dead_time"] = *dead_time;
  const Json prov = provenance("g2", effective);

  const TimestampStream sa = load_stream(files[0]);
  const TimestampStream sb = load_stream(files[1]);
  const Histogram h = interarrival_histogram(sa, sb, bin, max_lag, a.threads);
  write_stream(ctx.out / "g2_histogram.csv", [&](std::ostream& os) { write_histogram_csv(os, h); });

  G2Fit fit;
  try {
    fit = fit_g2_comb(h, rep_rate, windows);
  } catch (const Error& e) {
    write_json(ctx.out / "g2_failure.json",
               {{"provenance", prov}, {"error", e.what()}, {"histogram", "g2_histogram.csv"}});
    throw;
  }
  Json result = {{"provenance", prov}, {"fit", to_json(fit)}};
  if (dead_time) {
    Json ap = Json::array();
    for (const TimestampStream* s : {&sa, &sb}) {
      const Histogram d = consecutive_delay_histogram(*s, bin, 1.0 / rep_rate * 6.0);
      ap.push_back(to_json(estimate_afterpulsing(d, rep_rate, *dead_time)));
    }
    result["afterpulsing"] = ap;
  }
  write_json(ctx.out / "g2_fit.json", result);
  std::cout << "g2(0) = " << fit.g2_zero << " +- " << fit.g2_zero_u << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct AllanArgs {
  std::string trace;
  std::string stream;
  std::optional<double> tau0;
  std::vector<double> taus;
};

int cmd_allan(const Common& c, const AllanArgs& a) {
  Context ctx = make_context(c);
  const Json& sec = section(ctx, "allan");
  Json effective = sec;

  std::string trace_path = a.trace, stream_path = a.stream;
  if (trace_path.empty() && stream_path.empty()) {
    if (sec.contains("trace")) trace_path = resolve(ctx, sec["trace"].get<std::string>()).string();
    else if (sec.contains("stream")) stream_path = resolve(ctx, sec["stream"].get<std::string>()).string();
  }
  CountTrace trace;
  if (!trace_path.empty()) {
    std::ifstream in(trace_path);
    if (!in) throw IoError("cannot open " + trace_path);
    trace = read_trace_csv(in);
    effective["trace"] = trace_path;
  } else if (!stream_path.empty()) {
    const double tau0 = a.tau0.value_or(detail::field(sec, "tau0", 1.0));
    trace = count_trace(load_stream(stream_path), tau0);
    effective["stream"] = stream_path;
    effective["tau0"] = tau0;
  } else {
    throw ParameterError("trace", "need --trace <csv> or --stream <phts>");
  }

  std::vector<double> taus = a.taus;
  if (taus.empty() && sec.contains("taus")) taus = sec["taus"].get<std::vector<double>>();
  if (taus.empty()) {
    // 1-2-5 ladder in units of tau0 up to a third of the trace
    const double limit = static_cast<double>(trace.size()) * trace.tau0 / 3.0;
    for (double decade = 1.0; decade * trace.tau0 <= limit; decade *= 10.0)
      for (double f : {1.0, 2.0, 5.0})
        if (f * decade * trace.tau0 <= limit) taus.push_back(f * decade * trace.tau0);
  }
  effective["taus"] = taus;
  const Json prov = provenance("allan", effective);

  std::vector<double> skipped;
  const auto curve = allan_deviation(trace, taus, &skipped);
  if (curve.empty()) throw DomainError("allan: no usable integration time");
  const double best = optimal_integration_time(curve);
  write_stream(ctx.out / "allan.csv", [&](std::ostream& os) { write_allan_csv(os, curve); });

  Json jc = Json::array();
  for (const auto& p : curve) jc.push_back({{"tau", p.tau}, {"sigma_rel", p.sigma_rel}});
  Json result = {{"provenance", prov}, {"optimal_tau", best}, {"curve", jc}, {"skipped_taus", skipped}};
  if (trace.size() >= 10) {
    const DriftEstimate d = detect_linear_drift(trace);
    result["drift"] = {{"slope", d.slope}, {"slope_u", d.slope_u}, {"significance", d.significance}};
  }
  write_json(ctx.out / "allan.json", result);
  std::cout << "optimal integration time: " << best << " s\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct CalibrateArgs {
  std::string sequence;
  std::string lnpd;
  bool raw = false;
  bool no_epsilon = false;
  bool no_afterpulse = false;
  bool no_dark = false;
};

Json inline_or_file(const Context& ctx, const Json& sec, const char* key, const std::string& flag) {
  if (!flag.empty()) return read_json_file(flag);
  if (!sec.contains(key)) throw ParameterError(key, "is required");
  if (sec[key].is_string()) return read_json_file(resolve(ctx, sec[key].get<std::string>()));
  return sec[key];
}

int cmd_calibrate(const Common& c, const CalibrateArgs& a) {
  Context ctx = make_context(c);
  const Json& sec = section(ctx, "calibrate");
  const MeasurementSequence seq = sequence_from_json(inline_or_file(ctx, sec, "sequence", a.sequence));
  const LnpdModel lnpd = lnpd_from_json(inline_or_file(ctx, sec, "lnpd", a.lnpd));

  CalibrationOptions opt;
  opt.apply_afterpulsing = detail::field(sec, "apply_afterpulsing", true) && !a.raw && !a.no_afterpulse;
  opt.apply_multiphoton = detail::field(sec, "apply_multiphoton", true) && !a.raw && !a.no_epsilon;
  opt.subtract_dark = detail::field(sec, "subtract_dark", true) && !a.raw && !a.no_dark;

  const Json options = {{"apply_afterpulsing", opt.apply_afterpulsing},
                        {"apply_multiphoton", opt.apply_multiphoton},
                        {"subtract_dark", opt.subtract_dark}};
  const Json effective = {{"sequence", to_json(seq)}, {"lnpd", to_json(lnpd)}, {"options", options}};
  const Json prov = provenance("calibrate", effective);

  const EfficiencyEstimate est = calibrate(seq, lnpd, opt);
  write_json(ctx.out / "efficiency.json", {{"provenance", prov}, {"options", options}, {"estimate", to_json(est)}});

  std::cout << "eta = " << est.eta << " +- " << est.u_eta << " (" << 100.0 * est.u_eta / est.eta << " %)\n";
  for (const auto& b : est.budget) std::cout << "  " << b.name << ": " << 100.0 * b.relative << " %\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct FitArgs {
  std::string data;
  std::string model;
  std::optional<double> mean_photons;
  std::optional<double> source_efficiency;
  double dead_time = 20e-9;
  std::string mode = "full";
  bool scale_chi2 = false;
};

DeadTimeModel model_from_json(const Json& j) {
  DeadTimeModel m;
  m.dead_time = detail::field(j, "dead_time", m.dead_time);
  const auto type = detail::required<std::string>(j, "type");
  if (type == "pulsed_laser") m.kind = PulsedLaserModel{detail::required<double>(j, "mean_photons")};
  else if (type == "pulsed_sps") m.kind = PulsedSpsModel{detail::required<double>(j, "source_efficiency")};
  else if (type == "cw_sps") m.kind = CwSpsModel{};
  else throw ParameterError("type", "unknown model '" + type + "'");
  validate(m);
  return m;
}

FitMode mode_from_string(const std::string& s) {
  if (s == "full") return FitMode::Full;
  if (s == "linear") return FitMode::LinearIntercept;
  throw ParameterError("mode", "must be full or linear");
}

std::vector<EfficiencyPoint> load_points(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return read_points_csv(in);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

int cmd_fit(const Common& c, const FitArgs& a) {
  Context ctx = make_context(c);
  const Json& sec = section(ctx, "fit");

  Json fits = Json::array();
  if (!a.data.empty()) {
    Json model = {{"type", a.model}, {"dead_time", a.dead_time}};
    if (a.mean_photons) model["mean_photons"] = *a.mean_photons;
    if (a.source_efficiency) model["source_efficiency"] = *a.source_efficiency;
    fits.push_back({{"name", fs::path(a.data).stem().string()},
                    {"data", a.data},
                    {"model", model},
                    {"mode", a.mode},
                    {"scale_by_reduced_chi2", a.scale_chi2}});
  } else if (sec.contains("fits")) {
    for (Json f : sec["fits"]) {
      f["data"] = resolve(ctx, detail::required<std::string>(f, "data")).string();
      fits.push_back(f);
    }
  } else {
    throw ParameterError("data", "need --data <csv> or config analysis.fit.fits");
  }

  // hash over the data contents too, so a changed CSV changes the tag
  Json effective = {{"fits", fits}};
  for (auto& f : effective["fits"]) {
    std::ostringstream os;
    write_points_csv(os, load_points(f["data"].get<std::string>()));
    f["data_hash"] = hex64(fnv1a64(os.str()));
    f.erase("data");
  }
  const Json prov = provenance("fit", effective);

  Json summary = {{"provenance", prov}, {"fits", Json::array()}};
  std::vector<std::pair<double, double>> estimates;
  for (const auto& f : fits) {
    const auto name = detail::required<std::string>(f, "name");
    const DeadTimeModel model = model_from_json(f.at("model"));
    FitOptions opt;
    opt.mode = mode_from_string(detail::field<std::string>(f, "mode", "full"));
    opt.scale_by_reduced_chi2 = detail::field(f, "scale_by_reduced_chi2", false);
    const auto points = load_points(f["data"].get<std::string>());
    const FitResult r = fit_eta0(points, model, opt);

    write_json(ctx.out / ("fit_" + name + ".json"), {{"provenance", prov}, {"name", name}, {"result", to_json(r)}});
    double lo = points.front().x, hi = lo;
    for (const auto& p : points) lo = std::min(lo, p.x), hi = std::max(hi, p.x);
    std::vector<double> xs;
    constexpr int kCurvePoints = 200;
    for (int i = 0; i < kCurvePoints; ++i) xs.push_back(lo + (hi - lo) * i / (kCurvePoints - 1));
    write_stream(ctx.out / ("curve_" + name + ".csv"), [&](std::ostream& os) {
      os << "x,eta\n";
      if (opt.mode == FitMode::LinearIntercept) {
        for (double x : xs) os << format_g(x) << ',' << format_g(r.params[0] + r.params[1] * x) << '\n';
      } else {
        for (const auto& [x, e] : model_curve(model, r.eta0, xs)) os << format_g(x) << ',' << format_g(e) << '\n';
      }
    });
    summary["fits"].push_back({{"name", name}, {"eta0", r.eta0}, {"eta0_u", r.eta0_u}, {"chi2", r.chi2}});
    if (detail::field(f, "average", true)) estimates.emplace_back(r.eta0, r.eta0_u);
    std::cout << name << ": eta0 = " << r.eta0 << " +- " << r.eta0_u << "\n";
  }
  if (estimates.size() > 1 && detail::field(sec, "weighted_average", true)) {
    const WeightedMean wm = weighted_average(estimates);
    summary["weighted_average"] = {{"eta0", wm.value}, {"eta0_u", wm.u}, {"count", estimates.size()}};
    std::cout << "weighted average: eta0 = " << wm.value << " +- " << wm.u << "\n";
  }
  write_json(ctx.out / "fits.json", summary);
  return 0;
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_path, "JSON run configuration (schema 1)");
  sub->add_option("--seed", c.seed, "RNG seed (u64)");
  sub->add_option("--out", c.out, "output directory")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sprad: single-photon radiometry simulator and calibration toolkit"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  Common common;
  G2Args g2;
  AllanArgs allan;
  CalibrateArgs cal;
  FitArgs fit;

  auto* sim = app.add_subcommand("simulate", "generate photon/click streams (and a calibration sequence)");
  add_common(sim, common);

  auto* g2c = app.add_subcommand("g2", "cross-correlation histogram and g2(0) comb fit");
  add_common(g2c, common);
  g2c->add_option("--clicks", g2.clicks, "two click stream files (.phts)")->expected(2);
  g2c->add_option("--rep-rate", g2.rep_rate, "repetition rate (Hz)");
  g2c->add_option("--bin-width", g2.bin_width, "histogram bin width (s)");
  g2c->add_option("--max-lag", g2.max_lag, "largest |lag| (s)");
  g2c->add_option("--dead-time", g2.dead_time, "also estimate afterpulsing with this dead time (s)");
  g2c->add_flag("--no-exclude", g2.no_exclude, "fit every bin, no excluded windows");
  g2c->add_option("--threads", g2.threads, "histogram worker threads")->check(CLI::PositiveNumber);

  auto* al = app.add_subcommand("allan", "Allan deviation of a count trace");
  add_common(al, common);
  al->add_option("--trace", allan.trace, "CSV with header t_s,counts");
  al->add_option("--stream", allan.stream, "timestamp stream (.phts) to bin");
  al->add_option("--tau0", allan.tau0, "bin width when binning a stream (s)");
  al->add_option("--taus", allan.taus, "integration times (s)");

  auto* ca = app.add_subcommand("calibrate", "efficiency and uncertainty budget from a measurement sequence");
  add_common(ca, common);
  ca->add_option("--sequence", cal.sequence, "measurement sequence JSON");
  ca->add_option("--lnpd", cal.lnpd, "analog detector JSON");
  ca->add_flag("--raw", cal.raw, "all corrections off");
  ca->add_flag("--no-epsilon", cal.no_epsilon, "skip the multi-photon correction");
  ca->add_flag("--no-afterpulse", cal.no_afterpulse, "skip the afterpulsing correction");
  ca->add_flag("--no-dark", cal.no_dark, "keep dark counts");

  auto* fi = app.add_subcommand("fit", "fit eta0 with a dead-time response model");
  add_common(fi, common);
  fi->add_option("--data", fit.data, "CSV with header x,eta,u_eta");
  fi->add_option("--model", fit.model, "pulsed_laser | pulsed_sps | cw_sps");
  fi->add_option("--mean-photons", fit.mean_photons, "mu of a pulsed laser");
  fi->add_option("--source-efficiency", fit.source_efficiency, "eta_s of a pulsed SPS");
  fi->add_option("--dead-time", fit.dead_time, "dead time (s)")->capture_default_str();
  fi->add_option("--mode", fit.mode, "full | linear")->capture_default_str();
  fi->add_flag("--scale-chi2", fit.scale_chi2, "scale the covariance by the reduced chi2");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (sim->parsed()) return cmd_simulate(common);
    if (g2c->parsed()) return cmd_g2(common, g2);
    if (al->parsed()) return cmd_allan(common, allan);
    if (ca->parsed()) return cmd_calibrate(common, cal);
    if (fi->parsed()) return cmd_fit(common, fit);
  } catch (const Error& e) {
    std::cerr << "sprad: " << e.what() << "\n";
    return e.exit_code();
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "sprad: bad configuration: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "sprad: " << e.what() << "\n";
    return 4;
  }
  return 2;
}
