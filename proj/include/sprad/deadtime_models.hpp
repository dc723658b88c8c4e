// deadtime_models.hpp -- closed-form SPAD response under dead time for the
// three source classes, and extraction of the intrinsic efficiency eta0.
//
// With q the click probability per trigger and Int[R D] pulses lost after
// each click, the measured efficiency is
//     eta = (R / phi) * q / (1 + Int[R D] q).
//   pulsed laser:  phi = R mu,    q = 1 - exp(-mu eta0)
//   pulsed SPS:    phi = R eta_s, q = eta_s eta0
//   CW SPS:        eta = eta0 / (1 + r D eta0)
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <compare>
#include <type_traits>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <variant>
#include <vector>

#include "sprad/errors.hpp"
#include "sprad/least_squares.hpp"

namespace sprad {

struct PulsedLaserModel {
  double mean_photons = 0.0;  ///< mu
};
struct PulsedSpsModel {
  double source_efficiency = 0.0;  ///< eta_s, mean photons per trigger at the detector
};
struct CwSpsModel {};

struct DeadTimeModel {
  std::variant<PulsedLaserModel, PulsedSpsModel, CwSpsModel> kind;
  double dead_time = 20e-9;
};

inline void validate(const DeadTimeModel& m) {
  if (!(m.dead_time > 0.0)) throw ParameterError("dead_time", "must be > 0");
  if (auto* p = std::get_if<PulsedLaserModel>(&m.kind); p && !(p->mean_photons > 0.0))
    throw ParameterError("mean_photons", "must be > 0");
  if (auto* p = std::get_if<PulsedSpsModel>(&m.kind);
      p && !(p->source_efficiency > 0.0 && p->source_efficiency <= 1.0))
    throw ParameterError("source_efficiency", "must lie in (0, 1]");
}

/// Half-width of the zone around integer R*D where the pulsed models are not
/// trusted (relative to the integer).
inline constexpr double kIllDefinedZone = 0.02;

/// Int[R D]: pulses falling in the dead time after a click (floor; an exact
/// integer counts as lost since the dead window is closed).
inline long lost_pulses(double rep_rate, double dead_time) {
  return static_cast<long>(std::floor(rep_rate * dead_time * (1.0 + 1e-12)));
}

inline bool in_ill_defined_zone(double rep_rate, double dead_time) {
  const double rd = rep_rate * dead_time;
  const double n = std::round(rd);
  return n >= 1.0 && std::abs(rd / n - 1.0) <= kIllDefinedZone;
}

struct ModelValue {
  double eta = 0.0;
  bool ill_defined = false;
};

/// Generic dead-time response (R/phi) q / (1 + lost q).
inline double dead_time_response(double rate_over_flux, double q, double lost_per_click) {
  return rate_over_flux * q / (1.0 + lost_per_click * q);
}

/// Model efficiency at `x` (R for pulsed models, r for CW).
inline ModelValue eta_model(const DeadTimeModel& model, double eta0, double x) {
  validate(model);
  if (!(eta0 > 0.0 && eta0 <= 1.0)) throw ParameterError("eta0", "must lie in (0, 1]");
  if (!(x >= 0.0)) throw ParameterError("x", "rate must be >= 0");
  const double d = model.dead_time;
  return std::visit(
      [&](const auto& k) -> ModelValue {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, PulsedLaserModel>) {
          const double mu = k.mean_photons;
          const double q = -std::expm1(-mu * eta0);
          const double lost = static_cast<double>(lost_pulses(x, d));
          return {(1.0 / mu) * q / (1.0 + lost * q), in_ill_defined_zone(x, d)};
        } else if constexpr (std::is_same_v<T, PulsedSpsModel>) {
          const double lost = static_cast<double>(lost_pulses(x, d));
          return {eta0 / (1.0 + lost * k.source_efficiency * eta0), in_ill_defined_zone(x, d)};
        } else {
          return {eta0 / (1.0 + x * d * eta0), false};
        }
      },
      model.kind);
}

/// The pulsed-SPS form with eta (rather than eta0) in the denominator,
/// eta = eta0 / (1 + Int[R D] eta_s eta), solved by fixed-point iteration.
inline double eta_model_sps_implicit(double source_efficiency, double eta0, double rep_rate, double dead_time) {
  const double c = static_cast<double>(lost_pulses(rep_rate, dead_time)) * source_efficiency;
  double eta = eta0;
  for (int i = 0; i < 200; ++i) {
    const double next = eta0 / (1.0 + c * eta);
    if (std::abs(next - eta) <= 1e-16) return next;
    eta = next;
  }
  return eta;
}

struct PoissonianGap {
  double exact = 0.0;    ///< eta0 - (1 - exp(-mu eta0)) / mu
  double leading = 0.0;  ///< mu eta0^2 / 2
};

/// Efficiency deficit of Poissonian light with respect to single photons.
inline PoissonianGap poissonian_gap(double mu, double eta0) {
  if (!(mu >= 0.0)) throw ParameterError("mu", "must be >= 0");
  if (mu == 0.0) return {0.0, 0.0};
  return {eta0 + std::expm1(-mu * eta0) / mu, 0.5 * mu * eta0 * eta0};
}

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

struct EfficiencyPoint {
  double x = 0.0;    ///< R (Hz) for pulsed models, r (1/s) for CW
  double eta = 0.0;
  double u = 0.0;    ///< standard uncertainty of eta
  friend bool operator==(const EfficiencyPoint&, const EfficiencyPoint&) = default;
  friend auto operator<=>(const EfficiencyPoint& a, const EfficiencyPoint& b) {
    return std::tie(a.x, a.eta, a.u) <=> std::tie(b.x, b.eta, b.u);
  }
};

enum class FitMode {
  Full,           ///< nonlinear fit of the closed-form model
  LinearIntercept ///< CW only: eta ~ eta0 + slope r, eta0 taken as the intercept
};

struct FitOptions {
  FitMode mode = FitMode::Full;
  double initial_eta0 = 0.6;
  bool scale_by_reduced_chi2 = false;
  LsqOptions solver{};
};

struct FitResult {
  double eta0 = 0.0;
  double eta0_u = 0.0;
  std::vector<std::string> param_names;
  Eigen::VectorXd params;
  Eigen::MatrixXd covariance;
  std::vector<EfficiencyPoint> used;      ///< points entering the fit, canonical order
  std::vector<EfficiencyPoint> excluded;  ///< points dropped in the ill-defined zone
  std::vector<double> residuals;          ///< (eta - model) / u per used point
  double chi2 = 0.0;
  bool converged = false;
  int iterations = 0;
};

namespace detail {

inline double model_point(const DeadTimeModel& model, FitMode mode, const Eigen::VectorXd& p, double x) {
  if (mode == FitMode::LinearIntercept) return p[0] + p[1] * x;
  const double eta0 = std::clamp(p[0], 1e-12, 1.0);
  return eta_model(model, eta0, x).eta;
}

}  // namespace detail

/// Weighted residuals (eta_i - model_i) / u_i as a function of the fit
/// parameters; exposed for Jacobian checks.
inline auto eta0_residual_function(const std::vector<EfficiencyPoint>& points, const DeadTimeModel& model,
                                   FitMode mode) {
  return [points, model, mode](const Eigen::VectorXd& p) {
    Eigen::VectorXd r(static_cast<Eigen::Index>(points.size()));
    for (std::size_t i = 0; i < points.size(); ++i)
      r[static_cast<Eigen::Index>(i)] = (points[i].eta - detail::model_point(model, mode, p, points[i].x)) / points[i].u;
    return r;
  };
}

inline FitResult fit_eta0(std::vector<EfficiencyPoint> data, const DeadTimeModel& model, const FitOptions& opt = {}) {
  validate(model);
  if (opt.mode == FitMode::LinearIntercept && !std::holds_alternative<CwSpsModel>(model.kind))
    throw ParameterError("mode", "linear-intercept fitting applies to the CW model only");
  for (const auto& p : data)
    if (!(p.u > 0.0)) throw ParameterError("u", "every point needs a positive uncertainty");

  FitResult res;
  std::sort(data.begin(), data.end());
  const bool pulsed = !std::holds_alternative<CwSpsModel>(model.kind);
  for (const auto& p : data) {
    if (pulsed && in_ill_defined_zone(p.x, model.dead_time)) res.excluded.push_back(p);
    else res.used.push_back(p);
  }
  if (res.used.size() < 2) throw ParameterError("data", "need at least 2 usable points");

  Eigen::VectorXd x0;
  LsqBounds bounds;
  if (opt.mode == FitMode::LinearIntercept) {
    res.param_names = {"eta0", "slope"};
    x0 = Eigen::Vector2d(opt.initial_eta0, -opt.initial_eta0 * opt.initial_eta0 * model.dead_time);
  } else {
    res.param_names = {"eta0"};
    x0 = Eigen::VectorXd::Constant(1, opt.initial_eta0);
    bounds.lower = Eigen::VectorXd::Constant(1, 1e-9);
    bounds.upper = Eigen::VectorXd::Constant(1, 1.0);
  }

  const auto residuals = eta0_residual_function(res.used, model, opt.mode);
  const LsqResult lsq = solve_least_squares(residuals, x0, opt.solver, bounds);
  res.params = lsq.params;
  res.covariance = lsq.covariance;
  res.chi2 = lsq.chi2;
  res.converged = lsq.converged;
  res.iterations = lsq.iterations;
  const auto dof = static_cast<double>(res.used.size()) - static_cast<double>(lsq.params.size());
  if (opt.scale_by_reduced_chi2 && dof > 0) res.covariance *= lsq.chi2 / dof;
  res.residuals.assign(lsq.residuals.data(), lsq.residuals.data() + lsq.residuals.size());
  res.eta0 = res.params[0];
  res.eta0_u = std::sqrt(res.covariance(0, 0));
  return res;
}

struct WeightedMean {
  double value = 0.0;
  double u = 0.0;
};

/// Inverse-variance weighted mean of (value, u) pairs.
inline WeightedMean weighted_average(const std::vector<std::pair<double, double>>& estimates) {
  if (estimates.empty()) throw DomainError("weighted_average: no estimates");
  double sw = 0.0, swx = 0.0;
  for (const auto& [v, u] : estimates) {
    if (!(u > 0.0)) throw ParameterError("u", "must be > 0");
    const double w = 1.0 / (u * u);
    sw += w;
    swx += w * v;
  }
  return {swx / sw, 1.0 / std::sqrt(sw)};
}

/// Model efficiency sampled at each x, for plotting.
inline std::vector<std::pair<double, double>> model_curve(const DeadTimeModel& model, double eta0,
                                                          const std::vector<double>& xs) {
  std::vector<std::pair<double, double>> curve;
  curve.reserve(xs.size());
  for (double x : xs) curve.emplace_back(x, eta_model(model, eta0, x).eta);
  return curve;
}

}  // namespace sprad
