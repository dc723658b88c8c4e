// least_squares.hpp -- bounded, damped Gauss-Newton solver for weighted
// nonlinear least squares with a central-difference Jacobian.
//
// The residual function returns weighted residuals r_i = (y_i - f_i(x)) / u_i.
// Each iteration first tries the undamped Gauss-Newton step and falls back to
// Marquardt damping (A + lambda diag A) until the cost decreases.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "sprad/errors.hpp"

namespace sprad {

struct LsqOptions {
  int max_iterations = 200;
  double xtol_abs = 1e-8;   ///< convergence: |dx_j| <= xtol_abs + xtol_rel |x_j|
  double xtol_rel = 1e-10;
  double jacobian_step = 1e-6;  ///< relative central-difference step
  double lambda_init = 1e-3;
};

struct LsqResult {
  Eigen::VectorXd params;
  Eigen::MatrixXd covariance;  ///< (J^T J)^-1 at the solution, unscaled
  Eigen::VectorXd residuals;   ///< weighted residuals at the solution
  double chi2 = 0.0;
  bool converged = false;
  int iterations = 0;
};

/// Optional box constraints; empty vectors mean unbounded.
struct LsqBounds {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  Eigen::VectorXd clamp(Eigen::VectorXd x) const {
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      if (lower.size() == x.size()) x[j] = std::max(x[j], lower[j]);
      if (upper.size() == x.size()) x[j] = std::min(x[j], upper[j]);
    }
    return x;
  }

  bool at_bound(const Eigen::VectorXd& x, Eigen::Index j) const {
    return (lower.size() == x.size() && x[j] <= lower[j]) || (upper.size() == x.size() && x[j] >= upper[j]);
  }
};

/// Central-difference Jacobian of the model values (d f / d x), i.e. the
/// negated Jacobian of the weighted residuals.
template <class ResidualFn>
Eigen::MatrixXd numerical_jacobian(ResidualFn&& residuals, const Eigen::VectorXd& x, double rel_step) {
  const Eigen::VectorXd r0 = residuals(x);
  Eigen::MatrixXd jac(r0.size(), x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double h = rel_step * std::max(std::abs(x[j]), 1e-3);
    Eigen::VectorXd xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    jac.col(j) = -(residuals(xp) - residuals(xm)) / (2.0 * h);
  }
  return jac;
}

namespace detail {

inline std::string describe(const Eigen::VectorXd& x, double chi2) {
  std::ostringstream os;
  os << "params=[";
  for (Eigen::Index j = 0; j < x.size(); ++j) os << (j ? ", " : "") << x[j];
  os << "] chi2=" << chi2;
  return os.str();
}

/// (J^T J)^-1 via pivoted QR; throws RankError when J is rank deficient.
inline Eigen::MatrixXd normal_inverse(const Eigen::MatrixXd& jac) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(jac);
  qr.setThreshold(1e-12);
  if (qr.rank() < jac.cols()) throw RankError("singular normal matrix (rank " + std::to_string(qr.rank()) +
                                              " of " + std::to_string(jac.cols()) + ")");
  const Eigen::MatrixXd normal = jac.transpose() * jac;
  return normal.ldlt().solve(Eigen::MatrixXd::Identity(jac.cols(), jac.cols()));
}

}  // namespace detail

template <class ResidualFn>
LsqResult solve_least_squares(ResidualFn&& residuals, Eigen::VectorXd x0, const LsqOptions& opt = {},
                              const LsqBounds& bounds = {}) {
  Eigen::VectorXd x = bounds.clamp(std::move(x0));
  Eigen::VectorXd r = residuals(x);
  if (r.size() < x.size()) throw RankError("fewer residuals than parameters");
  double cost = r.squaredNorm();
  if (!std::isfinite(cost)) throw FitError("non-finite residuals at initial guess: " + detail::describe(x, cost));

  LsqResult out;
  double lambda = 0.0;
  for (int it = 1; it <= opt.max_iterations; ++it) {
    out.iterations = it;
    const Eigen::MatrixXd jac = numerical_jacobian(residuals, x, opt.jacobian_step);
    if (it == 1) detail::normal_inverse(jac);  // rank check
    const Eigen::MatrixXd a = jac.transpose() * jac;
    const Eigen::VectorXd g = jac.transpose() * r;  // descent direction is +g

    // Parameters sitting on a bound with descent pointing outward stay put;
    // the step is solved over the remaining (free) parameters only.
    std::vector<Eigen::Index> free;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      const bool pinned_low = bounds.lower.size() == x.size() && x[j] <= bounds.lower[j] && g[j] <= 0.0;
      const bool pinned_high = bounds.upper.size() == x.size() && x[j] >= bounds.upper[j] && g[j] >= 0.0;
      if (!pinned_low && !pinned_high) free.push_back(j);
    }
    const auto nf = static_cast<Eigen::Index>(free.size());
    Eigen::MatrixXd af(nf, nf);
    Eigen::VectorXd gf(nf);
    for (Eigen::Index p = 0; p < nf; ++p) {
      gf[p] = g[free[static_cast<std::size_t>(p)]];
      for (Eigen::Index q = 0; q < nf; ++q) af(p, q) = a(free[static_cast<std::size_t>(p)], free[static_cast<std::size_t>(q)]);
    }

    bool accepted = false;
    Eigen::VectorXd step = Eigen::VectorXd::Zero(x.size());
    while (!accepted && nf > 0) {
      Eigen::MatrixXd damped = af;
      damped.diagonal() += lambda * af.diagonal();
      const Eigen::VectorXd sf = damped.ldlt().solve(gf);
      step.setZero();
      for (Eigen::Index p = 0; p < nf; ++p) step[free[static_cast<std::size_t>(p)]] = sf[p];
      Eigen::VectorXd x_new = bounds.clamp(x + step);
      step = x_new - x;
      Eigen::VectorXd r_new = residuals(x_new);
      const double cost_new = r_new.squaredNorm();
      if (std::isfinite(cost_new) && cost_new <= cost) {
        x = std::move(x_new);
        r = std::move(r_new);
        cost = cost_new;
        accepted = true;
        lambda = lambda < 1e-9 ? 0.0 : lambda / 10.0;
      } else {
        lambda = lambda == 0.0 ? opt.lambda_init : lambda * 10.0;
        if (lambda > 1e16) break;  // no descent direction left: numerically at the minimum
      }
    }

    bool small = true;
    for (Eigen::Index j = 0; j < x.size(); ++j)
      if (std::abs(step[j]) > opt.xtol_abs + opt.xtol_rel * std::abs(x[j])) small = false;
    if (!accepted || small) {
      out.converged = true;
      break;
    }
  }

  out.params = x;
  out.residuals = r;
  out.chi2 = cost;
  if (!out.converged)
    throw FitError("no convergence after " + std::to_string(opt.max_iterations) +
                   " iterations; last state " + detail::describe(x, cost));

  const Eigen::MatrixXd jac = numerical_jacobian(residuals, x, opt.jacobian_step);
  try {
    out.covariance = detail::normal_inverse(jac);
  } catch (const RankError&) {
    // Parameters pinned at a bound may carry no information; drop them.
    std::vector<Eigen::Index> keep;
    for (Eigen::Index j = 0; j < x.size(); ++j)
      if (!bounds.at_bound(x, j)) keep.push_back(j);
    Eigen::MatrixXd sub(jac.rows(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k) sub.col(static_cast<Eigen::Index>(k)) = jac.col(keep[k]);
    const Eigen::MatrixXd inv = detail::normal_inverse(sub);
    out.covariance = Eigen::MatrixXd::Zero(x.size(), x.size());
    for (std::size_t a = 0; a < keep.size(); ++a)
      for (std::size_t b = 0; b < keep.size(); ++b)
        out.covariance(keep[a], keep[b]) = inv(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
  }
  return out;
}

}  // namespace sprad
