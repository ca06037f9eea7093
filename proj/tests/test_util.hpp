#pragma once

#include "hetpbo/core_math.hpp"
#include "hetpbo/pref_model.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace testutil {

/// Kolmogorov-Smirnov statistic sup |F_n - F| of a sample against a CDF.
inline double ks_statistic(std::vector<double> xs, const std::function<double(double)>& cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

/// Asymptotic KS critical value at alpha = 0.01.
inline double ks_critical_01(std::size_t n) { return 1.628 / std::sqrt(static_cast<double>(n)); }

inline hetpbo::Matrix random_spd(std::size_t n, hetpbo::Rng& rng) {
  std::normal_distribution<double> normal;
  hetpbo::Matrix a(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = normal(rng);
  }
  return a * a.transpose() + static_cast<double>(n) * hetpbo::Matrix::Identity(a.rows(), a.cols());
}

inline hetpbo::Matrix random_points(std::size_t n, std::size_t d, hetpbo::Rng& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  hetpbo::Matrix p(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (Eigen::Index j = 0; j < p.cols(); ++j) p(i, j) = u(rng);
  }
  return p;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }

/// Random preference problem with m <= max_duels duels, pairwise separated
/// endpoints and random endpoint variances, plus a random latent vector.
struct DuelInstance {
  hetpbo::DuelDataset data;
  hetpbo::RbfKernelParams kernel;
  hetpbo::Vector endpoint_var;
  hetpbo::Vector f;
};

inline DuelInstance random_duel_instance(hetpbo::Rng& rng, std::size_t max_duels = 10) {
  std::uniform_int_distribution<std::size_t> pick_m(1, max_duels), pick_d(1, 3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> normal;
  const std::size_t m = pick_m(rng), d = pick_d(rng);
  DuelInstance out;
  out.kernel = {0.3 + 0.7 * u(rng), 0.5 + u(rng)};
  const double side = 2.0 * out.kernel.lengthscale * std::pow(static_cast<double>(2 * m), 1.0 / static_cast<double>(d)) + 1.0;
  std::vector<hetpbo::DesignPoint> pts;
  while (pts.size() < 2 * m) {
    hetpbo::DesignPoint x(static_cast<Eigen::Index>(d));
    for (auto& c : x) c = side * u(rng);
    bool ok = true;
    for (const auto& p : pts) ok = ok && (p - x).norm() >= out.kernel.lengthscale;
    if (ok) pts.push_back(x);
  }
  out.data = hetpbo::DuelDataset(d);
  for (std::size_t k = 0; k < m; ++k) out.data.add(pts[k], pts[m + k]);
  out.endpoint_var.resize(static_cast<Eigen::Index>(2 * m));
  for (auto& v : out.endpoint_var) v = 0.05 + u(rng);
  out.f.resize(static_cast<Eigen::Index>(2 * m));
  for (auto& v : out.f) v = 2.0 * normal(rng);
  return out;
}

struct FiniteDifferenceError {
  double gradient = 0.0;
  double hessian = 0.0;
  double asymmetry = 0.0;
};

/// Largest |analytic - central difference| / max(1, |analytic|, |fd|) over the
/// gradient (differencing S) and the Hessian (differencing the gradient).
inline FiniteDifferenceError finite_difference_error(const hetpbo::PreferenceProblem& problem, const hetpbo::Vector& f,
                                                     double step = 1e-5) {
  const hetpbo::GradientHessian gh = hetpbo::grad_and_hessian(problem, f);
  FiniteDifferenceError err;
  for (Eigen::Index i = 0; i < f.size(); ++i) {
    hetpbo::Vector fp = f, fm = f;
    fp[i] += step;
    fm[i] -= step;
    const double fd = (hetpbo::neg_log_posterior(problem, fp) - hetpbo::neg_log_posterior(problem, fm)) / (2.0 * step);
    err.gradient = std::max(err.gradient, rel_err(gh.gradient[i], fd));
    const hetpbo::Vector col =
        (hetpbo::grad_and_hessian(problem, fp).gradient - hetpbo::grad_and_hessian(problem, fm).gradient) / (2.0 * step);
    for (Eigen::Index j = 0; j < f.size(); ++j) err.hessian = std::max(err.hessian, rel_err(gh.hessian(j, i), col[j]));
  }
  err.asymmetry = (gh.hessian - gh.hessian.transpose()).cwiseAbs().maxCoeff();
  return err;
}

}  // namespace testutil
