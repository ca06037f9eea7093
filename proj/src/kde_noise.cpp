#include "hetpbo/kde_noise.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace hetpbo {

double gaussian_kernel_profile(double u, std::size_t d) {
  return std::exp(-0.5 * u * u - 0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi));
}

AnchorModel::AnchorModel(Matrix anchors, double bandwidth, double scale)
    : anchors_(std::move(anchors)), bandwidth_(bandwidth), scale_(scale) {
  if (anchors_.rows() < 1 || anchors_.cols() < 1) {
    throw std::invalid_argument("AnchorModel: need at least one anchor");
  }
  if (!(bandwidth_ > 0.0) || !std::isfinite(bandwidth_)) {
    throw std::invalid_argument("AnchorModel: bandwidth must be positive");
  }
  if (!(scale_ > 0.0) || !std::isfinite(scale_)) {
    throw std::invalid_argument("AnchorModel: noise scale must be positive");
  }
  if (!anchors_.allFinite()) throw std::invalid_argument("AnchorModel: anchors must be finite");
}

double AnchorModel::density(const DesignPoint& x) const {
  if (x.size() != anchors_.cols()) throw std::invalid_argument("AnchorModel::density: dimension mismatch");
  const std::size_t d = dim();
  const double norm = std::pow(bandwidth_, -static_cast<double>(d));
  double sum = 0.0;
  for (Eigen::Index i = 0; i < anchors_.rows(); ++i) {
    const double u = (x.transpose() - anchors_.row(i)).norm() / bandwidth_;
    sum += gaussian_kernel_profile(u, d);
  }
  return norm * sum / static_cast<double>(anchors_.rows());
}

Vector AnchorModel::densities(const Matrix& queries) const {
  if (queries.cols() != anchors_.cols()) throw std::invalid_argument("AnchorModel::densities: dimension mismatch");
  const std::size_t d = dim();
  const double inv_h2 = 1.0 / (bandwidth_ * bandwidth_);
  const double norm = std::pow(bandwidth_, -static_cast<double>(d)) *
                      std::pow(2.0 * std::numbers::pi, -0.5 * static_cast<double>(d)) /
                      static_cast<double>(anchors_.rows());
  Vector out(queries.rows());
  for (Eigen::Index q = 0; q < queries.rows(); ++q) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < anchors_.rows(); ++i) {
      sum += std::exp(-0.5 * (queries.row(q) - anchors_.row(i)).squaredNorm() * inv_h2);
    }
    out[q] = norm * sum;
  }
  return out;
}

double AnchorModel::variance(const DesignPoint& x) const { return scale_ * std::exp(-density(x)); }

double kde_density(const DesignPoint& x, const AnchorModel& model) { return model.density(x); }

double noise_variance(const DesignPoint& x, const AnchorModel& model) { return model.variance(x); }

double loo_objective(const Matrix& anchors, double bandwidth) {
  const Eigen::Index n = anchors.rows();
  if (n < 2) throw std::invalid_argument("loo_objective: need at least two anchors");
  const auto d = static_cast<std::size_t>(anchors.cols());
  const double norm = std::pow(bandwidth, -static_cast<double>(d));
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double sum = 0.0;
    Eigen::Index kept = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double dist = (anchors.row(i) - anchors.row(j)).norm();
      if (dist == 0.0) continue;  // x0 and its exact copies are held out
      sum += gaussian_kernel_profile(dist / bandwidth, d);
      ++kept;
    }
    if (kept == 0) return std::numeric_limits<double>::infinity();
    const double p = norm * sum / static_cast<double>(kept);
    if (!(p > 0.0)) return std::numeric_limits<double>::infinity();
    total += std::log(p);
  }
  return -total / static_cast<double>(n);
}

BandwidthSearch default_bandwidth_search(const BoxDomain& domain) {
  BandwidthSearch s;
  s.lower = 1e-3 * domain.diameter();
  s.upper = domain.diameter();
  return s;
}

BandwidthResult loo_bandwidth(const Matrix& anchors, const BandwidthSearch& search) {
  if (anchors.rows() < 2) {
    throw std::invalid_argument("loo_bandwidth: fewer than two anchors; use a fixed bandwidth instead");
  }
  if (!(search.lower > 0.0) || !(search.upper >= search.lower) || search.grid_points < 1) {
    throw std::invalid_argument("loo_bandwidth: invalid search bounds");
  }
  const double log_lo = std::log(search.lower);
  const double log_hi = std::log(search.upper);
  const int g = search.grid_points;
  std::vector<double> grid(static_cast<std::size_t>(g));
  std::vector<double> values(static_cast<std::size_t>(g));
  int best = -1;
  for (int i = 0; i < g; ++i) {
    const double t = g == 1 ? 0.0 : static_cast<double>(i) / (g - 1);
    grid[static_cast<std::size_t>(i)] = std::exp(log_lo + t * (log_hi - log_lo));
    values[static_cast<std::size_t>(i)] = loo_objective(anchors, grid[static_cast<std::size_t>(i)]);
    if (std::isfinite(values[static_cast<std::size_t>(i)]) &&
        (best < 0 || values[static_cast<std::size_t>(i)] < values[static_cast<std::size_t>(best)])) {
      best = i;
    }
  }
  if (best < 0) throw DegenerateAnchorsError("loo_bandwidth: degenerate anchors (zero leave-one-out density)");

  BandwidthResult result{grid[static_cast<std::size_t>(best)], values[static_cast<std::size_t>(best)]};
  if (g < 3) return result;
  // Golden-section search in log h over the bracket around the best grid point.
  double a = std::log(grid[static_cast<std::size_t>(std::max(best - 1, 0))]);
  double b = std::log(grid[static_cast<std::size_t>(std::min(best + 1, g - 1))]);
  const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - ratio * (b - a);
  double d = a + ratio * (b - a);
  double fc = loo_objective(anchors, std::exp(c));
  double fd = loo_objective(anchors, std::exp(d));
  for (int it = 0; it < search.refine_iterations; ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - ratio * (b - a);
      fc = loo_objective(anchors, std::exp(c));
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + ratio * (b - a);
      fd = loo_objective(anchors, std::exp(d));
    }
  }
  const double x = fc < fd ? c : d;
  const double fx = std::min(fc, fd);
  if (fx < result.objective) result = {std::exp(x), fx};
  return result;
}

TrueUncertaintyOracle::TrueUncertaintyOracle(OracleFamily family, Vector center, Vector scale, double noise_scale,
                                             double dof)
    : family_(family), center_(std::move(center)), scale_(std::move(scale)), noise_scale_(noise_scale), dof_(dof) {
  if (center_.size() < 1 || center_.size() != scale_.size()) {
    throw std::invalid_argument("TrueUncertaintyOracle: center and scale must share a non-zero dimension");
  }
  if (!((scale_.array() > 0.0).all())) throw std::invalid_argument("TrueUncertaintyOracle: scale must be positive");
  if (!(noise_scale_ > 0.0)) throw std::invalid_argument("TrueUncertaintyOracle: noise scale must be positive");
  if (family_ == OracleFamily::student_t && !(dof_ >= 3.0)) {
    throw std::invalid_argument("TrueUncertaintyOracle: Student-t needs at least 3 degrees of freedom");
  }
}

double TrueUncertaintyOracle::density(const DesignPoint& x) const {
  if (x.size() != center_.size()) throw std::invalid_argument("TrueUncertaintyOracle::density: dimension mismatch");
  double log_p = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double t = (x[i] - center_[i]) / scale_[i];
    if (family_ == OracleFamily::gaussian) {
      log_p += -0.5 * t * t - 0.5 * std::log(2.0 * std::numbers::pi);
    } else {
      const double nu = dof_;
      log_p += std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) - 0.5 * std::log(nu * std::numbers::pi) -
               0.5 * (nu + 1.0) * std::log1p(t * t / nu);
    }
    log_p -= std::log(scale_[i]);
  }
  return std::exp(log_p);
}

double TrueUncertaintyOracle::variance(const DesignPoint& x) const { return noise_scale_ * std::exp(-density(x)); }

DesignPoint TrueUncertaintyOracle::sample(Rng& rng) const {
  DesignPoint x(center_.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    double t = 0.0;
    if (family_ == OracleFamily::gaussian) {
      t = std::normal_distribution<double>(0.0, 1.0)(rng);
    } else {
      t = std::student_t_distribution<double>(dof_)(rng);
    }
    x[i] = center_[i] + scale_[i] * t;
  }
  return x;
}

std::pair<double, double> fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit_line: need >= 2 paired values");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (sxx == 0.0) throw std::invalid_argument("fit_line: x values are all equal");
  const double slope = sxy / sxx;
  return {slope, my - slope * mx};
}

RateCheckResult rate_check(const TrueUncertaintyOracle& oracle, const RateCheckConfig& config) {
  if (config.n_grid.size() < 2 || config.trials < 1 || config.probes.rows() < 1) {
    throw std::invalid_argument("rate_check: need >= 2 anchor counts, >= 1 trial and >= 1 probe");
  }
  if (config.probes.cols() != static_cast<Eigen::Index>(oracle.dim())) {
    throw std::invalid_argument("rate_check: probe dimension mismatch");
  }
  const auto d = static_cast<double>(oracle.dim());
  Vector truth(config.probes.rows());
  for (Eigen::Index p = 0; p < truth.size(); ++p) truth[p] = oracle.variance(config.probes.row(p).transpose());

  RateCheckResult result;
  std::vector<double> log_n, log_mse;
  for (std::size_t k = 0; k < config.n_grid.size(); ++k) {
    const std::size_t n = config.n_grid[k];
    if (n < 1) throw std::invalid_argument("rate_check: anchor counts must be positive");
    const double h = config.fixed_bandwidth ? *config.fixed_bandwidth
                                            : config.alpha * std::pow(static_cast<double>(n), -1.0 / (2.0 * config.beta + d));
    std::vector<double> per_trial;
    per_trial.reserve(config.trials);
    for (std::size_t t = 0; t < config.trials; ++t) {
      std::seed_seq seq{config.seed, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(t)};
      Rng rng(seq);
      Matrix anchors(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(oracle.dim()));
      for (std::size_t i = 0; i < n; ++i) anchors.row(static_cast<Eigen::Index>(i)) = oracle.sample(rng).transpose();
      const AnchorModel model(std::move(anchors), h, oracle.noise_scale());
      const Vector dens = model.densities(config.probes);
      const Vector est = (-dens.array()).exp() * oracle.noise_scale();
      per_trial.push_back((est - truth).squaredNorm() / static_cast<double>(truth.size()));
    }
    double mse = 0.0;
    for (double v : per_trial) mse += v;
    mse /= static_cast<double>(per_trial.size());
    result.n.push_back(static_cast<double>(n));
    result.mse.push_back(mse);
    result.trial_mse.push_back(std::move(per_trial));
    log_n.push_back(std::log(static_cast<double>(n)));
    log_mse.push_back(std::log(mse));
  }
  std::tie(result.slope, result.intercept) = fit_line(log_n, log_mse);
  return result;
}

}  // namespace hetpbo
