#pragma once

// Anchor-based model of the evaluator's aleatoric uncertainty. A Gaussian KDE
// over the anchors gives a density p_hat(x); the noise variance is
// a * exp(-p_hat(x)), so variance is lowest where anchors are dense.

#include "hetpbo/core_math.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace hetpbo {

/// Anything that assigns a judgment-noise variance to a design point.
class NoiseModel {
 public:
  virtual ~NoiseModel() = default;
  virtual double variance(const DesignPoint& x) const = 0;
};

/// Standard Gaussian profile (2 pi)^{-d/2} exp(-u^2 / 2), normalized over R^d.
double gaussian_kernel_profile(double u, std::size_t d);

class AnchorModel final : public NoiseModel {
 public:
  /// `anchors` holds one anchor per row.
  AnchorModel(Matrix anchors, double bandwidth, double scale);

  const Matrix& anchors() const { return anchors_; }
  std::size_t size() const { return static_cast<std::size_t>(anchors_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(anchors_.cols()); }
  double bandwidth() const { return bandwidth_; }
  double scale() const { return scale_; }

  double density(const DesignPoint& x) const;
  /// Densities at every row of `queries`; O(anchors x queries).
  Vector densities(const Matrix& queries) const;
  double variance(const DesignPoint& x) const override;

  AnchorModel with_bandwidth(double bandwidth) const { return AnchorModel(anchors_, bandwidth, scale_); }

 private:
  Matrix anchors_;
  double bandwidth_;
  double scale_;
};

double kde_density(const DesignPoint& x, const AnchorModel& model);
double noise_variance(const DesignPoint& x, const AnchorModel& model);

/// Variance a * exp(-c) everywhere: the uniform-density (homoscedastic) case.
class ConstantDensityNoise final : public NoiseModel {
 public:
  ConstantDensityNoise(double scale, double density) : scale_(scale), density_(density) {}
  double variance(const DesignPoint&) const override { return scale_ * std::exp(-density_); }

 private:
  double scale_;
  double density_;
};

class DegenerateAnchorsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Negative mean leave-one-out log density. Leaving x0 out removes every
/// anchor equal to x0, so duplicated anchor sets give the same objective.
/// Returns +inf when some held-out density is zero.
double loo_objective(const Matrix& anchors, double bandwidth);

struct BandwidthSearch {
  double lower = 1e-3;
  double upper = 1.0;
  int grid_points = 64;
  int refine_iterations = 60;
};

/// [1e-3 diam, diam] for the given box.
BandwidthSearch default_bandwidth_search(const BoxDomain& domain);

struct BandwidthResult {
  double bandwidth = 0.0;
  double objective = 0.0;
};

/// Log-grid scan followed by golden-section refinement around the best grid
/// point. Throws std::invalid_argument for fewer than two anchors and
/// DegenerateAnchorsError when no probed bandwidth gives a finite objective.
BandwidthResult loo_bandwidth(const Matrix& anchors, const BandwidthSearch& search);

enum class OracleFamily { gaussian, student_t };

/// Ground-truth evaluator uncertainty used by the synthetic benchmarks.
/// Density is a product over axes of univariate Gaussian or Student-t densities
/// centred at `center` with per-axis scale `scale`; the noise variance is
/// a * exp(-density).
class TrueUncertaintyOracle final : public NoiseModel {
 public:
  TrueUncertaintyOracle(OracleFamily family, Vector center, Vector scale, double noise_scale,
                        double dof = 5.0);

  OracleFamily family() const { return family_; }
  const Vector& center() const { return center_; }
  const Vector& scale() const { return scale_; }
  double noise_scale() const { return noise_scale_; }
  double dof() const { return dof_; }
  std::size_t dim() const { return static_cast<std::size_t>(center_.size()); }

  double density(const DesignPoint& x) const;
  double variance(const DesignPoint& x) const override;
  DesignPoint sample(Rng& rng) const;

 private:
  OracleFamily family_;
  Vector center_;
  Vector scale_;
  double noise_scale_;
  double dof_;
};

struct RateCheckConfig {
  std::vector<std::size_t> n_grid;
  double alpha = 1.0;
  double beta = 2.0;
  std::size_t trials = 50;
  /// Rows are probe points; MSE is averaged over them.
  Matrix probes;
  /// Overrides the alpha n^{-1/(2 beta + d)} schedule when set.
  std::optional<double> fixed_bandwidth;
  std::uint64_t seed = 0;
};

struct RateCheckResult {
  std::vector<double> n;
  std::vector<double> mse;
  /// Per-n, per-trial squared error averaged over probes.
  std::vector<std::vector<double>> trial_mse;
  double slope = 0.0;
  double intercept = 0.0;
};

/// Monte-Carlo estimate of the variance-estimator MSE as a function of the
/// anchor count, with the least-squares slope of log MSE against log n.
RateCheckResult rate_check(const TrueUncertaintyOracle& oracle, const RateCheckConfig& config);

/// Ordinary least squares slope/intercept of y on x.
std::pair<double, double> fit_line(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace hetpbo
