#pragma once

// Preferential GP with heteroscedastic duel noise.
//
// A duel x > x' is observed when f(x) + e(x) > f(x') + e(x'), e(x) ~ N(0, s2(x)).
// The likelihood of m duels is prod_k Phi(z_k) with
//   z_k = (f(x_k) - f(x'_k)) / sqrt(s2(x_k) + s2(x'_k)).
// The latent vector f stacks the m winners first and the m losers second.
//
// Only the differences u = D f enter the likelihood, so the Newton iterations
// run on u with the m x m prior covariance K = D L D^T and a diagonal
// curvature W. This never inverts the 2m x 2m Gram L, which is singular when
// a design appears in several duels (the reference point usually does).

#include "hetpbo/core_math.hpp"
#include "hetpbo/kde_noise.hpp"

#include <iosfwd>
#include <optional>
#include <vector>

namespace hetpbo {

struct DuelRecord {
  DesignPoint winner;
  DesignPoint loser;
};

class DuelDataset {
 public:
  DuelDataset() = default;
  explicit DuelDataset(std::size_t dim) : dim_(dim) {}

  /// Rejects non-finite points, dimension mismatches and winner == loser.
  void add(DuelRecord record);
  void add(const DesignPoint& winner, const DesignPoint& loser) { add(DuelRecord{winner, loser}); }

  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  std::size_t dim() const { return dim_; }
  const std::vector<DuelRecord>& records() const { return records_; }
  const DuelRecord& operator[](std::size_t k) const { return records_[k]; }

  /// 2m x d: winners in rows [0, m), losers in rows [m, 2m).
  Matrix stacked() const;

  /// Table with 2d columns per row: winner coordinates, then loser coordinates.
  void write(std::ostream& out) const;
  static DuelDataset read(std::istream& in, std::size_t dim);

 private:
  std::size_t dim_ = 0;
  std::vector<DuelRecord> records_;
};

/// Noise variances at the 2m stacked endpoints.
Vector endpoint_variances(const DuelDataset& data, const NoiseModel& noise);

/// Dataset, kernel and per-endpoint noise frozen together; caches the Gram
/// matrix and the covariance of the duel differences.
class PreferenceProblem {
 public:
  PreferenceProblem(const DuelDataset& data, const RbfKernelParams& kernel, const NoiseModel& noise);
  PreferenceProblem(const DuelDataset& data, const RbfKernelParams& kernel, Vector endpoint_variances);

  std::size_t duels() const { return m_; }
  const Matrix& points() const { return points_; }
  const RbfKernelParams& kernel() const { return kernel_; }
  /// 2m endpoint variances.
  const Vector& endpoint_variances() const { return endpoint_var_; }
  /// s2(x_k) + s2(x'_k), one per duel.
  const Vector& pair_variances() const { return pair_var_; }
  /// Prior Gram over the stacked points.
  const Matrix& gram() const { return gram_; }
  /// Prior covariance of f(x_k) - f(x'_k); m x m.
  const Matrix& difference_covariance() const { return diff_cov_; }

  /// u = D f, the winner-minus-loser latent differences.
  Vector differences(const Vector& f) const;
  Vector z(const Vector& f) const;

 private:
  void build();

  std::size_t m_ = 0;
  Matrix points_;
  RbfKernelParams kernel_;
  Vector endpoint_var_;
  Vector pair_var_;
  Matrix gram_;
  Matrix diff_cov_;
};

/// z_k for duel k; `f` holds the 2m stacked latent values.
double duel_z(const PreferenceProblem& problem, std::size_t k, const Vector& f);

/// S(f) = -sum_k log Phi(z_k) + 1/2 f^T L^{-1} f, with L factorized via PsdMatrix.
double neg_log_posterior(const PreferenceProblem& problem, const Vector& f);

struct GradientHessian {
  Vector gradient;
  Matrix hessian;
  /// Likelihood curvature block (Hessian without the prior term).
  Matrix lambda;
};

/// Exact derivatives of S in the stacked f coordinates. Intended for checks
/// and small problems: it forms L^{-1} explicitly.
GradientHessian grad_and_hessian(const PreferenceProblem& problem, const Vector& f);

/// Curvature of -log Phi(u/s) in u: w = (r^2 + z r) / s^2 with r = phi(z)/Phi(z).
Vector likelihood_curvature(const Vector& differences, const Vector& pair_variances);

struct NewtonOptions {
  double tolerance = 1e-6;
  int max_iterations = 100;
  int max_halvings = 50;
};

struct LaplaceFit {
  Vector f_map;
  Matrix lambda_map;
  bool converged = false;
  double gradient_norm = 0.0;
  int iterations = 0;
  /// S(f_map).
  double objective = 0.0;
  /// Differences at the mode and the weights with f_map = L D^T alpha.
  Vector differences;
  Vector alpha;
  /// Diagonal likelihood curvature at the mode, one per duel.
  Vector w;
};

class LineSearchError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Damped Newton-Raphson for the posterior mode. Step halving on any increase
/// of S; LineSearchError after `max_halvings` failed halvings.
LaplaceFit fit_map(const PreferenceProblem& problem, const NewtonOptions& options = {});

/// Laplace log evidence -S(f_map) - 1/2 log det(I + L Lambda_map), evaluated
/// through the m x m matrix I + W^{1/2} K W^{1/2}.
double log_evidence(const PreferenceProblem& problem, const LaplaceFit& fit);

enum class BandwidthMode { loo, evidence };

struct LengthscaleSearch {
  double lower = 0.01;
  double upper = 2.0;
  int grid_points = 12;
  int refine_iterations = 24;
};

/// [0.01 diam, diam] of the box.
LengthscaleSearch default_lengthscale_search(const BoxDomain& domain);

struct SurrogateHyperparams {
  double lengthscale = 1.0;
  /// Present when the bandwidth was fitted jointly with the lengthscale.
  std::optional<double> bandwidth;
  double scale = 1.0;
  double neg_log_evidence = 0.0;
};

/// Minimizes the negative Laplace log evidence over log-lengthscale: a log
/// grid followed by golden-section refinement around the best grid point.
SurrogateHyperparams fit_lengthscale(const DuelDataset& data, const NoiseModel& noise,
                                     const LengthscaleSearch& search, double signal_variance = 1.0);

/// Joint fit of the lengthscale and the KDE bandwidth by evidence.
SurrogateHyperparams fit_lengthscale_and_bandwidth(const DuelDataset& data, const AnchorModel& anchors,
                                                   const LengthscaleSearch& lsearch, const BandwidthSearch& bsearch,
                                                   double signal_variance = 1.0);

/// Dispatches on `mode`; the noise scale of `anchors` is never fitted.
SurrogateHyperparams fit_hyperparams(const DuelDataset& data, const AnchorModel& anchors,
                                     const LengthscaleSearch& lsearch, BandwidthMode mode,
                                     const BandwidthSearch& bsearch, double signal_variance = 1.0);

}  // namespace hetpbo
