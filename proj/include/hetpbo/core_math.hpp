#pragma once

// Numerical kernel shared by every module: box domains, the squared-exponential
// covariance, jittered Cholesky factorizations, Gaussian pdf/cdf helpers and
// the truncated-normal sampler used by the Gibbs chain.

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cstddef>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace hetpbo {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
/// A point of the design space, stored as a column vector.
using DesignPoint = Eigen::VectorXd;
/// All randomness flows through explicitly passed engines of this type.
using Rng = std::mt19937_64;

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a Cholesky factorization fails even at the largest jitter.
class NotPsdError : public NumericalError {
 public:
  NotPsdError(const std::string& what, double final_jitter)
      : NumericalError(what), final_jitter_(final_jitter) {}
  double final_jitter() const { return final_jitter_; }

 private:
  double final_jitter_;
};

class BoxDomain {
 public:
  BoxDomain(Vector lower, Vector upper);

  std::size_t dim() const { return static_cast<std::size_t>(lower_.size()); }
  const Vector& lower() const { return lower_; }
  const Vector& upper() const { return upper_; }
  Vector range() const { return upper_ - lower_; }
  double diameter() const { return range().norm(); }

  bool contains(const DesignPoint& x, double tol = 0.0) const;
  DesignPoint clamp(const DesignPoint& x) const;
  DesignPoint to_unit(const DesignPoint& x) const;
  DesignPoint from_unit(const DesignPoint& u) const;
  /// Uniform draw inside the box.
  DesignPoint sample(Rng& rng) const;

  static BoxDomain unit(std::size_t d);

 private:
  Vector lower_;
  Vector upper_;
};

struct RbfKernelParams {
  double lengthscale = 1.0;
  double signal_variance = 1.0;

  void validate() const;
};

/// signal_variance * exp(-|x - y|^2 / (2 lengthscale^2)).
double rbf_kernel(const DesignPoint& x, const DesignPoint& y, const RbfKernelParams& params);

/// Gram matrix over the rows of `points`.
Matrix gram(const Matrix& points, const RbfKernelParams& params);
/// Cross covariance between the rows of `a` and the rows of `b`.
Matrix cross_gram(const Matrix& a, const Matrix& b, const RbfKernelParams& params);

/// Symmetric positive semi-definite matrix with a cached Cholesky factor.
///
/// Factorization is attempted without jitter first, then with jitter
/// eps * trace/n for eps = 1e-10, 1e-9, ..., 1e-4. If every attempt fails a
/// NotPsdError carrying the last jitter is thrown.
class PsdMatrix {
 public:
  explicit PsdMatrix(Matrix m);

  const Matrix& matrix() const { return m_; }
  std::size_t size() const { return static_cast<std::size_t>(m_.rows()); }
  double jitter() const { return jitter_; }
  const Eigen::LLT<Matrix>& llt() const { return llt_; }
  Matrix lower() const { return llt_.matrixL(); }

  Vector solve(const Vector& b) const;
  Matrix solve(const Matrix& b) const;
  /// Solves L y = b with the lower Cholesky factor.
  Matrix solve_lower(const Matrix& b) const;
  double log_det() const;

 private:
  Matrix m_;
  Eigen::LLT<Matrix> llt_;
  double jitter_ = 0.0;
};

/// Solves K z = b through the cached factor of K.
Vector cholesky_solve(const PsdMatrix& k, const Vector& b);

double std_normal_pdf(double z);
double std_normal_cdf(double z);
/// log Phi(z), finite for every finite z.
double log_std_normal_cdf(double z);
/// phi(z) / Phi(z), stable in the far left tail.
double inverse_mills_ratio(double z);
/// Phi^{-1}(p) for p in (0, 1).
double std_normal_quantile(double p);

struct TruncationStats {
  std::size_t saturated = 0;
};

/// Draw from N(mean, variance) conditioned on the value being < 0, by inverse
/// CDF. When the admissible mass underflows (< 1e-300) a value just below zero
/// is returned and `stats->saturated` is incremented.
double sample_truncated_normal_below_zero(double mean, double variance, Rng& rng,
                                          TruncationStats* stats = nullptr);

/// First `n` points of the Halton sequence in [0,1]^d, starting after `skip`.
Matrix halton_points(std::size_t n, std::size_t d, std::size_t skip = 0);

/// Points as rows.
Matrix stack_rows(const std::vector<DesignPoint>& points);

}  // namespace hetpbo
