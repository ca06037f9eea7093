#include "hetpbo/core_math.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

namespace hetpbo {

namespace {

constexpr double kSqrt2 = std::numbers::sqrt2;
const double kLogSqrt2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

// 1 - 1/z^2 + 3/z^4 - 15/z^6 + ... ; Phi(z) ~ phi(z)/(-z) * series for z << 0.
double mills_series(double z) {
  const double inv = 1.0 / (z * z);
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k <= 6; ++k) {
    term *= -(2.0 * k - 1.0) * inv;
    sum += term;
  }
  return sum;
}

constexpr double kTailSwitch = -20.0;

double uniform_open(Rng& rng) {
  double u = 0.0;
  while (u <= 0.0 || u >= 1.0) {
    u = std::generate_canonical<double, 53>(rng);
  }
  return u;
}

}  // namespace

BoxDomain::BoxDomain(Vector lower, Vector upper) : lower_(std::move(lower)), upper_(std::move(upper)) {
  if (lower_.size() < 1 || lower_.size() != upper_.size()) {
    throw std::invalid_argument("BoxDomain: bounds must be non-empty and of equal dimension");
  }
  for (Eigen::Index i = 0; i < lower_.size(); ++i) {
    if (!std::isfinite(lower_[i]) || !std::isfinite(upper_[i]) || !(lower_[i] < upper_[i])) {
      throw std::invalid_argument("BoxDomain: need finite lower[i] < upper[i] on every axis");
    }
  }
}

bool BoxDomain::contains(const DesignPoint& x, double tol) const {
  if (x.size() != lower_.size()) return false;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || x[i] < lower_[i] - tol || x[i] > upper_[i] + tol) return false;
  }
  return true;
}

DesignPoint BoxDomain::clamp(const DesignPoint& x) const { return x.cwiseMax(lower_).cwiseMin(upper_); }

DesignPoint BoxDomain::to_unit(const DesignPoint& x) const {
  return (x - lower_).cwiseQuotient(range());
}

DesignPoint BoxDomain::from_unit(const DesignPoint& u) const {
  return lower_ + u.cwiseProduct(range());
}

DesignPoint BoxDomain::sample(Rng& rng) const {
  DesignPoint u(lower_.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = std::generate_canonical<double, 53>(rng);
  return from_unit(u);
}

BoxDomain BoxDomain::unit(std::size_t d) {
  return BoxDomain(Vector::Zero(static_cast<Eigen::Index>(d)), Vector::Ones(static_cast<Eigen::Index>(d)));
}

void RbfKernelParams::validate() const {
  if (!(lengthscale > 0.0) || !std::isfinite(lengthscale) || !(signal_variance > 0.0) ||
      !std::isfinite(signal_variance)) {
    throw std::invalid_argument("RbfKernelParams: lengthscale and signal variance must be positive and finite");
  }
}

double rbf_kernel(const DesignPoint& x, const DesignPoint& y, const RbfKernelParams& params) {
  if (x.size() != y.size()) {
    throw std::invalid_argument("rbf_kernel: dimension mismatch");
  }
  const double sq = (x - y).squaredNorm();
  return params.signal_variance * std::exp(-sq / (2.0 * params.lengthscale * params.lengthscale));
}

Matrix cross_gram(const Matrix& a, const Matrix& b, const RbfKernelParams& params) {
  if (a.cols() != b.cols()) {
    throw std::invalid_argument("cross_gram: dimension mismatch");
  }
  const double inv = 1.0 / (2.0 * params.lengthscale * params.lengthscale);
  Matrix out(a.rows(), b.rows());
  for (Eigen::Index j = 0; j < b.rows(); ++j) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      out(i, j) = params.signal_variance * std::exp(-(a.row(i) - b.row(j)).squaredNorm() * inv);
    }
  }
  return out;
}

Matrix gram(const Matrix& points, const RbfKernelParams& params) {
  const Eigen::Index n = points.rows();
  const double inv = 1.0 / (2.0 * params.lengthscale * params.lengthscale);
  Matrix out(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    out(j, j) = params.signal_variance;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double v = params.signal_variance * std::exp(-(points.row(i) - points.row(j)).squaredNorm() * inv);
      out(i, j) = v;
      out(j, i) = v;
    }
  }
  return out;
}

PsdMatrix::PsdMatrix(Matrix m) : m_(std::move(m)) {
  if (m_.rows() != m_.cols()) {
    throw std::invalid_argument("PsdMatrix: matrix must be square");
  }
  const Eigen::Index n = m_.rows();
  if (n == 0) {
    llt_.compute(m_);
    return;
  }
  const double scale = std::max(m_.norm(), std::numeric_limits<double>::min());
  if ((m_ - m_.transpose()).norm() > 1e-10 * scale) {
    throw std::invalid_argument("PsdMatrix: matrix is not symmetric");
  }
  const double mean_diag = std::max(m_.trace() / static_cast<double>(n), std::numeric_limits<double>::min());
  const auto attempt = [&](double jitter) {
    Matrix work = m_;
    work.diagonal().array() += jitter;
    llt_.compute(work);
    if (llt_.info() != Eigen::Success) return false;
    const auto diag = llt_.matrixLLT().diagonal();
    return (diag.array() > 0.0).all() && diag.allFinite();
  };
  if (attempt(0.0)) return;
  for (double eps = 1e-10; eps <= 1.0001e-4; eps *= 10.0) {
    jitter_ = eps * mean_diag;
    if (attempt(jitter_)) return;
  }
  throw NotPsdError("PsdMatrix: Cholesky failed (matrix not PSD) after maximum jitter", jitter_);
}

Vector PsdMatrix::solve(const Vector& b) const {
  if (b.size() != m_.rows()) throw std::invalid_argument("PsdMatrix::solve: size mismatch");
  return llt_.solve(b);
}

Matrix PsdMatrix::solve(const Matrix& b) const {
  if (b.rows() != m_.rows()) throw std::invalid_argument("PsdMatrix::solve: size mismatch");
  return llt_.solve(b);
}

Matrix PsdMatrix::solve_lower(const Matrix& b) const {
  return llt_.matrixL().solve(b);
}

double PsdMatrix::log_det() const {
  return 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
}

Vector cholesky_solve(const PsdMatrix& k, const Vector& b) { return k.solve(b); }

double std_normal_pdf(double z) { return std::exp(-0.5 * z * z - kLogSqrt2Pi); }

double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / kSqrt2); }

double log_std_normal_cdf(double z) {
  if (std::isnan(z)) return z;
  if (z > 0.0) return std::log1p(-0.5 * std::erfc(z / kSqrt2));
  if (z > kTailSwitch) return std::log(0.5 * std::erfc(-z / kSqrt2));
  if (std::isinf(z)) return -std::numeric_limits<double>::infinity();
  return -0.5 * z * z - kLogSqrt2Pi - std::log(-z) + std::log(mills_series(z));
}

double inverse_mills_ratio(double z) {
  if (z > kTailSwitch) return std_normal_pdf(z) / std_normal_cdf(z);
  return -z / mills_series(z);
}

double std_normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::domain_error("std_normal_quantile: p must lie in (0, 1)");
  }
  if (p < 0.5) return -kSqrt2 * boost::math::erfc_inv(2.0 * p);
  return kSqrt2 * boost::math::erfc_inv(2.0 * (1.0 - p));
}

double sample_truncated_normal_below_zero(double mean, double variance, Rng& rng, TruncationStats* stats) {
  if (!(variance > 0.0) || !std::isfinite(variance) || !std::isfinite(mean)) {
    throw std::invalid_argument("sample_truncated_normal_below_zero: need finite mean and positive variance");
  }
  const double sd = std::sqrt(variance);
  const double bound = -mean / sd;  // standardized truncation point
  const double u = uniform_open(rng);
  const double log_mass = log_std_normal_cdf(bound);
  double z = 0.0;
  if (log_mass < std::log(1e-300)) {
    if (stats) ++stats->saturated;
    // Tail asymptotics: Z | Z < b  ~  b - Exp(1)/|b| for b << 0.
    const double e = -std::log(u);
    return -sd * std::max(e, 1e-12) / std::abs(bound);
  }
  if (bound <= 0.0) {
    const double q = u * std::exp(log_mass);
    z = std_normal_quantile(q);
  } else {
    const double upper_tail = (1.0 - u) + u * std_normal_cdf(-bound);  // 1 - u Phi(b)
    if (upper_tail > 0.5) {
      z = std_normal_quantile(u * std_normal_cdf(bound));
    } else {
      z = -std_normal_quantile(upper_tail);
    }
  }
  const double x = mean + sd * z;
  if (x < 0.0) return x;
  return -sd * 1e-12;
}

Matrix halton_points(std::size_t n, std::size_t d, std::size_t skip) {
  static constexpr std::array<int, 16> kPrimes{2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};
  if (d > kPrimes.size()) throw std::invalid_argument("halton_points: dimension too large");
  Matrix out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const int base = kPrimes[j];
      double f = 1.0;
      double r = 0.0;
      std::size_t idx = i + skip + 1;
      while (idx > 0) {
        f /= base;
        r += f * static_cast<double>(idx % static_cast<std::size_t>(base));
        idx /= static_cast<std::size_t>(base);
      }
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = r;
    }
  }
  return out;
}

Matrix stack_rows(const std::vector<DesignPoint>& points) {
  if (points.empty()) return Matrix(0, 0);
  Matrix out(static_cast<Eigen::Index>(points.size()), points.front().size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].size() != out.cols()) throw std::invalid_argument("stack_rows: dimension mismatch");
    out.row(static_cast<Eigen::Index>(i)) = points[i].transpose();
  }
  return out;
}

}  // namespace hetpbo
