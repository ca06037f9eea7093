#include "hetpbo/inference.hpp"

#include <cmath>

namespace hetpbo {

namespace {

// Cov(f(x), v_k) = l(x, x'_k) - l(x, x_k) for every duel k, as a row vector.
Vector duel_cross_covariance(const DesignPoint& x, const Matrix& stacked, std::size_t m, const RbfKernelParams& kernel) {
  Vector row(static_cast<Eigen::Index>(m));
  const auto mm = static_cast<Eigen::Index>(m);
  const double inv = 1.0 / (2.0 * kernel.lengthscale * kernel.lengthscale);
  for (Eigen::Index k = 0; k < mm; ++k) {
    const double lw = kernel.signal_variance * std::exp(-(stacked.row(k).transpose() - x).squaredNorm() * inv);
    const double ll = kernel.signal_variance * std::exp(-(stacked.row(mm + k).transpose() - x).squaredNorm() * inv);
    row[k] = ll - lw;
  }
  return row;
}

Matrix symmetrized(const Matrix& m) {
  Matrix out = 0.5 * (m + m.transpose());
  for (Eigen::Index i = 0; i < out.rows(); ++i) out(i, i) = std::max(out(i, i), 0.0);
  return out;
}

}  // namespace

Matrix JointCovariance::full() const {
  const Eigen::Index t = star_star.rows();
  const Eigen::Index m = v_v.rows();
  Matrix out(t + m, t + m);
  out.topLeftCorner(t, t) = star_star;
  out.topRightCorner(t, m) = star_v;
  out.bottomLeftCorner(m, t) = star_v.transpose();
  out.bottomRightCorner(m, m) = v_v;
  return out;
}

Matrix duel_value_covariance(const PreferenceProblem& problem) {
  Matrix out = problem.difference_covariance();
  out.diagonal() += problem.pair_variances();
  return out;
}

JointCovariance build_joint(const Matrix& test_points, const PreferenceProblem& problem, const Vector& test_noise) {
  if (test_points.rows() < 1 || problem.duels() < 1) {
    throw std::invalid_argument("build_joint: need at least one test point and one duel");
  }
  if (test_noise.size() != test_points.rows()) throw std::invalid_argument("build_joint: test noise size mismatch");
  const auto m = static_cast<Eigen::Index>(problem.duels());
  JointCovariance joint;
  joint.star_star = gram(test_points, problem.kernel());
  const Matrix cross = cross_gram(test_points, problem.points(), problem.kernel());  // t x 2m
  joint.star_v = cross.rightCols(m) - cross.leftCols(m);
  joint.v_v = duel_value_covariance(problem);
  joint.star_noise = test_noise;
  return joint;
}

HallucinationSample gibbs_hallucinate(const Matrix& sigma_vv, const GibbsSettings& settings, Rng& rng) {
  const Matrix chain = gibbs_chain(sigma_vv, settings.burn_in, 1, 1, rng);
  HallucinationSample out;
  out.v = chain.row(0).transpose();
  out.burn_in = settings.burn_in;
  return out;
}

Matrix gibbs_chain(const Matrix& sigma_vv, std::size_t burn_in, std::size_t keep, std::size_t thinning, Rng& rng) {
  const Eigen::Index m = sigma_vv.rows();
  if (m < 1) throw std::invalid_argument("gibbs_chain: empty covariance");
  if (thinning < 1) throw std::invalid_argument("gibbs_chain: thinning must be >= 1");
  const PsdMatrix sigma(sigma_vv);
  const Matrix precision = sigma.solve(Matrix(Matrix::Identity(m, m)));

  Vector v = -sigma_vv.diagonal().cwiseSqrt();
  Vector pv = precision * v;
  const auto sweep = [&]() {
    for (Eigen::Index j = 0; j < m; ++j) {
      const double pjj = precision(j, j);
      const double mean = v[j] - pv[j] / pjj;
      const double next = sample_truncated_normal_below_zero(mean, 1.0 / pjj, rng);
      pv += (next - v[j]) * precision.col(j);
      v[j] = next;
    }
  };
  for (std::size_t s = 0; s < burn_in; ++s) sweep();
  Matrix out(static_cast<Eigen::Index>(keep), m);
  for (std::size_t k = 0; k < keep; ++k) {
    for (std::size_t s = 0; s < thinning; ++s) sweep();
    out.row(static_cast<Eigen::Index>(k)) = v.transpose();
  }
  return out;
}

PredictiveGaussian hb_predict(const Matrix& test_points, const PreferenceProblem& problem, const Vector& hallucination,
                              PredictiveMode mode, const NoiseModel* test_noise) {
  const auto m = static_cast<Eigen::Index>(problem.duels());
  if (hallucination.size() != m) throw std::invalid_argument("hb_predict: hallucination must have one entry per duel");
  if (mode == PredictiveMode::noisy && test_noise == nullptr) {
    throw std::invalid_argument("hb_predict: noisy mode needs a noise model for the test points");
  }
  const Eigen::Index t = test_points.rows();
  Vector noise = Vector::Zero(t);
  if (test_noise) {
    for (Eigen::Index i = 0; i < t; ++i) noise[i] = test_noise->variance(test_points.row(i).transpose());
  }
  PredictiveGaussian out;
  if (m == 0) {
    out.mean = Vector::Zero(t);
    out.covariance = gram(test_points, problem.kernel());
    if (mode == PredictiveMode::noisy) out.covariance.diagonal() += noise;
    return out;
  }
  const JointCovariance joint = build_joint(test_points, problem, noise);
  const PsdMatrix svv(joint.v_v);
  out.mean = joint.star_v * svv.solve(hallucination);
  const Matrix half = svv.solve_lower(joint.star_v.transpose());  // m x t
  Matrix cov = joint.star_star - half.transpose() * half;
  if (mode == PredictiveMode::noisy) cov.diagonal() += noise;
  out.covariance = symmetrized(cov);
  return out;
}

PredictiveGaussian laplace_predict(const Matrix& test_points, const PreferenceProblem& problem, const LaplaceFit& fit) {
  const auto m = static_cast<Eigen::Index>(problem.duels());
  PredictiveGaussian out;
  const Matrix prior = gram(test_points, problem.kernel());
  if (m == 0) {
    out.mean = Vector::Zero(test_points.rows());
    out.covariance = prior;
    return out;
  }
  const Matrix cross = cross_gram(test_points, problem.points(), problem.kernel());  // t x 2m
  const Matrix diff_cross = (cross.leftCols(m) - cross.rightCols(m)).transpose();     // m x t, D l(X, x*)
  out.mean = diff_cross.transpose() * fit.alpha;
  const Vector sw = fit.w.cwiseSqrt();
  Matrix bmat = sw.asDiagonal() * problem.difference_covariance() * sw.asDiagonal();
  bmat.diagonal().array() += 1.0;
  const PsdMatrix b(bmat);
  const Matrix half = b.solve_lower(Matrix(sw.asDiagonal() * diff_cross));
  out.covariance = symmetrized(prior - half.transpose() * half);
  return out;
}

HbPosterior::HbPosterior(const PreferenceProblem& problem, Vector hallucination, PredictiveMode mode,
                         const NoiseModel* noise)
    : points_(problem.points()),
      m_(problem.duels()),
      kernel_(problem.kernel()),
      sigma_vv_(duel_value_covariance(problem)),
      mode_(mode),
      noise_(noise) {
  if (hallucination.size() != static_cast<Eigen::Index>(m_)) {
    throw std::invalid_argument("HbPosterior: hallucination must have one entry per duel");
  }
  if (mode_ == PredictiveMode::noisy && noise_ == nullptr) {
    throw std::invalid_argument("HbPosterior: noisy mode needs a noise model");
  }
  weights_ = sigma_vv_.solve(hallucination);
}

PointPrediction HbPosterior::predict(const DesignPoint& x) const {
  const Vector row = duel_cross_covariance(x, points_, m_, kernel_);
  PointPrediction p;
  p.mean = row.dot(weights_);
  const Vector half = sigma_vv_.llt().matrixL().solve(row);
  p.variance = std::max(kernel_.signal_variance - half.squaredNorm(), 0.0);
  if (mode_ == PredictiveMode::noisy) p.variance += noise_->variance(x);
  return p;
}

namespace {

Matrix laplace_b(const PreferenceProblem& problem, const LaplaceFit& fit) {
  const Vector sw = fit.w.cwiseSqrt();
  Matrix bmat = sw.asDiagonal() * problem.difference_covariance() * sw.asDiagonal();
  bmat.diagonal().array() += 1.0;
  return bmat;
}

}  // namespace

LaplacePosterior::LaplacePosterior(const PreferenceProblem& problem, const LaplaceFit& fit)
    : points_(problem.points()),
      m_(problem.duels()),
      kernel_(problem.kernel()),
      alpha_(fit.alpha),
      sqrt_w_(fit.w.cwiseSqrt()),
      b_(laplace_b(problem, fit)) {}

PointPrediction LaplacePosterior::predict(const DesignPoint& x) const {
  // D l(X, x) is the negated HB cross-covariance row.
  const Vector diff = -duel_cross_covariance(x, points_, m_, kernel_);
  PointPrediction p;
  p.mean = diff.dot(alpha_);
  const Vector half = b_.llt().matrixL().solve(Vector(sqrt_w_.cwiseProduct(diff)));
  p.variance = std::max(kernel_.signal_variance - half.squaredNorm(), 0.0);
  return p;
}

}  // namespace hetpbo
