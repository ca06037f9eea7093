#include "hetpbo/inference.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <Eigen/LU>

#include <cmath>
#include <numbers>

using namespace hetpbo;
using testutil::DuelInstance;

namespace {

Vector v1(double a) { return Vector::Constant(1, a); }

Matrix test_points_for(const DuelInstance& inst, std::size_t t, Rng& rng) {
  const Matrix pts = inst.data.stacked();
  const double hi = pts.maxCoeff() + 0.5;
  return testutil::random_points(t, inst.data.dim(), rng, -0.5, hi);
}

/// A (L + B) A^T with the selector and noise blocks formed explicitly.
Matrix brute_joint(const Matrix& test, const DuelInstance& inst) {
  const Matrix x = inst.data.stacked();
  const Eigen::Index t = test.rows(), n = x.rows(), m = n / 2;
  Matrix all(t + n, x.cols());
  all << test, x;
  Matrix l(t + n, t + n);
  for (Eigen::Index i = 0; i < t + n; ++i) {
    for (Eigen::Index j = 0; j < t + n; ++j) {
      l(i, j) = inst.kernel.signal_variance * std::exp(-(all.row(i) - all.row(j)).squaredNorm() /
                                                       (2.0 * inst.kernel.lengthscale * inst.kernel.lengthscale));
    }
  }
  Matrix b = Matrix::Zero(t + n, t + n);
  for (Eigen::Index i = 0; i < n; ++i) b(t + i, t + i) = inst.endpoint_var[i];
  Matrix a = Matrix::Zero(t + m, t + n);
  for (Eigen::Index i = 0; i < t; ++i) a(i, i) = 1.0;
  for (Eigen::Index k = 0; k < m; ++k) {
    a(t + k, t + m + k) = 1.0;  // loser
    a(t + k, t + k) = -1.0;     // winner
  }
  return a * (l + b) * a.transpose();
}

Vector negative_vector(std::size_t m, Rng& rng) {
  std::exponential_distribution<double> e(1.0);
  Vector v(static_cast<Eigen::Index>(m));
  for (auto& x : v) x = -e(rng) - 1e-3;
  return v;
}

/// Marginal CDF of v_1 for a bivariate normal restricted to v < 0.
double truncated_bivariate_marginal_cdf(double a, double s1, double s2, double rho) {
  const auto integrand = [&](double x) {
    const double y_mean = rho * s2 * x / s1;
    const double y_sd = s2 * std::sqrt(1.0 - rho * rho);
    return std_normal_pdf(x / s1) / s1 * std_normal_cdf(-y_mean / y_sd);
  };
  const auto integrate = [&](double hi) {
    const double lo = -12.0 * s1;
    const int n = 4000;
    const double h = (hi - lo) / n;
    double sum = integrand(lo) + integrand(hi);
    for (int i = 1; i < n; ++i) sum += integrand(lo + i * h) * (i % 2 ? 4.0 : 2.0);
    return sum * h / 3.0;
  };
  return integrate(std::min(a, 0.0)) / integrate(0.0);
}

}  // namespace

TEST_CASE("joint covariance equals the explicit selector form") {
  Rng rng(1);
  for (int trial = 0; trial < 30; ++trial) {
    const DuelInstance inst = testutil::random_duel_instance(rng);
    const PreferenceProblem p(inst.data, inst.kernel, inst.endpoint_var);
    const Matrix test = test_points_for(inst, 4, rng);
    const JointCovariance joint = build_joint(test, p, Vector::Constant(4, 0.3));
    const Matrix full = joint.full();
    const Matrix brute = brute_joint(test, inst);
    CHECK((full - brute).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(joint.star_noise == Vector::Constant(4, 0.3));
    CHECK(full == full.transpose());
    const auto m = static_cast<Eigen::Index>(inst.data.size());
    for (Eigen::Index k = 0; k < m; ++k) CHECK(joint.v_v(k, k) >= p.pair_variances()[k]);
    CHECK((duel_value_covariance(p) - joint.v_v).cwiseAbs().maxCoeff() == 0.0);
  }
  const DuelInstance inst = testutil::random_duel_instance(rng);
  const PreferenceProblem p(inst.data, inst.kernel, inst.endpoint_var);
  CHECK_THROWS_AS(build_joint(Matrix(0, inst.data.dim()), p, Vector(0)), std::invalid_argument);
}

TEST_CASE("hallucination believer matches explicit-inverse conditioning") {
  Rng rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    const DuelInstance inst = testutil::random_duel_instance(rng);
    const PreferenceProblem p(inst.data, inst.kernel, inst.endpoint_var);
    const Matrix test = test_points_for(inst, 5, rng);
    const Vector v = negative_vector(inst.data.size(), rng);
    const PredictiveGaussian pred = hb_predict(test, p, v);

    const Matrix full = brute_joint(test, inst);
    const Eigen::Index t = test.rows(), m = v.size();
    const Matrix inv = full.bottomRightCorner(m, m).inverse();
    const Matrix cross = full.topRightCorner(t, m);
    const Vector mean = cross * inv * v;
    const Matrix cov = full.topLeftCorner(t, t) - cross * inv * cross.transpose();
    CHECK((pred.mean - mean).cwiseAbs().maxCoeff() <= 1e-8 * std::max(1.0, mean.cwiseAbs().maxCoeff()));
    CHECK((pred.covariance - cov).cwiseAbs().maxCoeff() <= 1e-8);

    const HbPosterior post(p, v);
    for (Eigen::Index i = 0; i < t; ++i) {
      const PointPrediction pp = post.predict(test.row(i).transpose());
      CHECK(pp.mean == doctest::Approx(pred.mean[i]).epsilon(1e-10));
      CHECK(std::abs(pp.variance - pred.covariance(i, i)) <= 1e-10);
      CHECK(pp.variance >= 0.0);
      CHECK(pp.variance <= inst.kernel.signal_variance);
    }
  }
}

TEST_CASE("hallucination believer is linear in the hallucination") {
  Rng rng(3);
  const DuelInstance inst = testutil::random_duel_instance(rng);
  const PreferenceProblem p(inst.data, inst.kernel, inst.endpoint_var);
  const Matrix test = test_points_for(inst, 6, rng);
  const Vector a = negative_vector(inst.data.size(), rng), b = negative_vector(inst.data.size(), rng);
  const PredictiveGaussian pa = hb_predict(test, p, a), pb = hb_predict(test, p, b);
  const PredictiveGaussian pc = hb_predict(test, p, 0.3 * a + 1.7 * b);
  CHECK((pc.mean - (0.3 * pa.mean + 1.7 * pb.mean)).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK((pc.covariance - pa.covariance).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("distant duels decouple") {
  DuelDataset data(1);
  data.add(v1(0.0), v1(0.3));
  data.add(v1(100.0), v1(100.4));
  const PreferenceProblem p(data, RbfKernelParams{0.5, 1.0}, Vector::Constant(4, 0.1));
  const Matrix svv = duel_value_covariance(p);
  CHECK(svv(0, 1) == 0.0);

  Matrix test(1, 1);
  test << 0.1;
  Vector v(2), w(2);
  v << -0.5, -0.2;
  w << -0.5, -3.0;
  const PredictiveGaussian a = hb_predict(test, p, v), b = hb_predict(test, p, w);
  CHECK(a.mean[0] == b.mean[0]);

  DuelDataset only(1);
  only.add(v1(0.0), v1(0.3));
  const PreferenceProblem q(only, RbfKernelParams{0.5, 1.0}, Vector::Constant(2, 0.1));
  const PredictiveGaussian c = hb_predict(test, q, v1(-0.5));
  CHECK(c.mean[0] == doctest::Approx(a.mean[0]).epsilon(1e-14));
  CHECK(c.covariance(0, 0) == doctest::Approx(a.covariance(0, 0)).epsilon(1e-14));
}

TEST_CASE("predictive modes and the empty dataset") {
  Rng rng(4);
  const DuelInstance inst = testutil::random_duel_instance(rng);
  const PreferenceProblem p(inst.data, inst.kernel, inst.endpoint_var);
  const Matrix test = test_points_for(inst, 3, rng);
  const Vector v = negative_vector(inst.data.size(), rng);
  const ConstantDensityNoise noise(0.4, 0.0);
  const PredictiveGaussian latent = hb_predict(test, p, v);
  const PredictiveGaussian noisy = hb_predict(test, p, v, PredictiveMode::noisy, &noise);
  CHECK(noisy.mean == latent.mean);
  for (Eigen::Index i = 0; i < 3; ++i) CHECK(noisy.covariance(i, i) == doctest::Approx(latent.covariance(i, i) + 0.4));
  CHECK_THROWS_AS(hb_predict(test, p, v, PredictiveMode::noisy), std::invalid_argument);
  CHECK_THROWS_AS(hb_predict(test, p, Vector::Zero(v.size() + 1)), std::invalid_argument);
  const HbPosterior post(p, v, PredictiveMode::noisy, &noise);
  CHECK(post.predict(test.row(0).transpose()).variance == doctest::Approx(noisy.covariance(0, 0)).epsilon(1e-10));

  const DuelDataset empty(inst.data.dim());
  const PreferenceProblem none(empty, inst.kernel, Vector(0));
  const PredictiveGaussian prior = hb_predict(test, none, Vector(0));
  CHECK(prior.mean.isZero());
  CHECK((prior.covariance - gram(test, inst.kernel)).cwiseAbs().maxCoeff() == 0.0);
  const PriorPosterior pp(inst.kernel);
  CHECK(pp.predict(test.row(0).transpose()).mean == 0.0);
  CHECK(pp.predict(test.row(0).transpose()).variance == inst.kernel.signal_variance);
}

TEST_CASE("Gibbs chain with one duel samples the half-normal") {
  Rng rng(5);
  const Matrix chain = gibbs_chain(Matrix::Identity(1, 1), 50, 20000, 1, rng);
  CHECK((chain.array() < 0.0).all());
  CHECK(chain.mean() == doctest::Approx(-0.797884560802865).epsilon(0.02));
  std::vector<double> xs(chain.data(), chain.data() + chain.size());
  CHECK(testutil::ks_statistic(xs, [](double x) { return x >= 0.0 ? 1.0 : 2.0 * std_normal_cdf(x); }) <
        testutil::ks_critical_01(xs.size()));

  Rng r2(6);
  Matrix s(1, 1);
  s << 4.0;
  const HallucinationSample h = gibbs_hallucinate(s, GibbsSettings{}, r2);
  CHECK(h.v.size() == 1);
  CHECK(h.v[0] < 0.0);
  CHECK(h.burn_in == 50);
}

TEST_CASE("Gibbs chain marginals match the truncated bivariate normal") {
  for (double rho : {-0.6, 0.0, 0.8}) {
    const double s1 = 1.0, s2 = 2.0;
    Matrix sigma(2, 2);
    sigma << s1 * s1, rho * s1 * s2, rho * s1 * s2, s2 * s2;
    Rng rng(7);
    const Matrix chain = gibbs_chain(sigma, 50, 4000, 10, rng);
    CHECK((chain.array() < 0.0).all());
    std::vector<double> xs(static_cast<std::size_t>(chain.rows()));
    for (Eigen::Index i = 0; i < chain.rows(); ++i) xs[static_cast<std::size_t>(i)] = chain(i, 0);
    const double d = testutil::ks_statistic(xs, [&](double a) { return truncated_bivariate_marginal_cdf(a, s1, s2, rho); });
    CHECK(d < testutil::ks_critical_01(xs.size()));
  }
}

TEST_CASE("Gibbs hallucinations are strictly negative and reproducible") {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const DuelInstance inst = testutil::random_duel_instance(rng);
    const PreferenceProblem p(inst.data, inst.kernel, inst.endpoint_var);
    Rng a(trial), b(trial);
    const HallucinationSample ha = gibbs_hallucinate(duel_value_covariance(p), GibbsSettings{}, a);
    const HallucinationSample hb = gibbs_hallucinate(duel_value_covariance(p), GibbsSettings{}, b);
    CHECK((ha.v.array() < 0.0).all());
    CHECK(ha.v == hb.v);
  }
  CHECK_THROWS_AS(gibbs_chain(Matrix(0, 0), 1, 1, 1, rng), std::invalid_argument);
  CHECK_THROWS_AS(gibbs_chain(Matrix::Identity(1, 1), 1, 1, 0, rng), std::invalid_argument);
}

TEST_CASE("Laplace predictive matches the explicit Gaussian approximation") {
  Rng rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    const DuelInstance inst = testutil::random_duel_instance(rng, 6);
    const PreferenceProblem p(inst.data, inst.kernel, inst.endpoint_var);
    const LaplaceFit fit = fit_map(p);
    const Matrix test = test_points_for(inst, 5, rng);
    const PredictiveGaussian pred = laplace_predict(test, p, fit);

    // mean = k*^T L^-1 f_map; cov = k** - k*^T (L + Lambda^-1)^-1 k*, written
    // with (L^-1 + Lambda)^-1 since Lambda has rank m.
    const Matrix l = gram(p.points(), inst.kernel);
    const Matrix li = l.inverse();
    const Matrix ks = cross_gram(p.points(), test, inst.kernel);
    const Vector mean = ks.transpose() * li * fit.f_map;
    const Matrix post = (li + fit.lambda_map).inverse();
    const Matrix cov = gram(test, inst.kernel) - ks.transpose() * li * ks + ks.transpose() * li * post * li * ks;
    CHECK((pred.mean - mean).cwiseAbs().maxCoeff() <= 1e-7 * std::max(1.0, mean.cwiseAbs().maxCoeff()));
    CHECK((pred.covariance - cov).cwiseAbs().maxCoeff() <= 1e-7);

    const LaplacePosterior lp(p, fit);
    for (Eigen::Index i = 0; i < test.rows(); ++i) {
      const PointPrediction pp = lp.predict(test.row(i).transpose());
      CHECK(pp.mean == doctest::Approx(pred.mean[i]).epsilon(1e-10));
      CHECK(std::abs(pp.variance - pred.covariance(i, i)) <= 1e-10);
      CHECK(pp.variance <= inst.kernel.signal_variance + 1e-12);
      CHECK(pp.variance >= 0.0);
    }
    // At the stacked training points the mean reproduces the mode.
    const PredictiveGaussian at = laplace_predict(p.points(), p, fit);
    CHECK((at.mean - fit.f_map).cwiseAbs().maxCoeff() <= 1e-8 * std::max(1.0, fit.f_map.cwiseAbs().maxCoeff()));
  }
}
