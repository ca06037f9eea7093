#include "hetpbo/benchmarks.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <boost/math/distributions/binomial.hpp>

#include <cmath>
#include <numbers>

using namespace hetpbo;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

}  // namespace

TEST_CASE("benchmark names and frames round trip") {
  for (BenchmarkTag t : {BenchmarkTag::sine1d, BenchmarkTag::branin2d, BenchmarkTag::hartmann4d}) {
    CHECK(parse_benchmark_tag(to_string(t)) == t);
  }
  for (ModelFrame f : {ModelFrame::native, ModelFrame::unit}) CHECK(parse_model_frame(to_string(f)) == f);
  CHECK_THROWS(parse_benchmark_tag("rosenbrock"));
  CHECK_THROWS(parse_model_frame("log"));
}

TEST_CASE("latent functions match independent evaluations") {
  CHECK(latent_f(BenchmarkTag::sine1d, vec({0.25})) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(latent_f(BenchmarkTag::sine1d, vec({1.25})) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(latent_f(BenchmarkTag::sine1d, vec({0.75})) == doctest::Approx(-1.0).epsilon(1e-15));

  const auto close = [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)); };
  CHECK(close(latent_f(BenchmarkTag::branin2d, vec({std::numbers::pi, 2.275})), -0.39788735772973833942));
  CHECK(close(latent_f(BenchmarkTag::branin2d, vec({0.0, 0.0})), -55.602112642270261661));
  CHECK(close(latent_f(BenchmarkTag::branin2d, vec({1.0, 2.0})), -21.627635392062378592));
  CHECK(close(latent_f(BenchmarkTag::branin2d, vec({-5.0, 0.0})), -308.12909601160666263));
  CHECK(close(latent_f(BenchmarkTag::hartmann4d, Vector::Constant(4, 0.5)), 1.0833433453236143912));
  CHECK(close(latent_f(BenchmarkTag::hartmann4d, vec({0.18739527, 0.19415152, 0.55791777, 0.26477962})),
              3.1344941412223968951));
  CHECK(close(latent_f(BenchmarkTag::hartmann4d, Vector::Zero(4)), -0.31329145594344672424));

  CHECK_THROWS_AS(latent_f(BenchmarkTag::sine1d, vec({2.5})), std::domain_error);
  CHECK_THROWS_AS(latent_f(BenchmarkTag::branin2d, vec({0.0, -1.0})), std::domain_error);
  CHECK_THROWS_AS(latent_f(BenchmarkTag::hartmann4d, Vector::Zero(3)), std::invalid_argument);
}

TEST_CASE("known optima dominate random designs") {
  Rng rng(1);
  for (BenchmarkTag t : {BenchmarkTag::sine1d, BenchmarkTag::branin2d, BenchmarkTag::hartmann4d}) {
    const BenchmarkSpec spec = BenchmarkSpec::make_default(t);
    CHECK(spec.domain().contains(spec.x_max()));
    CHECK(spec.f_max() == spec.f(spec.x_max()));
    const double f_min = spec.f_max() - spec.value_range();
    for (int i = 0; i < 20000; ++i) {
      const DesignPoint x = spec.domain().sample(rng);
      const double f = spec.f(x);
      CHECK(f <= spec.f_max() + 1e-9);
      CHECK(f >= f_min - 1e-9);
    }
  }
}

TEST_CASE("true noise variance") {
  const BenchmarkSpec sine = BenchmarkSpec::make_default(BenchmarkTag::sine1d);
  CHECK(true_noise_variance(sine, vec({0.25})) == doctest::Approx(0.0041108587273405544047).epsilon(1e-12));
  CHECK(std::abs(true_noise_variance(sine, vec({0.25})) - 0.004112) < 2e-6);
  CHECK(true_noise_variance(sine, vec({2.0})) == doctest::Approx(0.1).epsilon(1e-12));
  for (double dx : {1e-3, 1e-2, 0.1}) {
    CHECK(true_noise_variance(sine, vec({0.25 + dx})) > true_noise_variance(sine, vec({0.25})));
    CHECK(true_noise_variance(sine, vec({0.25 - dx})) > true_noise_variance(sine, vec({0.25})));
  }
  CHECK_THROWS_AS(true_noise_variance(sine, vec({-0.1})), std::domain_error);

  const BenchmarkSpec branin = BenchmarkSpec::make_default(BenchmarkTag::branin2d);
  CHECK(branin.frame() == ModelFrame::unit);
  const Vector c = vec({std::numbers::pi, 2.275});
  // Unit frame: the per-axis sd is 0.1, so the peak density is 1 / (2 pi 0.01).
  CHECK(true_noise_variance(branin, c) == doctest::Approx(std::exp(-1.0 / (2.0 * std::numbers::pi * 0.01))).epsilon(1e-12));
  CHECK(true_noise_variance(branin, vec({10.0, 15.0})) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(branin.to_frame(c).isApprox(vec({(std::numbers::pi + 5.0) / 15.0, 2.275 / 15.0}), 1e-15));
  CHECK(branin.from_frame(branin.to_frame(c)).isApprox(c, 1e-15));

  const BenchmarkSpec hart = BenchmarkSpec::make_default(BenchmarkTag::hartmann4d);
  CHECK(hart.noise_scale() == 2.0);
  CHECK((hart.x_max() - Vector::Constant(4, 0.6)).norm() >= 0.5);
  CHECK(true_noise_variance(hart, hart.x_max()) > true_noise_variance(hart, Vector::Constant(4, 0.6)));
}

TEST_CASE("anchor sampling") {
  const BenchmarkSpec sine = BenchmarkSpec::make_default(BenchmarkTag::sine1d);
  Rng rng(2);
  const auto anchors = sample_anchors(sine, 30, rng);
  REQUIRE(anchors.size() == 30);
  double mean = 0.0;
  for (const auto& a : anchors) mean += a[0] / 30.0;
  CHECK(std::abs(mean - 0.25) <= 3.0 * 0.125 / std::sqrt(30.0));

  Rng r1(3), r2(3);
  CHECK(stack_rows(sample_anchors(sine, 30, r1)) == stack_rows(sample_anchors(sine, 30, r2)));
  const auto single = sample_anchors(sine, 1, rng);
  REQUIRE(single.size() == 1);
  CHECK(sine.domain().contains(single[0]));
  CHECK_THROWS_AS(sample_anchors(sine, 0, rng), std::invalid_argument);

  // Out-of-domain draws are rejected, never clipped onto the boundary.
  const BenchmarkSpec branin = BenchmarkSpec::make_default(BenchmarkTag::branin2d);
  const auto many = sample_anchors(branin, 2000, rng);
  std::size_t on_edge = 0;
  for (const auto& a : many) {
    CHECK(branin.domain().contains(a));
    on_edge += (a[1] == 0.0) ? 1 : 0;
  }
  CHECK(on_edge == 0);
  const Matrix rows = stack_rows(many);
  const double mean_x2 = rows.col(1).mean();
  // Truncation at x2 = 0 shifts the mean of N(2.275, 1.5^2) up to about 2.41.
  CHECK(mean_x2 > 2.275);

  OracleSettings far = default_oracle(BenchmarkTag::sine1d, ModelFrame::native);
  far.center = vec({50.0});
  const BenchmarkSpec bad(BenchmarkTag::sine1d, ModelFrame::native, far, 0.1);
  CHECK_THROWS_AS(sample_anchors(bad, 5, rng), AnchorSamplingError);
}

TEST_CASE("simulated human: noiseless limit") {
  OracleSettings o = default_oracle(BenchmarkTag::sine1d, ModelFrame::native);
  const BenchmarkSpec quiet(BenchmarkTag::sine1d, ModelFrame::native, o, 1e-300);
  SimulatedHuman human(quiet, Rng(4));
  for (int i = 0; i < 1000; ++i) {
    CHECK(human.answer_duel(vec({0.25}), vec({0.6})).winner == vec({0.25}));
    CHECK(human.answer_duel(vec({0.6}), vec({0.25})).winner == vec({0.25}));
  }
}

TEST_CASE("simulated human: equal utilities and variances give fair coins") {
  const BenchmarkSpec sine = BenchmarkSpec::make_default(BenchmarkTag::sine1d);
  // 0.1 and 0.4 are mirror images about 0.25 for both f and the oracle.
  const Vector x = vec({0.1}), y = vec({0.4});
  REQUIRE(std::abs(sine.f(x) - sine.f(y)) < 1e-15);
  REQUIRE(true_noise_variance(sine, x) == doctest::Approx(true_noise_variance(sine, y)).epsilon(1e-14));
  SimulatedHuman human(sine, Rng(5));
  const int n = 10000;
  int wins = 0;
  for (int i = 0; i < n; ++i) wins += human.answer_duel(x, y).winner == x ? 1 : 0;
  const boost::math::binomial_distribution<double> fair(n, 0.5);
  const double lower = boost::math::cdf(fair, static_cast<double>(wins));
  const double upper = boost::math::cdf(boost::math::complement(fair, static_cast<double>(wins - 1)));
  CHECK(2.0 * std::min(lower, upper) > 0.01);
}

TEST_CASE("simulated human win frequencies match the probit likelihood") {
  Rng pick(6);
  for (BenchmarkTag t : {BenchmarkTag::sine1d, BenchmarkTag::branin2d, BenchmarkTag::hartmann4d}) {
    const BenchmarkSpec spec = BenchmarkSpec::make_default(t);
    SimulatedHuman human(spec, Rng(7));
    for (int pair = 0; pair < 4; ++pair) {
      // Pairs close in utility so that the probability is not saturated.
      DesignPoint x = spec.domain().sample(pick), y = spec.domain().sample(pick);
      if (t == BenchmarkTag::branin2d) y = spec.domain().clamp(x + 0.05 * (y - x));
      const double s2 = true_noise_variance(spec, x) + true_noise_variance(spec, y);
      const double p = std_normal_cdf((spec.f(x) - spec.f(y)) / std::sqrt(s2));
      const int n = 100000;
      int wins = 0;
      for (int i = 0; i < n; ++i) wins += human.answer_duel(x, y).winner == x ? 1 : 0;
      CHECK(std::abs(static_cast<double>(wins) / n - p) < 0.01);
    }
  }
}
