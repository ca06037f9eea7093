#pragma once

// Posterior prediction for the preferential GP.
//
// Hallucination believer: draw v ~ N(0, S_vv) truncated to v < 0 by Gibbs
// sampling, where v_k = f(x'_k) + e(x'_k) - f(x_k) - e(x_k), then condition the
// GP on that v exactly (an ordinary Gaussian conditional).
// Laplace: Gaussian approximation around the posterior mode.

#include "hetpbo/core_math.hpp"
#include "hetpbo/kde_noise.hpp"
#include "hetpbo/pref_model.hpp"

#include <cstdint>
#include <memory>
#include <utility>

namespace hetpbo {

/// Blocks of the joint covariance of (f(test), v).
struct JointCovariance {
  Matrix star_star;   // t x t, latent prior over the test points
  Matrix star_v;      // t x m
  Matrix v_v;         // m x m, includes both endpoint noise variances on the diagonal
  Vector star_noise;  // t, noise variance at each test point (V_noise,*)

  Matrix full() const;
};

/// `test_noise` holds the noise variance at each test row.
JointCovariance build_joint(const Matrix& test_points, const PreferenceProblem& problem, const Vector& test_noise);

/// Covariance of v only: K_diff + diag(pair variances).
Matrix duel_value_covariance(const PreferenceProblem& problem);

struct GibbsSettings {
  std::size_t burn_in = 50;
  std::size_t thinning = 1;
};

struct HallucinationSample {
  Vector v;
  std::size_t burn_in = 0;
  std::size_t saturated = 0;
};

/// Runs `burn_in` full sweeps of the coordinate-wise Gibbs sampler for
/// N(0, sigma_vv) restricted to the negative orthant and returns the state.
HallucinationSample gibbs_hallucinate(const Matrix& sigma_vv, const GibbsSettings& settings, Rng& rng);

/// Keeps `keep` states, one every `thinning` sweeps after burn-in; rows are states.
Matrix gibbs_chain(const Matrix& sigma_vv, std::size_t burn_in, std::size_t keep, std::size_t thinning, Rng& rng);

/// latent: covariance of f(test). noisy: adds the test-point noise variance.
enum class PredictiveMode { latent, noisy };

struct PredictiveGaussian {
  Vector mean;
  Matrix covariance;
};

PredictiveGaussian hb_predict(const Matrix& test_points, const PreferenceProblem& problem, const Vector& hallucination,
                              PredictiveMode mode = PredictiveMode::latent, const NoiseModel* test_noise = nullptr);

PredictiveGaussian laplace_predict(const Matrix& test_points, const PreferenceProblem& problem, const LaplaceFit& fit);

struct PointPrediction {
  double mean = 0.0;
  double variance = 0.0;
};

/// Marginal posterior of f at single points; what the acquisition layer sees.
class LatentPosterior {
 public:
  virtual ~LatentPosterior() = default;
  virtual PointPrediction predict(const DesignPoint& x) const = 0;
};

/// Zero-mean prior; used before any duel has been observed.
class PriorPosterior final : public LatentPosterior {
 public:
  explicit PriorPosterior(RbfKernelParams kernel) : kernel_(kernel) {}
  PointPrediction predict(const DesignPoint&) const override { return {0.0, kernel_.signal_variance}; }

 private:
  RbfKernelParams kernel_;
};

/// Hallucination-believer posterior with S_vv factorized once.
class HbPosterior final : public LatentPosterior {
 public:
  HbPosterior(const PreferenceProblem& problem, Vector hallucination, PredictiveMode mode = PredictiveMode::latent,
              const NoiseModel* noise = nullptr);
  PointPrediction predict(const DesignPoint& x) const override;

 private:
  Matrix points_;
  std::size_t m_;
  RbfKernelParams kernel_;
  PsdMatrix sigma_vv_;
  Vector weights_;
  PredictiveMode mode_;
  const NoiseModel* noise_;
};

class LaplacePosterior final : public LatentPosterior {
 public:
  LaplacePosterior(const PreferenceProblem& problem, const LaplaceFit& fit);
  PointPrediction predict(const DesignPoint& x) const override;

 private:
  Matrix points_;
  std::size_t m_;
  RbfKernelParams kernel_;
  Vector alpha_;
  Vector sqrt_w_;
  PsdMatrix b_;
};

}  // namespace hetpbo
