#pragma once

// One step of the preference loop shared by the simulated harness and the live
// session service: refit hyperparameters, draw a hallucination, build the
// posterior and propose the next duel. All points are in model-frame units.

#include "hetpbo/acquisition.hpp"
#include "hetpbo/inference.hpp"
#include "hetpbo/kde_noise.hpp"
#include "hetpbo/pref_model.hpp"

#include <memory>
#include <optional>
#include <string>

namespace hetpbo {

enum class InferenceBackend { hb, laplace };

std::string to_string(InferenceBackend backend);
InferenceBackend parse_backend(const std::string& name);
std::string to_string(BandwidthMode mode);
BandwidthMode parse_bandwidth_mode(const std::string& name);
std::string to_string(PredictiveMode mode);
PredictiveMode parse_predictive_mode(const std::string& name);

struct EngineSettings {
  double signal_variance = 1.0;
  /// Unset means the default range for the domain.
  std::optional<LengthscaleSearch> lengthscale_search;
  std::optional<BandwidthSearch> bandwidth_search;
  BandwidthMode bandwidth_mode = BandwidthMode::loo;
  InferenceBackend backend = InferenceBackend::hb;
  PredictiveMode predictive = PredictiveMode::latent;
  GibbsSettings gibbs;
  AcqConfig acq;
  /// Bandwidth used when LOO is impossible (fewer than two distinct anchors), as a fraction of the diameter.
  double fallback_bandwidth = 0.1;
};

LengthscaleSearch lengthscale_search_for(const EngineSettings& settings, const BoxDomain& domain);
BandwidthSearch bandwidth_search_for(const EngineSettings& settings, const BoxDomain& domain);

/// LOO bandwidth of the anchors, or the fallback when it cannot be computed.
double anchor_bandwidth(const Matrix& anchors, const BoxDomain& domain, const EngineSettings& settings);

struct Surrogate {
  SurrogateHyperparams hyper;
  std::shared_ptr<const AnchorModel> noise;
  std::shared_ptr<const PreferenceProblem> problem;
  std::optional<LaplaceFit> laplace;
  std::optional<HallucinationSample> hallucination;
  /// Posterior of the configured backend; drives proposals.
  std::shared_ptr<const LatentPosterior> posterior;
  /// Deterministic Laplace posterior; used for reporting.
  std::shared_ptr<const LatentPosterior> laplace_posterior;
};

/// Hyperparameters are refitted when the dataset holds at least two duels;
/// otherwise `fallback_lengthscale` (0.2 of the diameter when unset) is used.
/// `anchors` carries the anchor bandwidth used in LOO mode.
Surrogate fit_surrogate(const DuelDataset& data, const AnchorModel& anchors, const BoxDomain& domain,
                        const EngineSettings& settings, Rng& rng);

struct EngineStep {
  Surrogate surrogate;
  Incumbent incumbent;
  DuelProposal proposal;
};

/// Full step: fit the surrogate on `data`, locate the incumbent among the
/// queried points and propose a duel against `previous_winner`. Without a
/// previous winner the recorded winner with the highest posterior mean is used.
EngineStep engine_step(const DuelDataset& data, const AnchorModel& anchors, const BoxDomain& domain,
                       const std::vector<DesignPoint>& queried, const std::optional<DesignPoint>& previous_winner,
                       const EngineSettings& settings, Rng& rng);

/// Recorded winner with the highest posterior mean; ties go to the earliest.
DesignPoint best_winner(const LatentPosterior& posterior, const DuelDataset& data);

/// Distinct points appearing in the dataset, in order of first appearance.
std::vector<DesignPoint> queried_points(const DuelDataset& data);

}  // namespace hetpbo
