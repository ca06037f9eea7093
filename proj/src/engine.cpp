#include "hetpbo/engine.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hetpbo {

std::string to_string(InferenceBackend backend) { return backend == InferenceBackend::hb ? "hb" : "laplace"; }

InferenceBackend parse_backend(const std::string& name) {
  if (name == "hb") return InferenceBackend::hb;
  if (name == "laplace") return InferenceBackend::laplace;
  throw std::invalid_argument("unknown inference backend '" + name + "' (expected hb or laplace)");
}

std::string to_string(BandwidthMode mode) { return mode == BandwidthMode::loo ? "loo" : "evidence"; }

BandwidthMode parse_bandwidth_mode(const std::string& name) {
  if (name == "loo") return BandwidthMode::loo;
  if (name == "evidence") return BandwidthMode::evidence;
  throw std::invalid_argument("unknown bandwidth mode '" + name + "' (expected loo or evidence)");
}

std::string to_string(PredictiveMode mode) { return mode == PredictiveMode::latent ? "latent" : "noisy"; }

PredictiveMode parse_predictive_mode(const std::string& name) {
  if (name == "latent") return PredictiveMode::latent;
  if (name == "noisy") return PredictiveMode::noisy;
  throw std::invalid_argument("unknown predictive mode '" + name + "' (expected latent or noisy)");
}

LengthscaleSearch lengthscale_search_for(const EngineSettings& settings, const BoxDomain& domain) {
  return settings.lengthscale_search.value_or(default_lengthscale_search(domain));
}

BandwidthSearch bandwidth_search_for(const EngineSettings& settings, const BoxDomain& domain) {
  return settings.bandwidth_search.value_or(default_bandwidth_search(domain));
}

double anchor_bandwidth(const Matrix& anchors, const BoxDomain& domain, const EngineSettings& settings) {
  const double fallback = settings.fallback_bandwidth * domain.diameter();
  if (anchors.rows() < 2) return fallback;
  try {
    return loo_bandwidth(anchors, bandwidth_search_for(settings, domain)).bandwidth;
  } catch (const DegenerateAnchorsError&) {
    return fallback;
  }
}

Surrogate fit_surrogate(const DuelDataset& data, const AnchorModel& anchors, const BoxDomain& domain,
                        const EngineSettings& settings, Rng& rng) {
  Surrogate s;
  if (data.size() >= 2) {
    s.hyper = fit_hyperparams(data, anchors, lengthscale_search_for(settings, domain), settings.bandwidth_mode,
                              bandwidth_search_for(settings, domain), settings.signal_variance);
  } else {
    s.hyper.lengthscale = 0.2 * domain.diameter();
    s.hyper.scale = anchors.scale();
  }
  s.noise = std::make_shared<const AnchorModel>(anchors.with_bandwidth(s.hyper.bandwidth.value_or(anchors.bandwidth())));
  const RbfKernelParams kernel{s.hyper.lengthscale, settings.signal_variance};

  if (data.empty()) {
    s.posterior = std::make_shared<const PriorPosterior>(kernel);
    s.laplace_posterior = s.posterior;
    return s;
  }
  s.problem = std::make_shared<const PreferenceProblem>(data, kernel, *s.noise);
  s.laplace = fit_map(*s.problem);
  s.laplace_posterior = std::make_shared<const LaplacePosterior>(*s.problem, *s.laplace);
  if (settings.backend == InferenceBackend::hb) {
    s.hallucination = gibbs_hallucinate(duel_value_covariance(*s.problem), settings.gibbs, rng);
    s.posterior =
        std::make_shared<const HbPosterior>(*s.problem, s.hallucination->v, settings.predictive, s.noise.get());
  } else {
    s.posterior = s.laplace_posterior;
  }
  return s;
}

std::vector<DesignPoint> queried_points(const DuelDataset& data) {
  std::vector<DesignPoint> out;
  const auto push = [&](const DesignPoint& x) {
    if (std::none_of(out.begin(), out.end(), [&](const DesignPoint& y) { return y == x; })) out.push_back(x);
  };
  for (const DuelRecord& r : data.records()) {
    push(r.winner);
    push(r.loser);
  }
  return out;
}

DesignPoint best_winner(const LatentPosterior& posterior, const DuelDataset& data) {
  if (data.empty()) throw std::invalid_argument("best_winner: no duels recorded");
  std::vector<DesignPoint> winners;
  for (const DuelRecord& r : data.records()) winners.push_back(r.winner);
  return incumbent(posterior, winners).x;
}

EngineStep engine_step(const DuelDataset& data, const AnchorModel& anchors, const BoxDomain& domain,
                       const std::vector<DesignPoint>& queried, const std::optional<DesignPoint>& previous_winner,
                       const EngineSettings& settings, Rng& rng) {
  Surrogate s = fit_surrogate(data, anchors, domain, settings, rng);
  Incumbent inc = incumbent(*s.posterior, queried);
  const DesignPoint reference = previous_winner ? *previous_winner : best_winner(*s.posterior, data);
  DuelProposal proposal = propose_duel(*s.posterior, *s.noise, domain, reference, inc.mean, settings.acq, rng);
  return EngineStep{std::move(s), std::move(inc), std::move(proposal)};
}

}  // namespace hetpbo
