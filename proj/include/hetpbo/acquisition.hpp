#pragma once

// Risk-neutral (EI, UCB) and risk-averse (ANPEI, RAHBO) acquisition functions
// and the duel proposal step: the challenger maximizes the acquisition, the
// reference is the previous duel winner.

#include "hetpbo/core_math.hpp"
#include "hetpbo/inference.hpp"
#include "hetpbo/kde_noise.hpp"

#include <functional>
#include <string>
#include <vector>

namespace hetpbo {

enum class AcqKind { ei, ucb, anpei, rahbo };

std::string to_string(AcqKind kind);
AcqKind parse_acq_kind(const std::string& name);

struct AcqConfig {
  AcqKind kind = AcqKind::ei;
  /// Weight of the aleatoric penalty.
  double gamma = 1.0;
  /// UCB exploration weight.
  double eta = 2.0;
  /// Uniform candidates per proposal; 0 means 1024 * d.
  std::size_t pool_size = 0;
  std::size_t refine_top = 8;
  /// Coordinate-descent steps per refined candidate; 0 disables refinement.
  std::size_t refine_steps = 50;

  void validate() const;
};

/// Closed-form E[(f - incumbent)_+] for f ~ N(mu, sigma^2); max(mu - incumbent, 0) when sigma = 0.
double expected_improvement(double mu, double sigma, double incumbent);

/// ei:    EI
/// anpei: EI - gamma * sqrt(noise_var)
/// ucb:   mu + eta * sigma
/// rahbo: mu + eta * sigma - gamma * noise_var
double acq_value(double mu, double sigma, double noise_var, double incumbent_mean, const AcqConfig& config);

struct Incumbent {
  DesignPoint x;
  double mean = 0.0;
  std::size_t index = 0;
};

/// Queried point with the highest posterior mean; ties go to the earliest.
Incumbent incumbent(const LatentPosterior& posterior, const std::vector<DesignPoint>& history);

struct Maximum {
  DesignPoint x;
  double value = 0.0;
};

/// Best of `pool` plus coordinate refinement of the top candidates; never
/// returns a value below the best pooled one. Points listed in `exclude` are
/// never returned unless nothing else is available.
Maximum maximize_over_pool(const std::function<double(const DesignPoint&)>& acquisition, const Matrix& pool,
                           const BoxDomain& domain, const AcqConfig& config,
                           const std::vector<DesignPoint>& exclude = {});

Matrix candidate_pool(const BoxDomain& domain, std::size_t size, Rng& rng);

struct DuelProposal {
  DesignPoint challenger;
  DesignPoint reference;
  double value = 0.0;
};

DuelProposal propose_duel(const LatentPosterior& posterior, const NoiseModel& noise, const BoxDomain& domain,
                          const DesignPoint& previous_winner, double incumbent_mean, const AcqConfig& config,
                          Rng& rng);

}  // namespace hetpbo
