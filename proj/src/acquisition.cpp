#include "hetpbo/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace hetpbo {

std::string to_string(AcqKind kind) {
  switch (kind) {
    case AcqKind::ei: return "ei";
    case AcqKind::ucb: return "ucb";
    case AcqKind::anpei: return "anpei";
    case AcqKind::rahbo: return "rahbo";
  }
  return "?";
}

AcqKind parse_acq_kind(const std::string& name) {
  if (name == "ei") return AcqKind::ei;
  if (name == "ucb") return AcqKind::ucb;
  if (name == "anpei") return AcqKind::anpei;
  if (name == "rahbo") return AcqKind::rahbo;
  throw std::invalid_argument("unknown acquisition kind '" + name + "' (expected ei, ucb, anpei or rahbo)");
}

void AcqConfig::validate() const {
  if (!std::isfinite(gamma) || gamma < 0.0 || !std::isfinite(eta) || eta < 0.0) {
    throw std::invalid_argument("AcqConfig: gamma and eta must be finite and non-negative");
  }
  if (refine_top < 1) throw std::invalid_argument("AcqConfig: refine_top must be >= 1");
}

double expected_improvement(double mu, double sigma, double incumbent) {
  const double gap = mu - incumbent;
  if (!(sigma > 0.0)) return std::max(gap, 0.0);
  const double z = gap / sigma;
  return sigma * (z * std_normal_cdf(z) + std_normal_pdf(z));
}

double acq_value(double mu, double sigma, double noise_var, double incumbent_mean, const AcqConfig& config) {
  switch (config.kind) {
    case AcqKind::ei: return expected_improvement(mu, sigma, incumbent_mean);
    case AcqKind::anpei: return expected_improvement(mu, sigma, incumbent_mean) - config.gamma * std::sqrt(noise_var);
    case AcqKind::ucb: return mu + config.eta * sigma;
    case AcqKind::rahbo: return mu + config.eta * sigma - config.gamma * noise_var;
  }
  throw std::logic_error("acq_value: unhandled kind");
}

Incumbent incumbent(const LatentPosterior& posterior, const std::vector<DesignPoint>& history) {
  if (history.empty()) throw std::invalid_argument("incumbent: no queried points");
  Incumbent best{history.front(), posterior.predict(history.front()).mean, 0};
  for (std::size_t i = 1; i < history.size(); ++i) {
    const double mean = posterior.predict(history[i]).mean;
    if (mean > best.mean) best = {history[i], mean, i};
  }
  return best;
}

Matrix candidate_pool(const BoxDomain& domain, std::size_t size, Rng& rng) {
  Matrix pool(static_cast<Eigen::Index>(size), static_cast<Eigen::Index>(domain.dim()));
  for (std::size_t i = 0; i < size; ++i) pool.row(static_cast<Eigen::Index>(i)) = domain.sample(rng).transpose();
  return pool;
}

namespace {

bool excluded(const DesignPoint& x, const std::vector<DesignPoint>& exclude) {
  return std::any_of(exclude.begin(), exclude.end(), [&](const DesignPoint& e) { return e == x; });
}

}  // namespace

Maximum maximize_over_pool(const std::function<double(const DesignPoint&)>& acquisition, const Matrix& pool,
                           const BoxDomain& domain, const AcqConfig& config, const std::vector<DesignPoint>& exclude) {
  if (pool.rows() < 1) throw std::invalid_argument("maximize_over_pool: empty candidate pool");
  const auto n = static_cast<std::size_t>(pool.rows());
  std::vector<Maximum> evaluated(n);
  for (std::size_t i = 0; i < n; ++i) {
    evaluated[i].x = pool.row(static_cast<Eigen::Index>(i)).transpose();
    evaluated[i].value = acquisition(evaluated[i].x);
    if (std::isnan(evaluated[i].value)) evaluated[i].value = -std::numeric_limits<double>::infinity();
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return evaluated[a].value > evaluated[b].value; });

  std::vector<Maximum> finalists;
  const std::size_t top = std::min(config.refine_top, n);
  const Vector range = domain.range();
  for (std::size_t r = 0; r < top; ++r) {
    Maximum cur = evaluated[order[r]];
    Vector radius = 0.1 * range;
    for (std::size_t step = 0; step < config.refine_steps; ++step) {
      bool improved = false;
      for (Eigen::Index axis = 0; axis < cur.x.size(); ++axis) {
        for (const double sign : {1.0, -1.0}) {
          DesignPoint y = cur.x;
          y[axis] += sign * radius[axis];
          y = domain.clamp(y);
          if (y == cur.x) continue;
          const double v = acquisition(y);
          if (v > cur.value) {
            cur = {y, v};
            improved = true;
          }
        }
      }
      if (!improved) radius *= 0.5;
    }
    finalists.push_back(std::move(cur));
  }
  for (std::size_t r = top; r < n; ++r) finalists.push_back(evaluated[order[r]]);
  std::stable_sort(finalists.begin(), finalists.end(),
                   [](const Maximum& a, const Maximum& b) { return a.value > b.value; });
  for (const Maximum& m : finalists) {
    if (!excluded(m.x, exclude)) return m;
  }
  return finalists.front();
}

DuelProposal propose_duel(const LatentPosterior& posterior, const NoiseModel& noise, const BoxDomain& domain,
                          const DesignPoint& previous_winner, double incumbent_mean, const AcqConfig& config,
                          Rng& rng) {
  config.validate();
  const std::size_t size = config.pool_size ? config.pool_size : 1024 * domain.dim();
  const Matrix pool = candidate_pool(domain, size, rng);
  const auto acquisition = [&](const DesignPoint& x) {
    const PointPrediction p = posterior.predict(x);
    return acq_value(p.mean, std::sqrt(p.variance), noise.variance(x), incumbent_mean, config);
  };
  const Maximum best = maximize_over_pool(acquisition, pool, domain, config, {previous_winner});
  return DuelProposal{best.x, previous_winner, best.value};
}

}  // namespace hetpbo
