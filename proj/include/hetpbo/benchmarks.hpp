#pragma once

// Synthetic latent utilities (maximization convention), the oracle of true
// user uncertainty attached to each, anchor sampling and the simulated human.
//
// Each benchmark declares a model frame: the coordinates in which the GP
// kernel, the KDE and the oracle density operate. `native` uses the domain
// as-is, `unit` maps it affinely onto [0,1]^d. Latent values and all
// reported points are in native units.

#include "hetpbo/core_math.hpp"
#include "hetpbo/kde_noise.hpp"
#include "hetpbo/pref_model.hpp"

#include <optional>
#include <string>
#include <vector>

namespace hetpbo {

enum class BenchmarkTag { sine1d, branin2d, hartmann4d };
enum class ModelFrame { native, unit };

std::string to_string(BenchmarkTag tag);
BenchmarkTag parse_benchmark_tag(const std::string& name);
std::string to_string(ModelFrame frame);
ModelFrame parse_model_frame(const std::string& name);

BoxDomain benchmark_domain(BenchmarkTag tag);

/// Throws std::domain_error outside the benchmark domain.
double latent_f(BenchmarkTag tag, const DesignPoint& x);

struct OracleSettings {
  OracleFamily family = OracleFamily::gaussian;
  /// Center and per-axis scale in model-frame coordinates.
  Vector center;
  Vector scale;
  double dof = 5.0;
};

/// Documented oracle placement for each benchmark.
OracleSettings default_oracle(BenchmarkTag tag, ModelFrame frame);
ModelFrame default_frame(BenchmarkTag tag);
double default_noise_scale(BenchmarkTag tag);

class BenchmarkSpec {
 public:
  BenchmarkSpec(BenchmarkTag tag, ModelFrame frame, const OracleSettings& oracle, double noise_scale);
  static BenchmarkSpec make_default(BenchmarkTag tag);

  BenchmarkTag tag() const { return tag_; }
  ModelFrame frame() const { return frame_; }
  const BoxDomain& domain() const { return domain_; }
  /// Domain expressed in model-frame coordinates.
  const BoxDomain& frame_domain() const { return frame_domain_; }
  const DesignPoint& x_max() const { return x_max_; }
  double f_max() const { return f_max_; }
  /// max f - min f over the domain.
  double value_range() const { return value_range_; }
  const TrueUncertaintyOracle& oracle() const { return oracle_; }
  double noise_scale() const { return oracle_.noise_scale(); }

  DesignPoint to_frame(const DesignPoint& x) const;
  DesignPoint from_frame(const DesignPoint& u) const;

  double f(const DesignPoint& x) const { return latent_f(tag_, x); }

 private:
  BenchmarkTag tag_;
  ModelFrame frame_;
  BoxDomain domain_;
  BoxDomain frame_domain_;
  DesignPoint x_max_;
  double f_max_;
  double value_range_;
  TrueUncertaintyOracle oracle_;
};

/// a * exp(-p(x)), with p the oracle density in the model frame.
double true_noise_variance(const BenchmarkSpec& spec, const DesignPoint& x);

class AnchorSamplingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// I.i.d. oracle draws rejected outside the domain, in native units.
std::vector<DesignPoint> sample_anchors(const BenchmarkSpec& spec, std::size_t n, Rng& rng);

class SimulatedHuman {
 public:
  SimulatedHuman(const BenchmarkSpec& spec, Rng rng) : spec_(&spec), rng_(std::move(rng)) {}

  /// x wins when f(x) + eps(x) >= f(x') + eps(x'), eps drawn from the true oracle variance.
  DuelRecord answer_duel(const DesignPoint& x, const DesignPoint& x_prime);

 private:
  const BenchmarkSpec* spec_;
  Rng rng_;
};

}  // namespace hetpbo
