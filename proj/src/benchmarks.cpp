#include "hetpbo/benchmarks.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace hetpbo {

namespace {

constexpr double kPi = std::numbers::pi;

const double kHartmannAlpha[4] = {1.0, 1.2, 3.0, 3.2};
const double kHartmannA[4][4] = {
    {10.0, 3.0, 17.0, 3.5}, {0.05, 10.0, 17.0, 0.1}, {3.0, 3.5, 1.7, 10.0}, {17.0, 8.0, 0.05, 10.0}};
const double kHartmannP[4][4] = {{1312, 1696, 5569, 124},
                                 {2329, 4135, 8307, 3736},
                                 {2348, 1451, 3522, 2883},
                                 {4047, 8828, 8732, 5743}};

double branin(double x1, double x2) {
  const double b = 5.1 / (4.0 * kPi * kPi);
  const double c = 5.0 / kPi;
  const double t = 1.0 / (8.0 * kPi);
  const double q = x2 - b * x1 * x1 + c * x1 - 6.0;
  return q * q + 10.0 * (1.0 - t) * std::cos(x1) + 10.0;
}

double hartmann4(const DesignPoint& x) {
  double s = 0.0;
  for (int i = 0; i < 4; ++i) {
    double e = 0.0;
    for (int j = 0; j < 4; ++j) {
      const double d = x[j] - kHartmannP[i][j] * 1e-4;
      e += kHartmannA[i][j] * d * d;
    }
    s += kHartmannAlpha[i] * std::exp(-e);
  }
  return (1.1 - s) / 0.839;
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

}  // namespace

std::string to_string(BenchmarkTag tag) {
  switch (tag) {
    case BenchmarkTag::sine1d: return "sine1d";
    case BenchmarkTag::branin2d: return "branin2d";
    case BenchmarkTag::hartmann4d: return "hartmann4d";
  }
  return "?";
}

BenchmarkTag parse_benchmark_tag(const std::string& name) {
  if (name == "sine1d") return BenchmarkTag::sine1d;
  if (name == "branin2d") return BenchmarkTag::branin2d;
  if (name == "hartmann4d") return BenchmarkTag::hartmann4d;
  throw std::invalid_argument("unknown benchmark '" + name + "' (expected sine1d, branin2d or hartmann4d)");
}

std::string to_string(ModelFrame frame) { return frame == ModelFrame::native ? "native" : "unit"; }

ModelFrame parse_model_frame(const std::string& name) {
  if (name == "native") return ModelFrame::native;
  if (name == "unit") return ModelFrame::unit;
  throw std::invalid_argument("unknown frame '" + name + "' (expected native or unit)");
}

BoxDomain benchmark_domain(BenchmarkTag tag) {
  switch (tag) {
    case BenchmarkTag::sine1d: return BoxDomain(vec({0.0}), vec({2.0}));
    case BenchmarkTag::branin2d: return BoxDomain(vec({-5.0, 0.0}), vec({10.0, 15.0}));
    case BenchmarkTag::hartmann4d: return BoxDomain::unit(4);
  }
  throw std::logic_error("benchmark_domain: unhandled tag");
}

double latent_f(BenchmarkTag tag, const DesignPoint& x) {
  const BoxDomain domain = benchmark_domain(tag);
  if (static_cast<std::size_t>(x.size()) != domain.dim()) {
    throw std::invalid_argument("latent_f: dimension mismatch for " + to_string(tag));
  }
  if (!domain.contains(x, 1e-12)) throw std::domain_error("latent_f: point outside the " + to_string(tag) + " domain");
  switch (tag) {
    case BenchmarkTag::sine1d: return std::sin(2.0 * kPi * x[0]);
    case BenchmarkTag::branin2d: return -branin(x[0], x[1]);
    case BenchmarkTag::hartmann4d: return -hartmann4(x);
  }
  throw std::logic_error("latent_f: unhandled tag");
}

ModelFrame default_frame(BenchmarkTag tag) {
  return tag == BenchmarkTag::branin2d ? ModelFrame::unit : ModelFrame::native;
}

double default_noise_scale(BenchmarkTag tag) {
  switch (tag) {
    case BenchmarkTag::sine1d: return 0.1;
    case BenchmarkTag::branin2d: return 1.0;
    case BenchmarkTag::hartmann4d: return 2.0;
  }
  throw std::logic_error("default_noise_scale: unhandled tag");
}

OracleSettings default_oracle(BenchmarkTag tag, ModelFrame frame) {
  const BoxDomain domain = benchmark_domain(tag);
  OracleSettings s;
  switch (tag) {
    case BenchmarkTag::sine1d:
      s.center = vec({0.25});
      s.scale = vec({0.125});
      break;
    case BenchmarkTag::branin2d:
      s.center = vec({kPi, 2.275});
      s.scale = 0.1 * domain.range();
      break;
    case BenchmarkTag::hartmann4d:
      s.center = Vector::Constant(4, 0.6);
      s.scale = Vector::Constant(4, 0.25);
      break;
  }
  if (frame == ModelFrame::unit) {
    s.center = domain.to_unit(s.center);
    s.scale = s.scale.cwiseQuotient(domain.range());
  }
  return s;
}

BenchmarkSpec::BenchmarkSpec(BenchmarkTag tag, ModelFrame frame, const OracleSettings& oracle, double noise_scale)
    : tag_(tag),
      frame_(frame),
      domain_(benchmark_domain(tag)),
      frame_domain_(frame == ModelFrame::unit ? BoxDomain::unit(domain_.dim()) : domain_),
      x_max_(),
      f_max_(0.0),
      value_range_(0.0),
      oracle_(oracle.family, oracle.center, oracle.scale, noise_scale, oracle.dof) {
  if (oracle_.dim() != domain_.dim()) throw std::invalid_argument("BenchmarkSpec: oracle dimension mismatch");
  switch (tag) {
    case BenchmarkTag::sine1d:
      x_max_ = vec({0.25});
      value_range_ = 2.0;
      break;
    case BenchmarkTag::branin2d:
      x_max_ = vec({kPi, 2.275});
      value_range_ = 308.12909601160663 - 0.39788735772973833;
      break;
    case BenchmarkTag::hartmann4d:
      x_max_ = vec({0.18739527, 0.19415152, 0.55791777, 0.26477962});
      value_range_ = 3.1344941412223983 + 1.3095406214559708;
      break;
  }
  f_max_ = latent_f(tag, x_max_);
}

BenchmarkSpec BenchmarkSpec::make_default(BenchmarkTag tag) {
  const ModelFrame frame = default_frame(tag);
  return BenchmarkSpec(tag, frame, default_oracle(tag, frame), default_noise_scale(tag));
}

DesignPoint BenchmarkSpec::to_frame(const DesignPoint& x) const {
  return frame_ == ModelFrame::unit ? domain_.to_unit(x) : x;
}

DesignPoint BenchmarkSpec::from_frame(const DesignPoint& u) const {
  return frame_ == ModelFrame::unit ? domain_.clamp(domain_.from_unit(u)) : u;
}

double true_noise_variance(const BenchmarkSpec& spec, const DesignPoint& x) {
  if (!spec.domain().contains(x, 1e-12)) throw std::domain_error("true_noise_variance: point outside the domain");
  return spec.oracle().variance(spec.to_frame(x));
}

std::vector<DesignPoint> sample_anchors(const BenchmarkSpec& spec, std::size_t n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("sample_anchors: n must be >= 1");
  std::vector<DesignPoint> out;
  out.reserve(n);
  std::size_t attempts = 0;
  while (out.size() < n) {
    ++attempts;
    const DesignPoint u = spec.oracle().sample(rng);
    if (spec.frame_domain().contains(u)) out.push_back(spec.from_frame(u));
    if (attempts >= 1000 && out.size() * 100 < attempts) {
      throw AnchorSamplingError("sample_anchors: acceptance rate below 1%; the oracle is badly placed for this domain");
    }
  }
  return out;
}

DuelRecord SimulatedHuman::answer_duel(const DesignPoint& x, const DesignPoint& x_prime) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const double yx = spec_->f(x) + std::sqrt(true_noise_variance(*spec_, x)) * normal(rng_);
  const double yp = spec_->f(x_prime) + std::sqrt(true_noise_variance(*spec_, x_prime)) * normal(rng_);
  if (yx >= yp) return DuelRecord{x, x_prime};
  return DuelRecord{x_prime, x};
}

}  // namespace hetpbo
