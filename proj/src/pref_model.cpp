#include "hetpbo/pref_model.hpp"

#include "hetpbo/point_table.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <functional>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

namespace hetpbo {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Golden {
  double x;
  double fx;
};

// Golden-section search on [a, b]; returns the best evaluated point.
Golden golden_minimize(const std::function<double(double)>& f, double a, double b, int iterations) {
  const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - ratio * (b - a);
  double d = a + ratio * (b - a);
  double fc = f(c);
  double fd = f(d);
  for (int it = 0; it < iterations; ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - ratio * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + ratio * (b - a);
      fd = f(d);
    }
  }
  return fc < fd ? Golden{c, fc} : Golden{d, fd};
}

std::vector<double> log_grid(double lo, double hi, int n) {
  std::vector<double> out(static_cast<std::size_t>(std::max(n, 1)));
  const double a = std::log(lo), b = std::log(hi);
  for (int i = 0; i < static_cast<int>(out.size()); ++i) {
    const double t = out.size() == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(out.size() - 1);
    out[static_cast<std::size_t>(i)] = std::exp(a + t * (b - a));
  }
  return out;
}

// Psi(alpha) = 1/2 alpha^T K alpha - sum log Phi(u_k / s_k), u = K alpha.
double psi(const Vector& alpha, const Vector& u, const Vector& pair_sd) {
  double value = 0.5 * alpha.dot(u);
  for (Eigen::Index k = 0; k < u.size(); ++k) value -= log_std_normal_cdf(u[k] / pair_sd[k]);
  return value;
}

}  // namespace

void DuelDataset::add(DuelRecord record) {
  if (dim_ == 0) dim_ = static_cast<std::size_t>(record.winner.size());
  if (record.winner.size() != static_cast<Eigen::Index>(dim_) || record.loser.size() != static_cast<Eigen::Index>(dim_)) {
    throw std::invalid_argument("DuelDataset::add: dimension mismatch");
  }
  if (!record.winner.allFinite() || !record.loser.allFinite()) {
    throw std::invalid_argument("DuelDataset::add: non-finite coordinates");
  }
  if (record.winner == record.loser) {
    throw std::invalid_argument("DuelDataset::add: winner and loser are the same design");
  }
  records_.push_back(std::move(record));
}

Matrix DuelDataset::stacked() const {
  const auto m = static_cast<Eigen::Index>(records_.size());
  Matrix out(2 * m, static_cast<Eigen::Index>(dim_));
  for (Eigen::Index k = 0; k < m; ++k) {
    out.row(k) = records_[static_cast<std::size_t>(k)].winner.transpose();
    out.row(m + k) = records_[static_cast<std::size_t>(k)].loser.transpose();
  }
  return out;
}

void DuelDataset::write(std::ostream& out) const {
  Matrix rows(static_cast<Eigen::Index>(records_.size()), static_cast<Eigen::Index>(2 * dim_));
  for (std::size_t k = 0; k < records_.size(); ++k) {
    rows.row(static_cast<Eigen::Index>(k)) << records_[k].winner.transpose(), records_[k].loser.transpose();
  }
  write_table(out, rows, "winner coordinates then loser coordinates");
}

DuelDataset DuelDataset::read(std::istream& in, std::size_t dim) {
  const Matrix rows = read_table(in, 2 * dim);
  DuelDataset data(dim);
  const auto d = static_cast<Eigen::Index>(dim);
  for (Eigen::Index k = 0; k < rows.rows(); ++k) {
    data.add(rows.row(k).head(d).transpose(), rows.row(k).tail(d).transpose());
  }
  return data;
}

Vector endpoint_variances(const DuelDataset& data, const NoiseModel& noise) {
  const std::size_t m = data.size();
  Vector out(static_cast<Eigen::Index>(2 * m));
  for (std::size_t k = 0; k < m; ++k) {
    out[static_cast<Eigen::Index>(k)] = noise.variance(data[k].winner);
    out[static_cast<Eigen::Index>(m + k)] = noise.variance(data[k].loser);
  }
  return out;
}

PreferenceProblem::PreferenceProblem(const DuelDataset& data, const RbfKernelParams& kernel, const NoiseModel& noise)
    : PreferenceProblem(data, kernel, hetpbo::endpoint_variances(data, noise)) {}

PreferenceProblem::PreferenceProblem(const DuelDataset& data, const RbfKernelParams& kernel, Vector endpoint_var)
    : m_(data.size()), points_(data.stacked()), kernel_(kernel), endpoint_var_(std::move(endpoint_var)) {
  kernel_.validate();
  if (endpoint_var_.size() != static_cast<Eigen::Index>(2 * m_)) {
    throw std::invalid_argument("PreferenceProblem: need one noise variance per endpoint");
  }
  if (!((endpoint_var_.array() > 0.0).all()) || !endpoint_var_.allFinite()) {
    throw std::invalid_argument("PreferenceProblem: noise variances must be positive and finite");
  }
  build();
}

void PreferenceProblem::build() {
  const auto m = static_cast<Eigen::Index>(m_);
  pair_var_ = endpoint_var_.head(m) + endpoint_var_.tail(m);
  gram_ = hetpbo::gram(points_, kernel_);
  diff_cov_.resize(m, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    for (Eigen::Index i = j; i < m; ++i) {
      diff_cov_(i, j) = gram_(i, j) - gram_(i, m + j) - gram_(m + i, j) + gram_(m + i, m + j);
      diff_cov_(j, i) = diff_cov_(i, j);
    }
  }
}

Vector PreferenceProblem::differences(const Vector& f) const {
  const auto m = static_cast<Eigen::Index>(m_);
  if (f.size() != 2 * m) throw std::invalid_argument("PreferenceProblem: latent vector must have 2m entries");
  return f.head(m) - f.tail(m);
}

Vector PreferenceProblem::z(const Vector& f) const {
  return differences(f).cwiseQuotient(pair_var_.cwiseSqrt());
}

double duel_z(const PreferenceProblem& problem, std::size_t k, const Vector& f) {
  if (k >= problem.duels()) throw std::out_of_range("duel_z: duel index out of range");
  const auto m = static_cast<Eigen::Index>(problem.duels());
  const auto i = static_cast<Eigen::Index>(k);
  if (f.size() != 2 * m) throw std::invalid_argument("duel_z: latent vector must have 2m entries");
  return (f[i] - f[m + i]) / std::sqrt(problem.pair_variances()[i]);
}

double neg_log_posterior(const PreferenceProblem& problem, const Vector& f) {
  const Vector z = problem.z(f);
  double value = 0.0;
  for (Eigen::Index k = 0; k < z.size(); ++k) value -= log_std_normal_cdf(z[k]);
  if (f.size() > 0) {
    const PsdMatrix prior(problem.gram());
    value += 0.5 * f.dot(prior.solve(f));
  }
  return value;
}

Vector likelihood_curvature(const Vector& differences, const Vector& pair_variances) {
  Vector w(differences.size());
  for (Eigen::Index k = 0; k < w.size(); ++k) {
    const double s = std::sqrt(pair_variances[k]);
    const double z = differences[k] / s;
    const double r = inverse_mills_ratio(z);
    w[k] = std::max(r * r + z * r, 0.0) / pair_variances[k];
  }
  return w;
}

GradientHessian grad_and_hessian(const PreferenceProblem& problem, const Vector& f) {
  const auto m = static_cast<Eigen::Index>(problem.duels());
  const Vector u = problem.differences(f);
  const Vector& s2 = problem.pair_variances();
  const Vector w = likelihood_curvature(u, s2);

  GradientHessian out;
  out.gradient = Vector::Zero(2 * m);
  out.lambda = Matrix::Zero(2 * m, 2 * m);
  for (Eigen::Index k = 0; k < m; ++k) {
    const double s = std::sqrt(s2[k]);
    const double r = inverse_mills_ratio(u[k] / s);
    out.gradient[k] = -r / s;
    out.gradient[m + k] = r / s;
    out.lambda(k, k) = w[k];
    out.lambda(m + k, m + k) = w[k];
    out.lambda(k, m + k) = -w[k];
    out.lambda(m + k, k) = -w[k];
  }
  out.hessian = out.lambda;
  if (m > 0) {
    const PsdMatrix prior(problem.gram());
    out.gradient += prior.solve(f);
    out.hessian += prior.solve(Matrix(Matrix::Identity(2 * m, 2 * m)));
    out.hessian = (0.5 * (out.hessian + out.hessian.transpose())).eval();
  }
  return out;
}

LaplaceFit fit_map(const PreferenceProblem& problem, const NewtonOptions& options) {
  const auto m = static_cast<Eigen::Index>(problem.duels());
  LaplaceFit fit;
  fit.f_map = Vector::Zero(2 * m);
  fit.lambda_map = Matrix::Zero(2 * m, 2 * m);
  fit.differences = Vector::Zero(m);
  fit.alpha = Vector::Zero(m);
  fit.w = Vector::Zero(m);
  if (m == 0) {
    fit.converged = true;
    return fit;
  }

  const Matrix& k_diff = problem.difference_covariance();
  const Vector pair_sd = problem.pair_variances().cwiseSqrt();
  const Vector& s2 = problem.pair_variances();
  // f = L D^T alpha; column j of L D^T is L(:, j) - L(:, m + j).
  const Matrix gram_d = problem.gram().leftCols(m) - problem.gram().rightCols(m);

  Vector alpha = Vector::Zero(m);
  Vector u = Vector::Zero(m);
  double value = psi(alpha, u, pair_sd);

  const auto lik_gradient = [&](const Vector& diff) {
    Vector g(m);
    for (Eigen::Index k = 0; k < m; ++k) g[k] = inverse_mills_ratio(diff[k] / pair_sd[k]) / pair_sd[k];
    return g;
  };

  int it = 0;
  for (;; ++it) {
    const Vector g = lik_gradient(u);
    const Vector f = gram_d * alpha;
    fit.gradient_norm = std::sqrt(2.0) * (alpha - g).norm();
    if (fit.gradient_norm <= options.tolerance * (1.0 + f.norm())) {
      fit.converged = true;
      break;
    }
    if (it >= options.max_iterations) break;

    const Vector w = likelihood_curvature(u, s2);
    const Vector sw = w.cwiseSqrt();
    const Vector b = w.cwiseProduct(u) + g;
    Matrix bmat = sw.asDiagonal() * k_diff * sw.asDiagonal();
    bmat.diagonal().array() += 1.0;
    const PsdMatrix bfac(bmat);
    const Vector target = b - sw.cwiseProduct(bfac.solve(Vector(sw.cwiseProduct(k_diff * b))));
    const Vector step = target - alpha;

    double t = 1.0;
    int halvings = 0;
    for (;;) {
      const Vector a_try = alpha + t * step;
      const Vector u_try = k_diff * a_try;
      const double v_try = psi(a_try, u_try, pair_sd);
      if (std::isfinite(v_try) && v_try <= value + 1e-12 * (1.0 + std::abs(value))) {
        alpha = a_try;
        u = u_try;
        value = std::min(value, v_try);
        break;
      }
      if (++halvings > options.max_halvings) {
        std::ostringstream msg;
        msg << "fit_map: line search failed after " << options.max_halvings << " halvings at iteration " << it
            << " (S = " << value << ", gradient norm = " << fit.gradient_norm << ")";
        throw LineSearchError(msg.str());
      }
      t *= 0.5;
    }
  }

  fit.iterations = it;
  fit.alpha = alpha;
  fit.differences = u;
  fit.objective = psi(alpha, u, pair_sd);
  fit.w = likelihood_curvature(u, s2);
  fit.f_map = gram_d * alpha;
  for (Eigen::Index k = 0; k < m; ++k) {
    fit.lambda_map(k, k) = fit.w[k];
    fit.lambda_map(m + k, m + k) = fit.w[k];
    fit.lambda_map(k, m + k) = -fit.w[k];
    fit.lambda_map(m + k, k) = -fit.w[k];
  }
  return fit;
}

double log_evidence(const PreferenceProblem& problem, const LaplaceFit& fit) {
  const auto m = static_cast<Eigen::Index>(problem.duels());
  if (m == 0) return 0.0;
  if (fit.w.size() != m) throw std::invalid_argument("log_evidence: fit does not match the problem");
  const Vector sw = fit.w.cwiseSqrt();
  Matrix bmat = sw.asDiagonal() * problem.difference_covariance() * sw.asDiagonal();
  bmat.diagonal().array() += 1.0;
  try {
    const PsdMatrix bfac(bmat);
    return -fit.objective - 0.5 * bfac.log_det();
  } catch (const NotPsdError& e) {
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(bmat);
    std::ostringstream msg;
    msg << "log_evidence: I + L Lambda is indefinite; smallest eigenvalue " << eig.eigenvalues().minCoeff();
    throw NumericalError(msg.str());
  }
}

LengthscaleSearch default_lengthscale_search(const BoxDomain& domain) {
  LengthscaleSearch s;
  s.lower = 0.01 * domain.diameter();
  s.upper = domain.diameter();
  return s;
}

namespace {

double neg_evidence_at(const DuelDataset& data, const Vector& endpoint_var, double lengthscale,
                       double signal_variance) {
  try {
    const PreferenceProblem problem(data, RbfKernelParams{lengthscale, signal_variance}, endpoint_var);
    const LaplaceFit fit = fit_map(problem);
    const double v = -log_evidence(problem, fit);
    return std::isfinite(v) ? v : kInf;
  } catch (const NumericalError&) {
    return kInf;
  }
}

}  // namespace

SurrogateHyperparams fit_lengthscale(const DuelDataset& data, const NoiseModel& noise,
                                     const LengthscaleSearch& search, double signal_variance) {
  if (data.size() < 2) throw std::invalid_argument("fit_lengthscale: need at least two duels");
  if (!(search.lower > 0.0) || !(search.upper >= search.lower)) {
    throw std::invalid_argument("fit_lengthscale: invalid lengthscale bounds");
  }
  const Vector var = endpoint_variances(data, noise);
  const auto objective = [&](double log_l) { return neg_evidence_at(data, var, std::exp(log_l), signal_variance); };

  const std::vector<double> grid =
      log_grid(search.lower, search.upper, search.lower == search.upper ? 1 : search.grid_points);
  std::size_t best = grid.size();
  double best_value = kInf;
  std::vector<double> values(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    values[i] = objective(std::log(grid[i]));
    if (values[i] < best_value) {
      best_value = values[i];
      best = i;
    }
  }
  if (best == grid.size()) throw NumericalError("fit_lengthscale: evidence failed at every probed lengthscale");

  SurrogateHyperparams out;
  out.lengthscale = grid[best];
  out.neg_log_evidence = best_value;
  if (grid.size() >= 3 && search.refine_iterations > 0) {
    const double a = std::log(grid[best == 0 ? 0 : best - 1]);
    const double b = std::log(grid[std::min(best + 1, grid.size() - 1)]);
    const Golden g = golden_minimize(objective, a, b, search.refine_iterations);
    if (g.fx < out.neg_log_evidence) {
      out.lengthscale = std::exp(g.x);
      out.neg_log_evidence = g.fx;
    }
  }
  if (const auto* anchors = dynamic_cast<const AnchorModel*>(&noise)) out.scale = anchors->scale();
  return out;
}

SurrogateHyperparams fit_lengthscale_and_bandwidth(const DuelDataset& data, const AnchorModel& anchors,
                                                   const LengthscaleSearch& lsearch, const BandwidthSearch& bsearch,
                                                   double signal_variance) {
  if (data.size() < 2) throw std::invalid_argument("fit_lengthscale_and_bandwidth: need at least two duels");
  const auto objective = [&](double log_l, double log_h) {
    const AnchorModel model = anchors.with_bandwidth(std::exp(log_h));
    const Vector var = endpoint_variances(data, model);
    // Small bandwidths in higher dimensions underflow the variance to zero.
    if (!(var.array() > 0.0).all() || !var.allFinite()) return kInf;
    return neg_evidence_at(data, var, std::exp(log_l), signal_variance);
  };
  const int grid_n = 8;
  const std::vector<double> lgrid = log_grid(lsearch.lower, lsearch.upper, grid_n);
  const std::vector<double> hgrid = log_grid(bsearch.lower, bsearch.upper, grid_n);
  double best_value = kInf;
  std::size_t bi = 0, bj = 0;
  for (std::size_t i = 0; i < lgrid.size(); ++i) {
    for (std::size_t j = 0; j < hgrid.size(); ++j) {
      const double v = objective(std::log(lgrid[i]), std::log(hgrid[j]));
      if (v < best_value) {
        best_value = v;
        bi = i;
        bj = j;
      }
    }
  }
  if (!std::isfinite(best_value)) {
    throw NumericalError("fit_lengthscale_and_bandwidth: evidence failed at every probed point");
  }
  double log_l = std::log(lgrid[bi]);
  double log_h = std::log(hgrid[bj]);
  const double lstep = (std::log(lsearch.upper) - std::log(lsearch.lower)) / (grid_n - 1);
  const double hstep = (std::log(bsearch.upper) - std::log(bsearch.lower)) / (grid_n - 1);
  const int iters = std::max(lsearch.refine_iterations / 2, 1);
  for (int round = 0; round < 2; ++round) {
    const Golden gl =
        golden_minimize([&](double x) { return objective(x, log_h); }, log_l - lstep, log_l + lstep, iters);
    if (gl.fx < best_value) {
      best_value = gl.fx;
      log_l = gl.x;
    }
    const Golden gh =
        golden_minimize([&](double x) { return objective(log_l, x); }, log_h - hstep, log_h + hstep, iters);
    if (gh.fx < best_value) {
      best_value = gh.fx;
      log_h = gh.x;
    }
  }
  SurrogateHyperparams out;
  out.lengthscale = std::exp(log_l);
  out.bandwidth = std::exp(log_h);
  out.scale = anchors.scale();
  out.neg_log_evidence = best_value;
  return out;
}

SurrogateHyperparams fit_hyperparams(const DuelDataset& data, const AnchorModel& anchors,
                                     const LengthscaleSearch& lsearch, BandwidthMode mode,
                                     const BandwidthSearch& bsearch, double signal_variance) {
  if (mode == BandwidthMode::evidence) {
    return fit_lengthscale_and_bandwidth(data, anchors, lsearch, bsearch, signal_variance);
  }
  return fit_lengthscale(data, anchors, lsearch, signal_variance);
}

}  // namespace hetpbo
