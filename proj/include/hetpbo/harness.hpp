#pragma once

// Simulated preference loop: anchors and initial duels from the benchmark,
// then T engine steps answered by the simulated human. Traces, multi-seed
// suites and their aggregates.

#include "hetpbo/benchmarks.hpp"
#include "hetpbo/config.hpp"
#include "hetpbo/engine.hpp"

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace hetpbo {

struct ExperimentConfig {
  std::string name = "experiment";
  BenchmarkTag benchmark = BenchmarkTag::sine1d;
  ModelFrame frame = ModelFrame::native;
  OracleSettings oracle;
  /// The noise scale a.
  double noise_scale = 0.1;
  std::vector<AcqKind> acquisitions{AcqKind::ei};
  EngineSettings engine;
  std::size_t n_anchors = 30;
  std::size_t n_initial_duels = 5;
  std::size_t iterations = 30;
  /// Risk weights; written as numbers or "auto" (3 |f(x_max)|) in config files.
  std::vector<double> rhos;
  std::vector<unsigned long long> seeds{0};
  std::filesystem::path output_dir = "results";
  bool wall_time = false;
  /// 0 means one per hardware thread.
  std::size_t workers = 0;

  BenchmarkSpec spec() const;
  void validate() const;
  /// Documented defaults for a benchmark (oracle placement, a, frame, rho).
  static ExperimentConfig for_benchmark(BenchmarkTag tag);
};

/// Reads every key below; unknown keys are an error.
///
///   name, seeds, iterations, n_anchors, n_initial_duels, rho
///   benchmark.name, benchmark.frame, benchmark.noise_scale
///   oracle.family, oracle.center, oracle.scale, oracle.dof
///   acquisition.kinds, acquisition.gamma, acquisition.eta, acquisition.pool_size,
///   acquisition.refine_top, acquisition.refine_steps
///   inference.backend, inference.predictive, inference.signal_variance,
///   gibbs.burn_in, gibbs.thinning
///   hyper.bandwidth_mode, hyper.lengthscale_lower, hyper.lengthscale_upper,
///   hyper.bandwidth_lower, hyper.bandwidth_upper, hyper.fallback_bandwidth
///   output.dir, output.wall_time, output.workers
ExperimentConfig experiment_from_config(const Config& config);

/// Effective settings as flat key/value pairs, fed back through
/// experiment_from_config they reproduce the same experiment.
std::map<std::string, std::string> describe(const ExperimentConfig& cfg);

/// f(x) - rho * true noise variance at x.
double mv_objective(const DesignPoint& x, const BenchmarkSpec& spec, double rho);

/// One trace row per answered duel. Missing values (no oracle in live
/// sessions, wall time when disabled) are NaN and written as NA.
struct TraceRow {
  std::size_t iteration = 0;
  DesignPoint challenger;
  DesignPoint reference;
  bool challenger_won = false;
  double f = 0.0;
  double sigma2_true = 0.0;
  double sigma2_hat = 0.0;
  std::vector<double> mv;
  double simple_regret = 0.0;
  double cum_regret = 0.0;
  double best_f = 0.0;
  std::vector<double> simple_regret_rho;
  std::vector<double> cum_regret_rho;
  double lengthscale = 0.0;
  double bandwidth = 0.0;
  double wall_ms = 0.0;
};

struct ExperimentTrace {
  std::size_t dim = 0;
  std::vector<double> rhos;
  std::vector<TraceRow> rows;
  bool aborted = false;
  std::string error;
  /// Anchors in native units.
  std::vector<DesignPoint> anchors;
};

std::string rho_label(double rho);
std::vector<std::string> trace_header(std::size_t dim, const std::vector<double>& rhos);
/// CSV with trace_header() columns; an aborted trace ends with a "# aborted: ..." line.
void write_trace(std::ostream& out, const ExperimentTrace& trace);

/// A trace CSV read back as named numeric columns (NA becomes NaN).
struct TraceTable {
  std::vector<std::string> header;
  Matrix values;
  bool aborted = false;

  /// Index of a column; throws when absent.
  std::size_t column(const std::string& name) const;
  bool has_column(const std::string& name) const;
  Vector column_values(const std::string& name) const;
};

TraceTable read_trace(std::istream& in);
TraceTable read_trace(const std::filesystem::path& path);
TraceTable to_table(const ExperimentTrace& trace);

/// Deterministic in (cfg, kind, seed). Anchors, initial duels and the answers
/// to the initial duels depend only on the seed, so every acquisition starts
/// from the same data.
ExperimentTrace run_trial(const ExperimentConfig& cfg, AcqKind kind, unsigned long long seed);

/// Engine and human streams for trial `seed`.
Rng substream(unsigned long long seed, unsigned stream);

class SuiteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AggregateRow {
  std::size_t iteration = 0;
  std::size_t count = 0;
  std::vector<double> mean;
  std::vector<double> sd;
};

/// Per-iteration mean and sample standard deviation over seeds of every
/// metric column; NaN entries are skipped.
struct Aggregate {
  std::vector<std::string> metrics;
  std::vector<AggregateRow> rows;
};

Aggregate aggregate_tables(const std::vector<TraceTable>& tables);
std::vector<std::string> aggregate_metrics(const TraceTable& table);

/// Per-seed scalar summaries used by the comparisons.
struct TrialSummary {
  unsigned long long seed = 0;
  bool aborted = false;
  double mean_sigma2_true = 0.0;
  double final_best_f = 0.0;
  double final_simple_regret = 0.0;
  double final_cum_regret = 0.0;
  std::vector<double> final_cum_regret_rho;
  std::vector<double> final_simple_regret_rho;
};

TrialSummary summarize_table(const TraceTable& table, unsigned long long seed, const std::vector<double>& rhos);

/// One-sided paired sign test: P(Binomial(n, 1/2) >= wins), ties dropped.
struct SignTest {
  std::size_t wins = 0;
  std::size_t losses = 0;
  std::size_t ties = 0;
  double p_value = 1.0;
};

SignTest sign_test_lower(const std::vector<double>& a, const std::vector<double>& b);

struct SuiteResult {
  std::vector<AcqKind> kinds;
  std::vector<unsigned long long> seeds;
  std::vector<double> rhos;
  /// traces[kind index][seed index]
  std::vector<std::vector<TraceTable>> tables;
  std::vector<std::vector<TrialSummary>> summaries;
  std::vector<Aggregate> aggregates;
  std::size_t aborted = 0;
};

using ProgressCallback = std::function<void(AcqKind, unsigned long long seed, const ExperimentTrace&)>;

/// Runs every (acquisition, seed) pair on a worker pool and, unless
/// `write_outputs` is false, writes
///   <dir>/<af>/seed_<s>.csv, <dir>/<af>/seed_<s>_anchors.csv,
///   <dir>/aggregate.csv, <dir>/summary.json.
/// Throws SuiteError when more than 20% of the trials abort (after writing).
SuiteResult run_suite(const ExperimentConfig& cfg, bool write_outputs = true, const ProgressCallback& progress = {});

/// Rebuilds aggregate.csv and summary.json from the per-seed traces under `dir`.
SuiteResult aggregate_directory(const std::filesystem::path& dir);

void write_aggregate(std::ostream& out, const std::vector<AcqKind>& kinds, const std::vector<Aggregate>& aggregates);
std::string summary_json(const SuiteResult& result, const std::map<std::string, std::string>& settings);

}  // namespace hetpbo
