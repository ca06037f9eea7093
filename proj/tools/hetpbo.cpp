// Command-line entry point: simulated suites, the KDE rate check, re-aggregation
// of finished suites, anchor sampling and the live session server.

#include "hetpbo/benchmarks.hpp"
#include "hetpbo/config.hpp"
#include "hetpbo/harness.hpp"
#include "hetpbo/kde_noise.hpp"
#include "hetpbo/point_table.hpp"
#include "hetpbo/service.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iomanip>
#include <iostream>

namespace {

hetpbo::HttpService* g_service = nullptr;

void on_signal(int) {
  if (g_service) g_service->stop();
}

int cmd_run(const std::string& config_path, const std::string& seeds, const std::string& out, bool quiet) {
  hetpbo::Config config = hetpbo::Config::load(config_path);
  if (!seeds.empty()) config.set("seeds", seeds);
  if (!out.empty()) config.set("output.dir", out);
  const hetpbo::ExperimentConfig cfg = hetpbo::experiment_from_config(config);
  const auto progress = [&](hetpbo::AcqKind kind, unsigned long long seed, const hetpbo::ExperimentTrace& trace) {
    if (quiet) return;
    std::cerr << hetpbo::to_string(kind) << " seed " << seed << ": " << trace.rows.size() << " iterations";
    if (trace.aborted) std::cerr << " (aborted: " << trace.error << ")";
    std::cerr << '\n';
  };
  try {
    const hetpbo::SuiteResult r = hetpbo::run_suite(cfg, true, progress);
    std::cout << "wrote " << (cfg.output_dir / "summary.json").string() << " (" << r.aborted << " aborted)\n";
  } catch (const hetpbo::SuiteError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

int cmd_rate_check(const std::vector<std::size_t>& n_grid, std::size_t trials, double alpha, double beta,
                   std::size_t probes, std::uint64_t seed, const std::string& out) {
  const hetpbo::TrueUncertaintyOracle oracle(hetpbo::OracleFamily::gaussian, hetpbo::Vector::Zero(1),
                                             hetpbo::Vector::Ones(1), 1.0);
  hetpbo::RateCheckConfig cfg;
  cfg.n_grid = n_grid;
  cfg.trials = trials;
  cfg.alpha = alpha;
  cfg.beta = beta;
  cfg.seed = seed;
  cfg.probes = hetpbo::Vector::LinSpaced(static_cast<Eigen::Index>(probes), -2.0, 2.0);
  const hetpbo::RateCheckResult r = hetpbo::rate_check(oracle, cfg);
  std::ofstream file;
  if (!out.empty()) {
    file.open(out);
    if (!file) throw std::runtime_error("cannot write " + out);
  }
  std::ostream& os = out.empty() ? std::cout : file;
  os << std::setprecision(17) << "n,mse\n";
  for (std::size_t i = 0; i < r.n.size(); ++i) os << r.n[i] << ',' << r.mse[i] << '\n';
  std::cout << std::setprecision(6) << "log-MSE slope " << r.slope << '\n';
  return 0;
}

int cmd_anchors(const std::string& benchmark, std::size_t n, unsigned long long seed, const std::string& out) {
  const hetpbo::BenchmarkSpec spec = hetpbo::BenchmarkSpec::make_default(hetpbo::parse_benchmark_tag(benchmark));
  hetpbo::Rng rng = hetpbo::substream(seed, 0);
  const hetpbo::Matrix rows = hetpbo::stack_rows(hetpbo::sample_anchors(spec, n, rng));
  if (out.empty()) {
    hetpbo::write_table(std::cout, rows, benchmark + " anchors");
  } else {
    hetpbo::write_table(std::filesystem::path(out), rows, benchmark + " anchors");
  }
  return 0;
}

int cmd_serve(const std::string& host, int port, const std::string& data) {
  hetpbo::SessionStore store(data);
  hetpbo::HttpService service(store);
  const int bound = service.bind(host, port);
  if (bound < 0) {
    std::cerr << "error: cannot bind " << host << ':' << port << '\n';
    return 1;
  }
  g_service = &service;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cout << "listening on http://" << host << ':' << bound << " (sessions in " << data << ")" << std::endl;
  service.serve();
  g_service = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heteroscedastic preferential Bayesian optimization"};
  app.require_subcommand(1);

  std::string config_path, seeds, out;
  bool quiet = false;
  auto* run = app.add_subcommand("run", "Run every acquisition and seed of an experiment config");
  run->add_option("--config", config_path, "Experiment config file")->required()->check(CLI::ExistingFile);
  run->add_option("--seeds", seeds, "Override seeds, e.g. 1,2,3 or 1-30");
  run->add_option("--out", out, "Override the output directory");
  run->add_flag("--quiet", quiet, "No per-trial progress");

  std::vector<std::size_t> n_grid{50, 100, 200, 400, 800, 1600};
  std::size_t trials = 50, probes = 41;
  double alpha = 1.0, beta = 2.0;
  std::uint64_t rate_seed = 0;
  std::string rate_out;
  auto* rate = app.add_subcommand("rate-check", "Variance-estimator MSE against anchor count (d = 1 Gaussian oracle)");
  rate->add_option("--n", n_grid, "Anchor counts")->delimiter(',');
  rate->add_option("--trials", trials, "Trials per anchor count");
  rate->add_option("--alpha", alpha, "Bandwidth constant in h = alpha n^(-1/(2 beta + d))");
  rate->add_option("--beta", beta, "Smoothness in the bandwidth schedule");
  rate->add_option("--probes", probes, "Probe points on [-2, 2]");
  rate->add_option("--seed", rate_seed, "Seed");
  rate->add_option("--out", rate_out, "CSV output (stdout when omitted)");

  std::string agg_dir;
  auto* agg = app.add_subcommand("aggregate", "Rebuild aggregate.csv and summary.json from per-seed traces");
  agg->add_option("dir", agg_dir, "Suite output directory")->required()->check(CLI::ExistingDirectory);

  std::string benchmark = "sine1d", anchors_out;
  std::size_t n_anchors = 30;
  unsigned long long anchor_seed = 0;
  auto* anchors = app.add_subcommand("anchors", "Sample anchors from a benchmark oracle");
  anchors->add_option("--benchmark", benchmark, "sine1d, branin2d or hartmann4d");
  anchors->add_option("--n", n_anchors, "Number of anchors");
  anchors->add_option("--seed", anchor_seed, "Seed");
  anchors->add_option("--out", anchors_out, "Output file (stdout when omitted)");

  std::string host = "127.0.0.1", data = "sessions";
  int port = 8080;
  auto* serve = app.add_subcommand("serve", "Serve live preference sessions over HTTP");
  serve->add_option("--host", host, "Listen address");
  serve->add_option("--port", port, "Listen port (0 picks a free one)");
  serve->add_option("--data", data, "Directory of session event logs");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(config_path, seeds, out, quiet);
    if (*rate) return cmd_rate_check(n_grid, trials, alpha, beta, probes, rate_seed, rate_out);
    if (*agg) {
      const hetpbo::SuiteResult r = hetpbo::aggregate_directory(agg_dir);
      std::cout << "aggregated " << r.kinds.size() << " acquisitions over " << r.seeds.size() << " seeds\n";
      return 0;
    }
    if (*anchors) return cmd_anchors(benchmark, n_anchors, anchor_seed, anchors_out);
    if (*serve) return cmd_serve(host, port, data);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
