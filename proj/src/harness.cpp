#include "hetpbo/harness.hpp"

#include "hetpbo/point_table.hpp"

#include <json.hpp>

#include <boost/math/distributions/binomial.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace hetpbo {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt(double v) {
  if (std::isnan(v)) return "NA";
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return os.str();
}

std::string fmt_list(const Vector& v) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += fmt(v[i]);
  }
  return out;
}

Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

bool starts_with(const std::string& s, const std::string& prefix) { return s.rfind(prefix, 0) == 0; }

double auto_rho(const BenchmarkSpec& spec) { return 3.0 * std::abs(spec.f_max()); }

}  // namespace

// ---------------------------------------------------------------- config

BenchmarkSpec ExperimentConfig::spec() const { return BenchmarkSpec(benchmark, frame, oracle, noise_scale); }

void ExperimentConfig::validate() const {
  if (iterations < 1) throw ConfigError("iterations must be >= 1");
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
  if (acquisitions.empty()) throw ConfigError("acquisition.kinds must not be empty");
  if (n_anchors < 1) throw ConfigError("n_anchors must be >= 1");
  if (n_initial_duels < 1) throw ConfigError("n_initial_duels must be >= 1");
  if (!(noise_scale > 0.0) || !std::isfinite(noise_scale)) throw ConfigError("benchmark.noise_scale must be > 0");
  for (double r : rhos) {
    if (!std::isfinite(r)) throw ConfigError("rho values must be finite");
  }
  if (!(engine.signal_variance > 0.0) || !std::isfinite(engine.signal_variance)) {
    throw ConfigError("inference.signal_variance must be > 0");
  }
  if (engine.gibbs.thinning < 1) throw ConfigError("gibbs.thinning must be >= 1");
  engine.acq.validate();
  (void)spec();
}

ExperimentConfig ExperimentConfig::for_benchmark(BenchmarkTag tag) {
  ExperimentConfig c;
  c.name = to_string(tag);
  c.benchmark = tag;
  c.frame = default_frame(tag);
  c.oracle = default_oracle(tag, c.frame);
  c.noise_scale = default_noise_scale(tag);
  c.rhos = {auto_rho(BenchmarkSpec::make_default(tag))};
  c.iterations = tag == BenchmarkTag::sine1d ? 30 : 40;
  return c;
}

ExperimentConfig experiment_from_config(const Config& config) {
  const BenchmarkTag tag = parse_benchmark_tag(config.get_string("benchmark.name", "sine1d"));
  ExperimentConfig c = ExperimentConfig::for_benchmark(tag);
  c.name = config.get_string("name", c.name);
  c.frame = parse_model_frame(config.get_string("benchmark.frame", to_string(c.frame)));
  c.noise_scale = config.get_double("benchmark.noise_scale", c.noise_scale);

  // Oracle placement is given in native units and mapped into the frame.
  const BoxDomain domain = benchmark_domain(tag);
  const OracleSettings native = default_oracle(tag, ModelFrame::native);
  const std::string family = config.get_string("oracle.family", "gaussian");
  if (family == "gaussian") {
    c.oracle.family = OracleFamily::gaussian;
  } else if (family == "student_t") {
    c.oracle.family = OracleFamily::student_t;
  } else {
    throw ConfigError("oracle.family: expected gaussian or student_t, got '" + family + "'");
  }
  std::vector<double> center(native.center.data(), native.center.data() + native.center.size());
  std::vector<double> scale(native.scale.data(), native.scale.data() + native.scale.size());
  center = config.get_doubles("oracle.center", center);
  scale = config.get_doubles("oracle.scale", scale);
  if (center.size() != domain.dim() || scale.size() != domain.dim()) {
    throw ConfigError("oracle.center and oracle.scale need " + std::to_string(domain.dim()) + " values");
  }
  c.oracle.center = to_vector(center);
  c.oracle.scale = to_vector(scale);
  if (c.frame == ModelFrame::unit) {
    c.oracle.center = domain.to_unit(c.oracle.center);
    c.oracle.scale = c.oracle.scale.cwiseQuotient(domain.range());
  }
  c.oracle.dof = config.get_double("oracle.dof", 5.0);

  c.acquisitions.clear();
  for (const std::string& k : config.get_list("acquisition.kinds", {"ei"})) c.acquisitions.push_back(parse_acq_kind(k));
  AcqConfig& acq = c.engine.acq;
  acq.gamma = config.get_double("acquisition.gamma", acq.gamma);
  acq.eta = config.get_double("acquisition.eta", acq.eta);
  const auto nonneg = [&](const std::string& key, std::size_t fallback) {
    const long long v = config.get_int(key, static_cast<long long>(fallback));
    if (v < 0) throw ConfigError(key + " must be >= 0");
    return static_cast<std::size_t>(v);
  };
  acq.pool_size = nonneg("acquisition.pool_size", acq.pool_size);
  acq.refine_top = nonneg("acquisition.refine_top", acq.refine_top);
  acq.refine_steps = nonneg("acquisition.refine_steps", acq.refine_steps);

  EngineSettings& e = c.engine;
  e.backend = parse_backend(config.get_string("inference.backend", to_string(e.backend)));
  e.predictive = parse_predictive_mode(config.get_string("inference.predictive", to_string(e.predictive)));
  e.signal_variance = config.get_double("inference.signal_variance", e.signal_variance);
  e.gibbs.burn_in = nonneg("gibbs.burn_in", e.gibbs.burn_in);
  e.gibbs.thinning = nonneg("gibbs.thinning", e.gibbs.thinning);
  e.bandwidth_mode = parse_bandwidth_mode(config.get_string("hyper.bandwidth_mode", to_string(e.bandwidth_mode)));
  const BoxDomain frame_domain = c.frame == ModelFrame::unit ? BoxDomain::unit(domain.dim()) : domain;
  if (config.has("hyper.lengthscale_lower") || config.has("hyper.lengthscale_upper")) {
    LengthscaleSearch ls = default_lengthscale_search(frame_domain);
    ls.lower = config.get_double("hyper.lengthscale_lower", ls.lower);
    ls.upper = config.get_double("hyper.lengthscale_upper", ls.upper);
    e.lengthscale_search = ls;
  }
  if (config.has("hyper.bandwidth_lower") || config.has("hyper.bandwidth_upper")) {
    BandwidthSearch bs = default_bandwidth_search(frame_domain);
    bs.lower = config.get_double("hyper.bandwidth_lower", bs.lower);
    bs.upper = config.get_double("hyper.bandwidth_upper", bs.upper);
    e.bandwidth_search = bs;
  }
  e.fallback_bandwidth = config.get_double("hyper.fallback_bandwidth", e.fallback_bandwidth);

  c.iterations = nonneg("iterations", c.iterations);
  c.n_anchors = nonneg("n_anchors", c.n_anchors);
  c.n_initial_duels = nonneg("n_initial_duels", c.n_initial_duels);
  if (const auto r = config.raw("rho")) {
    const BenchmarkSpec s = c.spec();
    c.rhos.clear();
    for (const std::string& item : split_list(*r)) {
      c.rhos.push_back(item == "auto" ? auto_rho(s) : parse_double(item, "rho"));
    }
  }
  if (const auto s = config.raw("seeds")) c.seeds = parse_seed_list(*s);
  c.output_dir = config.get_string("output.dir", c.output_dir.string());
  c.wall_time = config.get_bool("output.wall_time", c.wall_time);
  c.workers = nonneg("output.workers", c.workers);

  const auto unused = config.unused_keys();
  if (!unused.empty()) {
    std::string list;
    for (const auto& k : unused) list += (list.empty() ? "" : ", ") + k;
    throw ConfigError("unknown config keys: " + list);
  }
  c.validate();
  return c;
}

std::map<std::string, std::string> describe(const ExperimentConfig& c) {
  std::map<std::string, std::string> m;
  const BoxDomain domain = benchmark_domain(c.benchmark);
  const BenchmarkSpec spec = c.spec();
  m["name"] = c.name;
  m["benchmark.name"] = to_string(c.benchmark);
  m["benchmark.frame"] = to_string(c.frame);
  m["benchmark.noise_scale"] = fmt(c.noise_scale);
  m["oracle.family"] = c.oracle.family == OracleFamily::gaussian ? "gaussian" : "student_t";
  Vector center = c.oracle.center;
  Vector scale = c.oracle.scale;
  if (c.frame == ModelFrame::unit) {
    center = domain.from_unit(center);
    scale = scale.cwiseProduct(domain.range());
  }
  m["oracle.center"] = fmt_list(center);
  m["oracle.scale"] = fmt_list(scale);
  m["oracle.dof"] = fmt(c.oracle.dof);
  std::string kinds;
  for (AcqKind k : c.acquisitions) kinds += (kinds.empty() ? "" : ", ") + to_string(k);
  m["acquisition.kinds"] = kinds;
  m["acquisition.gamma"] = fmt(c.engine.acq.gamma);
  m["acquisition.eta"] = fmt(c.engine.acq.eta);
  m["acquisition.pool_size"] = std::to_string(c.engine.acq.pool_size);
  m["acquisition.refine_top"] = std::to_string(c.engine.acq.refine_top);
  m["acquisition.refine_steps"] = std::to_string(c.engine.acq.refine_steps);
  m["inference.backend"] = to_string(c.engine.backend);
  m["inference.predictive"] = to_string(c.engine.predictive);
  m["inference.signal_variance"] = fmt(c.engine.signal_variance);
  m["gibbs.burn_in"] = std::to_string(c.engine.gibbs.burn_in);
  m["gibbs.thinning"] = std::to_string(c.engine.gibbs.thinning);
  m["hyper.bandwidth_mode"] = to_string(c.engine.bandwidth_mode);
  const LengthscaleSearch ls = lengthscale_search_for(c.engine, spec.frame_domain());
  const BandwidthSearch bs = bandwidth_search_for(c.engine, spec.frame_domain());
  m["hyper.lengthscale_lower"] = fmt(ls.lower);
  m["hyper.lengthscale_upper"] = fmt(ls.upper);
  m["hyper.bandwidth_lower"] = fmt(bs.lower);
  m["hyper.bandwidth_upper"] = fmt(bs.upper);
  m["hyper.fallback_bandwidth"] = fmt(c.engine.fallback_bandwidth);
  m["iterations"] = std::to_string(c.iterations);
  m["n_anchors"] = std::to_string(c.n_anchors);
  m["n_initial_duels"] = std::to_string(c.n_initial_duels);
  m["rho"] = fmt_list(to_vector(c.rhos));
  std::string seeds;
  for (auto s : c.seeds) seeds += (seeds.empty() ? "" : ", ") + std::to_string(s);
  m["seeds"] = seeds;
  m["output.dir"] = c.output_dir.string();
  m["output.wall_time"] = c.wall_time ? "true" : "false";
  m["output.workers"] = std::to_string(c.workers);
  return m;
}

// ---------------------------------------------------------------- trial

double mv_objective(const DesignPoint& x, const BenchmarkSpec& spec, double rho) {
  return spec.f(x) - rho * true_noise_variance(spec, x);
}

Rng substream(unsigned long long seed, unsigned stream) {
  std::seed_seq seq{static_cast<unsigned>(seed & 0xffffffffu), static_cast<unsigned>(seed >> 32), stream, 0x9e3779b9u};
  return Rng(seq);
}

ExperimentTrace run_trial(const ExperimentConfig& cfg, AcqKind kind, unsigned long long seed) {
  const BenchmarkSpec spec = cfg.spec();
  const BoxDomain& fd = spec.frame_domain();
  const std::size_t d = spec.domain().dim();
  Rng anchor_rng = substream(seed, 0);
  Rng initial_rng = substream(seed, 1);
  Rng engine_rng = substream(seed, 3);
  SimulatedHuman human(spec, substream(seed, 2));

  ExperimentTrace trace;
  trace.dim = d;
  trace.rhos = cfg.rhos;
  trace.anchors = sample_anchors(spec, cfg.n_anchors, anchor_rng);
  Matrix anchor_rows(static_cast<Eigen::Index>(cfg.n_anchors), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < cfg.n_anchors; ++i) {
    anchor_rows.row(static_cast<Eigen::Index>(i)) = spec.to_frame(trace.anchors[i]).transpose();
  }

  EngineSettings settings = cfg.engine;
  settings.acq.kind = kind;
  const AnchorModel anchors(anchor_rows, anchor_bandwidth(anchor_rows, fd, settings), cfg.noise_scale);

  DuelDataset data(d);
  std::vector<DesignPoint> queried;
  const auto remember = [&](const DesignPoint& x) {
    if (std::none_of(queried.begin(), queried.end(), [&](const DesignPoint& y) { return y == x; })) {
      queried.push_back(x);
    }
  };
  // Asks the human about frame points a and b; true when a wins.
  const auto ask = [&](const DesignPoint& a, const DesignPoint& b) {
    const DesignPoint xa = spec.from_frame(a);
    const DuelRecord rec = human.answer_duel(xa, spec.from_frame(b));
    const bool a_won = rec.winner == xa;
    data.add(a_won ? a : b, a_won ? b : a);
    remember(a);
    remember(b);
    return a_won;
  };
  for (std::size_t i = 0; i < cfg.n_initial_duels; ++i) {
    const DesignPoint a = fd.sample(initial_rng);
    const DesignPoint b = fd.sample(initial_rng);
    ask(a, b);
  }

  std::vector<double> mv_max;
  for (double rho : cfg.rhos) mv_max.push_back(mv_objective(spec.x_max(), spec, rho));
  std::optional<DesignPoint> previous;
  double cum = 0.0;
  std::vector<double> cum_rho(cfg.rhos.size(), 0.0);
  double best_f = -std::numeric_limits<double>::infinity();

  for (std::size_t t = 1; t <= cfg.iterations; ++t) {
    try {
      const auto start = std::chrono::steady_clock::now();
      const EngineStep step = engine_step(data, anchors, fd, queried, previous, settings, engine_rng);
      const DesignPoint& c = step.proposal.challenger;
      const DesignPoint& r = step.proposal.reference;
      const bool won = ask(c, r);
      previous = won ? c : r;

      TraceRow row;
      row.iteration = t;
      row.challenger = spec.from_frame(c);
      row.reference = spec.from_frame(r);
      row.challenger_won = won;
      row.f = spec.f(row.challenger);
      row.sigma2_true = true_noise_variance(spec, row.challenger);
      row.sigma2_hat = step.surrogate.noise->variance(c);
      row.simple_regret = spec.f_max() - row.f;
      cum += row.simple_regret;
      row.cum_regret = cum;
      best_f = std::max(best_f, row.f);
      row.best_f = best_f;
      for (std::size_t i = 0; i < cfg.rhos.size(); ++i) {
        const double mv = row.f - cfg.rhos[i] * row.sigma2_true;
        row.mv.push_back(mv);
        row.simple_regret_rho.push_back(mv_max[i] - mv);
        cum_rho[i] += mv_max[i] - mv;
        row.cum_regret_rho.push_back(cum_rho[i]);
      }
      row.lengthscale = step.surrogate.hyper.lengthscale;
      row.bandwidth = step.surrogate.noise->bandwidth();
      row.wall_ms = cfg.wall_time ? std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count()
                                  : kNaN;
      trace.rows.push_back(std::move(row));
    } catch (const std::exception& e) {
      trace.aborted = true;
      trace.error = "iteration " + std::to_string(t) + ": " + e.what();
      break;
    }
  }
  return trace;
}

// ---------------------------------------------------------------- traces

std::string rho_label(double rho) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", rho);
  return buf;
}

std::vector<std::string> trace_header(std::size_t dim, const std::vector<double>& rhos) {
  std::vector<std::string> h{"iteration"};
  for (std::size_t i = 1; i <= dim; ++i) h.push_back("x_" + std::to_string(i));
  for (std::size_t i = 1; i <= dim; ++i) h.push_back("ref_" + std::to_string(i));
  for (const char* name : {"challenger_won", "f", "sigma2_true", "sigma2_hat"}) h.emplace_back(name);
  for (double r : rhos) h.push_back("mv_rho" + rho_label(r));
  for (const char* name : {"simple_regret", "cum_regret", "best_f"}) h.emplace_back(name);
  for (double r : rhos) h.push_back("simple_regret_rho" + rho_label(r));
  for (double r : rhos) h.push_back("cum_regret_rho" + rho_label(r));
  for (const char* name : {"lengthscale", "bandwidth", "wall_ms"}) h.emplace_back(name);
  return h;
}

void write_trace(std::ostream& out, const ExperimentTrace& trace) {
  const auto header = trace_header(trace.dim, trace.rhos);
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (const TraceRow& row : trace.rows) {
    std::vector<std::string> cells{std::to_string(row.iteration)};
    for (Eigen::Index i = 0; i < row.challenger.size(); ++i) cells.push_back(fmt(row.challenger[i]));
    for (Eigen::Index i = 0; i < row.reference.size(); ++i) cells.push_back(fmt(row.reference[i]));
    cells.push_back(row.challenger_won ? "1" : "0");
    cells.push_back(fmt(row.f));
    cells.push_back(fmt(row.sigma2_true));
    cells.push_back(fmt(row.sigma2_hat));
    for (double v : row.mv) cells.push_back(fmt(v));
    cells.push_back(fmt(row.simple_regret));
    cells.push_back(fmt(row.cum_regret));
    cells.push_back(fmt(row.best_f));
    for (double v : row.simple_regret_rho) cells.push_back(fmt(v));
    for (double v : row.cum_regret_rho) cells.push_back(fmt(v));
    cells.push_back(fmt(row.lengthscale));
    cells.push_back(fmt(row.bandwidth));
    cells.push_back(fmt(row.wall_ms));
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
    out << '\n';
  }
  if (trace.aborted) {
    std::string msg = trace.error;
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    out << "# aborted: " << msg << '\n';
  }
}

std::size_t TraceTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw std::out_of_range("trace has no column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

bool TraceTable::has_column(const std::string& name) const {
  return std::find(header.begin(), header.end(), name) != header.end();
}

Vector TraceTable::column_values(const std::string& name) const {
  return values.col(static_cast<Eigen::Index>(column(name)));
}

TraceTable read_trace(std::istream& in) {
  TraceTable t;
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '#') {
      if (starts_with(line, "# aborted")) t.aborted = true;
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
    if (t.header.empty()) {
      t.header = cells;
      continue;
    }
    if (cells.size() != t.header.size()) {
      throw TableFormatError("trace row " + std::to_string(rows.size() + 1) + " has " + std::to_string(cells.size()) +
                             " cells, header has " + std::to_string(t.header.size()));
    }
    std::vector<double> row;
    for (const std::string& c : cells) row.push_back(c == "NA" ? kNaN : parse_double(c, "trace cell"));
    rows.push_back(std::move(row));
  }
  if (t.header.empty()) throw TableFormatError("trace has no header");
  t.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(t.header.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      t.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return t;
}

TraceTable read_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read trace " + path.string());
  return read_trace(in);
}

TraceTable to_table(const ExperimentTrace& trace) {
  std::stringstream ss;
  write_trace(ss, trace);
  return read_trace(ss);
}

// ---------------------------------------------------------------- aggregation

std::vector<std::string> aggregate_metrics(const TraceTable& table) {
  std::vector<std::string> out;
  for (const std::string& h : table.header) {
    if (h == "iteration" || starts_with(h, "x_") || starts_with(h, "ref_")) continue;
    out.push_back(h);
  }
  return out;
}

Aggregate aggregate_tables(const std::vector<TraceTable>& tables) {
  Aggregate agg;
  if (tables.empty()) return agg;
  agg.metrics = aggregate_metrics(tables.front());
  std::vector<std::vector<std::size_t>> cols(tables.size());
  Eigen::Index longest = 0;
  for (std::size_t s = 0; s < tables.size(); ++s) {
    for (const std::string& m : agg.metrics) cols[s].push_back(tables[s].column(m));
    longest = std::max(longest, tables[s].values.rows());
  }
  for (Eigen::Index i = 0; i < longest; ++i) {
    AggregateRow row;
    row.iteration = static_cast<std::size_t>(i) + 1;
    for (const TraceTable& t : tables) row.count += t.values.rows() > i ? 1 : 0;
    for (std::size_t m = 0; m < agg.metrics.size(); ++m) {
      std::vector<double> v;
      for (std::size_t s = 0; s < tables.size(); ++s) {
        if (tables[s].values.rows() <= i) continue;
        const double x = tables[s].values(i, static_cast<Eigen::Index>(cols[s][m]));
        if (!std::isnan(x)) v.push_back(x);
      }
      if (v.empty()) {
        row.mean.push_back(kNaN);
        row.sd.push_back(kNaN);
        continue;
      }
      double mean = 0.0;
      for (double x : v) mean += x;
      mean /= static_cast<double>(v.size());
      double ss = 0.0;
      for (double x : v) ss += (x - mean) * (x - mean);
      row.mean.push_back(mean);
      row.sd.push_back(v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0);
    }
    agg.rows.push_back(std::move(row));
  }
  return agg;
}

TrialSummary summarize_table(const TraceTable& table, unsigned long long seed, const std::vector<double>& rhos) {
  TrialSummary s;
  s.seed = seed;
  s.aborted = table.aborted;
  const Eigen::Index n = table.values.rows();
  const auto last = [&](const std::string& col) { return n ? table.values(n - 1, static_cast<Eigen::Index>(table.column(col))) : kNaN; };
  s.mean_sigma2_true = n ? table.column_values("sigma2_true").mean() : kNaN;
  s.final_best_f = last("best_f");
  s.final_simple_regret = last("simple_regret");
  s.final_cum_regret = last("cum_regret");
  for (double r : rhos) {
    s.final_cum_regret_rho.push_back(last("cum_regret_rho" + rho_label(r)));
    s.final_simple_regret_rho.push_back(last("simple_regret_rho" + rho_label(r)));
  }
  return s;
}

SignTest sign_test_lower(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("sign_test_lower: samples must be paired");
  SignTest t;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::isnan(a[i]) || std::isnan(b[i])) continue;
    if (a[i] < b[i]) {
      ++t.wins;
    } else if (a[i] > b[i]) {
      ++t.losses;
    } else {
      ++t.ties;
    }
  }
  const std::size_t n = t.wins + t.losses;
  if (n == 0 || t.wins == 0) return t;
  const boost::math::binomial_distribution<double> binom(static_cast<double>(n), 0.5);
  t.p_value = boost::math::cdf(boost::math::complement(binom, static_cast<double>(t.wins - 1)));
  return t;
}

void write_aggregate(std::ostream& out, const std::vector<AcqKind>& kinds, const std::vector<Aggregate>& aggregates) {
  const Aggregate* first = nullptr;
  for (const Aggregate& a : aggregates) {
    if (!a.metrics.empty()) {
      first = &a;
      break;
    }
  }
  out << "af,iteration,n";
  if (first) {
    for (const std::string& m : first->metrics) out << ',' << m << "_mean," << m << "_sd";
  }
  out << '\n';
  for (std::size_t k = 0; k < kinds.size(); ++k) {
    for (const AggregateRow& row : aggregates[k].rows) {
      out << to_string(kinds[k]) << ',' << row.iteration << ',' << row.count;
      for (std::size_t m = 0; m < row.mean.size(); ++m) out << ',' << fmt(row.mean[m]) << ',' << fmt(row.sd[m]);
      out << '\n';
    }
  }
}

namespace {

nlohmann::json num(double v) { return std::isnan(v) ? nlohmann::json() : nlohmann::json(v); }

nlohmann::json mean_sd(const std::vector<double>& v) {
  std::vector<double> x;
  for (double e : v) {
    if (!std::isnan(e)) x.push_back(e);
  }
  if (x.empty()) return {{"mean", nullptr}, {"sd", nullptr}, {"n", 0}};
  double mean = 0.0;
  for (double e : x) mean += e;
  mean /= static_cast<double>(x.size());
  double ss = 0.0;
  for (double e : x) ss += (e - mean) * (e - mean);
  const double sd = x.size() > 1 ? std::sqrt(ss / static_cast<double>(x.size() - 1)) : 0.0;
  return {{"mean", mean}, {"sd", sd}, {"n", x.size()}};
}

std::vector<double> pick(const std::vector<TrialSummary>& s, const std::function<double(const TrialSummary&)>& f) {
  std::vector<double> out;
  for (const TrialSummary& t : s) out.push_back(t.aborted ? kNaN : f(t));
  return out;
}

}  // namespace

std::string summary_json(const SuiteResult& r, const std::map<std::string, std::string>& settings) {
  using nlohmann::json;
  json j;
  j["settings"] = settings;
  j["settings_notes"] = {{"hyperparameter_refit", "every iteration"},
                         {"initial_duels", "uniform random pairs answered by the simulated human"}};
  j["seeds"] = r.seeds;
  j["rhos"] = r.rhos;
  std::vector<std::string> kinds;
  for (AcqKind k : r.kinds) kinds.push_back(to_string(k));
  j["acquisitions"] = kinds;
  j["trials"] = r.kinds.size() * r.seeds.size();
  j["aborted"] = r.aborted;

  using Getter = std::function<double(const TrialSummary&)>;
  std::vector<std::pair<std::string, Getter>> metrics{
      {"mean_sigma2_true", [](const TrialSummary& t) { return t.mean_sigma2_true; }},
      {"final_best_f", [](const TrialSummary& t) { return t.final_best_f; }},
      {"final_simple_regret", [](const TrialSummary& t) { return t.final_simple_regret; }},
      {"final_cum_regret", [](const TrialSummary& t) { return t.final_cum_regret; }}};
  for (std::size_t i = 0; i < r.rhos.size(); ++i) {
    const std::string label = rho_label(r.rhos[i]);
    metrics.emplace_back("final_simple_regret_rho" + label,
                         [i](const TrialSummary& t) { return t.final_simple_regret_rho[i]; });
    metrics.emplace_back("final_cum_regret_rho" + label,
                         [i](const TrialSummary& t) { return t.final_cum_regret_rho[i]; });
  }

  json per_af = json::object();
  for (std::size_t k = 0; k < r.kinds.size(); ++k) {
    json a;
    const auto& sums = r.summaries[k];
    std::size_t aborted = 0;
    json seeds = json::array();
    for (const TrialSummary& t : sums) {
      aborted += t.aborted ? 1 : 0;
      json s{{"seed", t.seed}, {"aborted", t.aborted}};
      for (const auto& [name, get] : metrics) s[name] = num(get(t));
      seeds.push_back(s);
    }
    a["aborted"] = aborted;
    for (const auto& [name, get] : metrics) a[name] = mean_sd(pick(sums, get));
    a["per_seed"] = seeds;
    per_af[to_string(r.kinds[k])] = a;
  }
  j["results"] = per_af;

  json comparisons = json::array();
  const auto index_of = [&](AcqKind kind) -> std::optional<std::size_t> {
    for (std::size_t k = 0; k < r.kinds.size(); ++k) {
      if (r.kinds[k] == kind) return k;
    }
    return std::nullopt;
  };
  const std::pair<AcqKind, AcqKind> pairs[] = {{AcqKind::anpei, AcqKind::ei},
                                               {AcqKind::rahbo, AcqKind::ucb},
                                               {AcqKind::anpei, AcqKind::ucb},
                                               {AcqKind::rahbo, AcqKind::ei}};
  for (const auto& [averse, neutral] : pairs) {
    const auto ia = index_of(averse);
    const auto in = index_of(neutral);
    if (!ia || !in) continue;
    for (const auto& [name, get] : metrics) {
      if (name == "final_best_f") continue;
      const SignTest t = sign_test_lower(pick(r.summaries[*ia], get), pick(r.summaries[*in], get));
      comparisons.push_back({{"risk_averse", to_string(averse)},
                             {"risk_neutral", to_string(neutral)},
                             {"metric", name},
                             {"lower_wins", t.wins},
                             {"lower_losses", t.losses},
                             {"ties", t.ties},
                             {"p_value", t.p_value}});
    }
  }
  j["comparisons"] = comparisons;
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------- suites

namespace {

void write_suite_outputs(const std::filesystem::path& dir, const SuiteResult& result,
                         const std::map<std::string, std::string>& settings) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "aggregate.csv");
    if (!out) throw std::runtime_error("cannot write " + (dir / "aggregate.csv").string());
    write_aggregate(out, result.kinds, result.aggregates);
  }
  std::ofstream out(dir / "summary.json");
  if (!out) throw std::runtime_error("cannot write " + (dir / "summary.json").string());
  out << summary_json(result, settings);
}

void finish_suite(SuiteResult& result) {
  result.aggregates.clear();
  result.summaries.assign(result.kinds.size(), {});
  result.aborted = 0;
  for (std::size_t k = 0; k < result.kinds.size(); ++k) {
    std::vector<TraceTable> complete;
    for (std::size_t s = 0; s < result.seeds.size(); ++s) {
      const TraceTable& t = result.tables[k][s];
      result.summaries[k].push_back(summarize_table(t, result.seeds[s], result.rhos));
      if (t.aborted) {
        ++result.aborted;
      } else {
        complete.push_back(t);
      }
    }
    result.aggregates.push_back(aggregate_tables(complete));
  }
}

}  // namespace

SuiteResult run_suite(const ExperimentConfig& cfg, bool write_outputs, const ProgressCallback& progress) {
  cfg.validate();
  SuiteResult result;
  result.kinds = cfg.acquisitions;
  result.seeds = cfg.seeds;
  result.rhos = cfg.rhos;
  const std::size_t nk = result.kinds.size();
  const std::size_t ns = result.seeds.size();
  result.tables.assign(nk, std::vector<TraceTable>(ns));
  std::vector<std::vector<ExperimentTrace>> traces(nk, std::vector<ExperimentTrace>(ns));

  std::atomic<std::size_t> next{0};
  std::mutex progress_mutex;
  const auto worker = [&] {
    for (std::size_t job = next++; job < nk * ns; job = next++) {
      const std::size_t k = job / ns;
      const std::size_t s = job % ns;
      ExperimentTrace trace;
      try {
        trace = run_trial(cfg, result.kinds[k], result.seeds[s]);
      } catch (const std::exception& e) {
        trace.dim = benchmark_domain(cfg.benchmark).dim();
        trace.rhos = cfg.rhos;
        trace.aborted = true;
        trace.error = std::string("setup: ") + e.what();
      }
      if (progress) {
        std::lock_guard<std::mutex> lock(progress_mutex);
        progress(result.kinds[k], result.seeds[s], trace);
      }
      traces[k][s] = std::move(trace);
    }
  };
  std::size_t workers = cfg.workers ? cfg.workers : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, nk * ns);
  std::vector<std::thread> pool;
  for (std::size_t i = 1; i < workers; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  for (std::size_t k = 0; k < nk; ++k) {
    for (std::size_t s = 0; s < ns; ++s) result.tables[k][s] = to_table(traces[k][s]);
  }
  finish_suite(result);

  if (write_outputs) {
    for (std::size_t k = 0; k < nk; ++k) {
      const std::filesystem::path dir = cfg.output_dir / to_string(result.kinds[k]);
      std::filesystem::create_directories(dir);
      for (std::size_t s = 0; s < ns; ++s) {
        const std::string stem = "seed_" + std::to_string(result.seeds[s]);
        std::ofstream out(dir / (stem + ".csv"));
        if (!out) throw std::runtime_error("cannot write trace under " + dir.string());
        write_trace(out, traces[k][s]);
        if (!traces[k][s].anchors.empty()) {
          write_table(dir / (stem + "_anchors.csv"), stack_rows(traces[k][s].anchors), "anchors (native units)");
        }
      }
    }
    write_suite_outputs(cfg.output_dir, result, describe(cfg));
  }
  if (result.aborted * 5 > nk * ns) {
    throw SuiteError(std::to_string(result.aborted) + " of " + std::to_string(nk * ns) +
                     " trials aborted (more than 20%)");
  }
  return result;
}

SuiteResult aggregate_directory(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
  SuiteResult result;
  std::vector<std::set<unsigned long long>> seed_sets;
  for (const char* name : {"ei", "ucb", "anpei", "rahbo"}) {
    const std::filesystem::path sub = dir / name;
    if (!std::filesystem::is_directory(sub)) continue;
    std::set<unsigned long long> seeds;
    for (const auto& entry : std::filesystem::directory_iterator(sub)) {
      const std::string file = entry.path().filename().string();
      if (!starts_with(file, "seed_") || entry.path().extension() != ".csv" || file.find("_anchors") != std::string::npos) {
        continue;
      }
      seeds.insert(static_cast<unsigned long long>(parse_int(file.substr(5, file.size() - 9), "trace file name")));
    }
    if (seeds.empty()) continue;
    result.kinds.push_back(parse_acq_kind(name));
    seed_sets.push_back(std::move(seeds));
  }
  if (result.kinds.empty()) throw std::runtime_error("no traces found under " + dir.string());
  std::set<unsigned long long> common = seed_sets.front();
  for (const auto& s : seed_sets) {
    std::set<unsigned long long> keep;
    std::set_intersection(common.begin(), common.end(), s.begin(), s.end(), std::inserter(keep, keep.begin()));
    common = std::move(keep);
  }
  result.seeds.assign(common.begin(), common.end());
  result.tables.assign(result.kinds.size(), {});
  for (std::size_t k = 0; k < result.kinds.size(); ++k) {
    for (unsigned long long s : result.seeds) {
      result.tables[k].push_back(read_trace(dir / to_string(result.kinds[k]) / ("seed_" + std::to_string(s) + ".csv")));
    }
  }
  const std::string prefix = "cum_regret_rho";
  for (const std::string& h : result.tables.front().front().header) {
    if (starts_with(h, prefix)) result.rhos.push_back(parse_double(h.substr(prefix.size()), "rho label"));
  }
  finish_suite(result);

  std::map<std::string, std::string> settings;
  const std::filesystem::path summary = dir / "summary.json";
  if (std::filesystem::exists(summary)) {
    std::ifstream in(summary);
    try {
      const auto j = nlohmann::json::parse(in);
      if (j.contains("settings")) settings = j["settings"].get<std::map<std::string, std::string>>();
    } catch (const nlohmann::json::exception&) {
    }
  }
  write_suite_outputs(dir, result, settings);
  return result;
}

}  // namespace hetpbo
