#include "hetpbo/session.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace hetpbo {

namespace {

using nlohmann::json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool non_negative_integer(const json& j) {
  return j.is_number_unsigned() || (j.is_number_integer() && j.get<long long>() >= 0);
}

json num(double v) { return std::isfinite(v) ? json(v) : json(); }
double num_or_nan(const json& j) { return j.is_number() ? j.get<double>() : kNaN; }

SessionError bad_request(const std::string& code, const std::string& message) {
  return SessionError(400, code, message);
}

Vector vector_from_json(const json& j, const std::string& key) {
  if (!j.is_array() || j.empty()) throw bad_request("invalid_domain", key + " must be a non-empty array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw bad_request("invalid_domain", key + " must contain only numbers");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

}  // namespace

std::string to_string(SessionStatus status) {
  switch (status) {
    case SessionStatus::collecting_anchors: return "collecting_anchors";
    case SessionStatus::active: return "active";
    case SessionStatus::closed: return "closed";
  }
  return "?";
}

std::string now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

json point_json(const DesignPoint& x) {
  json a = json::array();
  for (Eigen::Index i = 0; i < x.size(); ++i) a.push_back(x[i]);
  return a;
}

DesignPoint point_from_json(const json& j, std::size_t dim) {
  if (!j.is_array() || j.size() != dim) {
    throw bad_request("invalid_point", "points must be arrays of " + std::to_string(dim) + " numbers");
  }
  DesignPoint x(static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < dim; ++i) {
    if (!j[i].is_number()) throw bad_request("invalid_point", "point coordinates must be numbers");
    x[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return x;
}

Rng proposal_stream(unsigned long long seed, std::size_t proposal_index) {
  return substream(seed, 1000u + static_cast<unsigned>(proposal_index));
}

// ---------------------------------------------------------------- config

SessionConfig SessionConfig::from_json(const json& body) {
  if (!body.is_object()) throw bad_request("invalid_body", "request body must be a JSON object");
  static const std::set<std::string> known{"lower", "upper", "noise_scale", "acquisition", "gamma", "eta", "seed",
                                           "backend", "pool_size", "cold_start_duels", "bandwidth_mode",
                                           "predictive"};
  for (const auto& [key, value] : body.items()) {
    if (!known.count(key)) throw bad_request("unknown_field", "unknown field '" + key + "'");
  }
  if (!body.contains("lower") || !body.contains("upper")) {
    throw bad_request("invalid_domain", "lower and upper bounds are required");
  }
  SessionConfig c;
  try {
    c.domain = BoxDomain(vector_from_json(body["lower"], "lower"), vector_from_json(body["upper"], "upper"));
  } catch (const std::invalid_argument& e) {
    throw bad_request("invalid_domain", e.what());
  }
  const auto number = [&](const char* key, double fallback) {
    if (!body.contains(key)) return fallback;
    if (!body[key].is_number()) throw bad_request("invalid_field", std::string(key) + " must be a number");
    return body[key].get<double>();
  };
  const auto text = [&](const char* key, const std::string& fallback) {
    if (!body.contains(key)) return fallback;
    if (!body[key].is_string()) throw bad_request("invalid_field", std::string(key) + " must be a string");
    return body[key].get<std::string>();
  };
  const auto count = [&](const char* key, std::size_t fallback) {
    if (!body.contains(key)) return fallback;
    if (!non_negative_integer(body[key])) {
      throw bad_request("invalid_field", std::string(key) + " must be a non-negative integer");
    }
    return body[key].get<std::size_t>();
  };
  c.noise_scale = number("noise_scale", 1.0);
  if (!(c.noise_scale > 0.0) || !std::isfinite(c.noise_scale)) {
    throw bad_request("invalid_noise_scale", "noise_scale must be positive and finite");
  }
  try {
    c.engine.acq.kind = parse_acq_kind(text("acquisition", "anpei"));
    c.engine.backend = parse_backend(text("backend", "hb"));
    c.engine.bandwidth_mode = parse_bandwidth_mode(text("bandwidth_mode", "loo"));
    c.engine.predictive = parse_predictive_mode(text("predictive", "latent"));
    c.engine.acq.gamma = number("gamma", c.engine.acq.gamma);
    c.engine.acq.eta = number("eta", c.engine.acq.eta);
    c.engine.acq.pool_size = count("pool_size", c.engine.acq.pool_size);
    c.engine.acq.validate();
  } catch (const std::invalid_argument& e) {
    throw bad_request("invalid_field", e.what());
  }
  c.cold_start_duels = count("cold_start_duels", c.cold_start_duels);
  if (body.contains("seed")) {
    if (!non_negative_integer(body["seed"])) throw bad_request("invalid_field", "seed must be a non-negative integer");
    c.seed = body["seed"].get<unsigned long long>();
  } else {
    std::random_device rd;
    c.seed = (static_cast<unsigned long long>(rd()) << 32) | rd();
  }
  return c;
}

json SessionConfig::to_json() const {
  return {{"lower", point_json(domain.lower())},
          {"upper", point_json(domain.upper())},
          {"noise_scale", noise_scale},
          {"acquisition", to_string(engine.acq.kind)},
          {"gamma", engine.acq.gamma},
          {"eta", engine.acq.eta},
          {"pool_size", engine.acq.pool_size},
          {"backend", to_string(engine.backend)},
          {"bandwidth_mode", to_string(engine.bandwidth_mode)},
          {"predictive", to_string(engine.predictive)},
          {"cold_start_duels", cold_start_duels},
          {"seed", seed}};
}

// ---------------------------------------------------------------- session

Session::Session(std::string id, SessionConfig config, std::string created_at)
    : id_(std::move(id)),
      config_(std::move(config)),
      duels_(config_.domain.dim()),
      created_at_(created_at),
      updated_at_(std::move(created_at)) {
  bandwidth_ = config_.engine.fallback_bandwidth * config_.domain.diameter();
}

void Session::require_not_closed() const {
  if (status_ == SessionStatus::closed) throw SessionError(410, "session_closed", "session " + id_ + " is closed");
}

AnchorModel Session::anchor_model() const {
  if (anchors_.empty()) throw SessionError(409, "no_anchors", "session has no anchors");
  return AnchorModel(stack_rows(anchors_), bandwidth_, config_.noise_scale);
}

json Session::prepare_anchors(const std::vector<DesignPoint>& points) const {
  require_not_closed();
  if (status_ != SessionStatus::collecting_anchors) {
    throw SessionError(409, "anchors_frozen", "anchors are frozen once the session is active");
  }
  json offenders = json::array();
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!config_.domain.contains(points[i])) offenders.push_back(i);
  }
  if (!offenders.empty()) {
    throw SessionError(400, "out_of_domain", "points outside the domain at indices " + offenders.dump());
  }
  if (points.empty()) return nullptr;
  json pts = json::array();
  for (const DesignPoint& p : points) pts.push_back(point_json(p));
  return {{"type", "anchors_added"}, {"points", pts}, {"at", now_iso8601()}};
}

json Session::prepare_freeze() const {
  require_not_closed();
  if (status_ != SessionStatus::collecting_anchors) throw SessionError(409, "already_active", "session is already active");
  if (anchors_.empty()) throw SessionError(409, "no_anchors", "at least one anchor is required before freezing");
  return {{"type", "frozen"}, {"at", now_iso8601()}};
}

json Session::prepare_duel() const {
  require_not_closed();
  if (status_ != SessionStatus::active) throw SessionError(409, "not_active", "freeze the anchors before requesting duels");
  if (pending_) throw SessionError(409, "duel_pending", "the pending duel must be answered first");
  const std::size_t d = config_.domain.dim();
  json e{{"type", "duel_proposed"}, {"at", now_iso8601()}};
  if (duels_.size() < config_.cold_start_duels) {
    const Matrix u = halton_points(2, d, 2 * proposals_);
    const DesignPoint c = config_.domain.from_unit(u.row(0).transpose());
    const DesignPoint r = config_.domain.from_unit(u.row(1).transpose());
    e["challenger"] = point_json(c);
    e["reference"] = point_json(r);
    e["cold_start"] = true;
    e["acquisition_value"] = nullptr;
    e["sigma2_hat"] = anchor_model().variance(c);
    e["lengthscale"] = nullptr;
    e["bandwidth"] = bandwidth_;
    return e;
  }
  Rng rng = proposal_stream(config_.seed, proposals_);
  const std::optional<DesignPoint> previous =
      duels_.empty() ? std::nullopt : std::optional<DesignPoint>(duels_.records().back().winner);
  const EngineStep step =
      engine_step(duels_, anchor_model(), config_.domain, queried_points(duels_), previous, config_.engine, rng);
  e["challenger"] = point_json(step.proposal.challenger);
  e["reference"] = point_json(step.proposal.reference);
  e["cold_start"] = false;
  e["acquisition_value"] = num(step.proposal.value);
  e["sigma2_hat"] = step.surrogate.noise->variance(step.proposal.challenger);
  e["lengthscale"] = step.surrogate.hyper.lengthscale;
  e["bandwidth"] = step.surrogate.noise->bandwidth();
  return e;
}

json Session::prepare_preference(const std::string& winner_tag) const {
  require_not_closed();
  if (winner_tag != "challenger" && winner_tag != "reference") {
    throw SessionError(400, "invalid_winner", "winner must be 'challenger' or 'reference'");
  }
  if (!pending_) throw SessionError(409, "no_pending_duel", "there is no pending duel to answer");
  return {{"type", "duel_answered"}, {"winner", winner_tag}, {"at", now_iso8601()}};
}

json Session::prepare_close() const {
  require_not_closed();
  return {{"type", "closed"}, {"at", now_iso8601()}};
}

void Session::apply(const json& e) {
  const std::string type = e.at("type").get<std::string>();
  const std::size_t d = config_.domain.dim();
  if (type == "anchors_added") {
    for (const json& p : e.at("points")) anchors_.push_back(point_from_json(p, d));
    bandwidth_ = anchor_bandwidth(stack_rows(anchors_), config_.domain, config_.engine);
  } else if (type == "frozen") {
    status_ = SessionStatus::active;
  } else if (type == "duel_proposed") {
    PendingDuel p;
    p.challenger = point_from_json(e.at("challenger"), d);
    p.reference = point_from_json(e.at("reference"), d);
    p.cold_start = e.at("cold_start").get<bool>();
    p.acquisition_value = num_or_nan(e.at("acquisition_value"));
    p.sigma2_hat_challenger = num_or_nan(e.at("sigma2_hat"));
    p.lengthscale = num_or_nan(e.at("lengthscale"));
    p.bandwidth = num_or_nan(e.at("bandwidth"));
    pending_ = std::move(p);
    ++proposals_;
  } else if (type == "duel_answered") {
    if (!pending_) throw std::runtime_error("event log: answer without a pending duel");
    const bool won = e.at("winner").get<std::string>() == "challenger";
    duels_.add(won ? pending_->challenger : pending_->reference, won ? pending_->reference : pending_->challenger);
    TraceRow row;
    row.iteration = duels_.size();
    row.challenger = pending_->challenger;
    row.reference = pending_->reference;
    row.challenger_won = won;
    row.f = row.sigma2_true = row.simple_regret = row.cum_regret = row.best_f = kNaN;
    row.sigma2_hat = pending_->sigma2_hat_challenger;
    row.lengthscale = pending_->lengthscale;
    row.bandwidth = pending_->bandwidth;
    row.wall_ms = kNaN;
    trace_.push_back(std::move(row));
    pending_.reset();
  } else if (type == "closed") {
    status_ = SessionStatus::closed;
  } else if (type != "created") {
    throw std::runtime_error("event log: unknown event type '" + type + "'");
  }
  if (e.contains("at")) updated_at_ = e["at"].get<std::string>();
}

Surrogate Session::reporting_surrogate() const {
  EngineSettings s = config_.engine;
  s.backend = InferenceBackend::laplace;
  Rng unused(0);
  return fit_surrogate(duels_, anchor_model(), config_.domain, s, unused);
}

json Session::pending_json() const {
  if (!pending_) return nullptr;
  return {{"challenger", point_json(pending_->challenger)},
          {"reference", point_json(pending_->reference)},
          {"cold_start", pending_->cold_start},
          {"acquisition_value", num(pending_->acquisition_value)}};
}

json Session::state_json() const {
  json duels = json::array();
  for (const DuelRecord& r : duels_.records()) {
    duels.push_back({{"winner", point_json(r.winner)}, {"loser", point_json(r.loser)}});
  }
  json anchors = json::array();
  for (const DesignPoint& a : anchors_) anchors.push_back(point_json(a));
  return {{"id", id_},
          {"status", to_string(status_)},
          {"config", config_.to_json()},
          {"anchors", anchors},
          {"n_anchors", anchors_.size()},
          {"bandwidth", bandwidth_},
          {"duels", duels},
          {"n_duels", duels_.size()},
          {"pending", pending_json()},
          {"created_at", created_at_},
          {"updated_at", updated_at_}};
}

json Session::iteration_json() const {
  const Surrogate s = reporting_surrogate();
  json out{{"n_duels", duels_.size()}};
  if (duels_.empty()) return out;
  const Incumbent inc = incumbent(*s.laplace_posterior, queried_points(duels_));
  out["incumbent"] = {{"x", point_json(inc.x)}, {"mean", inc.mean}};
  const DuelRecord& last = duels_.records().back();
  const auto describe_point = [&](const DesignPoint& x) {
    const PointPrediction p = s.laplace_posterior->predict(x);
    return json{{"x", point_json(x)}, {"mu", p.mean}, {"sigma2_hat", s.noise->variance(x)}};
  };
  const TraceRow& row = trace_.back();
  out["challenger"] = describe_point(row.challenger);
  out["reference"] = describe_point(row.reference);
  out["winner"] = row.challenger_won ? "challenger" : "reference";
  out["last_winner"] = point_json(last.winner);
  return out;
}

json Session::summary_json(std::size_t grid) const {
  require_not_closed();
  if (status_ != SessionStatus::active) throw SessionError(409, "not_active", "summary requires an active session");
  if (grid < 1 || grid > 100000) throw bad_request("invalid_grid", "grid must be between 1 and 100000");
  const Surrogate s = reporting_surrogate();
  double inc_mean = 0.0;
  json inc = nullptr;
  if (!duels_.empty()) {
    const Incumbent i = incumbent(*s.laplace_posterior, queried_points(duels_));
    inc_mean = i.mean;
    inc = {{"x", point_json(i.x)}, {"mean", i.mean}};
  }
  const Matrix u = halton_points(grid, config_.domain.dim());
  json rows = json::array();
  for (Eigen::Index i = 0; i < u.rows(); ++i) {
    const DesignPoint x = config_.domain.from_unit(u.row(i).transpose());
    const PointPrediction p = s.laplace_posterior->predict(x);
    const double sigma = std::sqrt(p.variance);
    const double s2 = s.noise->variance(x);
    rows.push_back({{"x", point_json(x)},
                    {"mu", p.mean},
                    {"sigma", sigma},
                    {"sigma2_hat", s2},
                    {"acquisition", acq_value(p.mean, sigma, s2, inc_mean, config_.engine.acq)}});
  }
  return {{"grid", rows},
          {"incumbent", inc},
          {"pending", pending_json()},
          {"lengthscale", s.hyper.lengthscale},
          {"bandwidth", s.noise->bandwidth()},
          {"n_duels", duels_.size()}};
}

std::string Session::trace_csv() const {
  ExperimentTrace t;
  t.dim = config_.domain.dim();
  t.rows = trace_;
  std::ostringstream os;
  write_trace(os, t);
  return os.str();
}

// ---------------------------------------------------------------- store

SessionStore::SessionStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
  for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
    if (entry.path().extension() != ".jsonl") continue;
    auto e = std::make_shared<Entry>();
    e->session = std::make_unique<Session>(replay(entry.path()));
    sessions_[e->session->id()] = std::move(e);
  }
}

Session SessionStore::replay(const std::filesystem::path& log) {
  std::ifstream in(log);
  if (!in) throw std::runtime_error("cannot read session log " + log.string());
  std::vector<json> events;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      events.push_back(json::parse(line));
    } catch (const json::parse_error&) {
      // A torn final line from a crash mid-append; the state before it is intact.
      if (in.peek() == std::char_traits<char>::eof()) break;
      throw std::runtime_error("corrupt session log " + log.string());
    }
  }
  if (events.empty() || events.front().value("type", "") != "created") {
    throw std::runtime_error("session log " + log.string() + " does not start with a creation event");
  }
  const json& c = events.front();
  json config = c.at("config");
  Session s(c.at("id").get<std::string>(), SessionConfig::from_json(config), c.at("at").get<std::string>());
  for (std::size_t i = 1; i < events.size(); ++i) s.apply(events[i]);
  return s;
}

void SessionStore::append(const std::string& id, const json& event) const {
  const std::string line = event.dump() + "\n";
  const std::string path = (dir_ / (id + ".jsonl")).string();
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
  if (fd < 0) throw std::runtime_error("cannot open session log " + path);
  std::size_t done = 0;
  while (done < line.size()) {
    const ssize_t n = ::write(fd, line.data() + done, line.size() - done);
    if (n < 0) {
      ::close(fd);
      throw std::runtime_error("cannot write session log " + path);
    }
    done += static_cast<std::size_t>(n);
  }
  ::fsync(fd);
  ::close(fd);
}

std::string SessionStore::create(const SessionConfig& config) {
  std::random_device rd;
  std::string id;
  {
    std::lock_guard<std::mutex> lock(map_mutex_);
    do {
      char buf[17];
      std::snprintf(buf, sizeof buf, "%08x%08x", rd(), rd());
      id = buf;
    } while (sessions_.count(id));
    sessions_[id] = nullptr;  // reserve
  }
  const std::string at = now_iso8601();
  auto e = std::make_shared<Entry>();
  e->session = std::make_unique<Session>(id, config, at);
  try {
    append(id, {{"type", "created"}, {"id", id}, {"config", config.to_json()}, {"at", at}});
  } catch (...) {
    std::lock_guard<std::mutex> lock(map_mutex_);
    sessions_.erase(id);
    throw;
  }
  std::lock_guard<std::mutex> lock(map_mutex_);
  sessions_[id] = std::move(e);
  return id;
}

std::vector<std::string> SessionStore::ids() const {
  std::lock_guard<std::mutex> lock(map_mutex_);
  std::vector<std::string> out;
  for (const auto& [id, entry] : sessions_) {
    if (entry) out.push_back(id);
  }
  return out;
}

std::shared_ptr<SessionStore::Entry> SessionStore::find(const std::string& id) const {
  std::lock_guard<std::mutex> lock(map_mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end() || !it->second) throw SessionError(404, "not_found", "no session with id '" + id + "'");
  return it->second;
}

json SessionStore::with_session(const std::string& id, const std::function<json(Session&)>& read) {
  const auto entry = find(id);
  std::lock_guard<std::mutex> lock(entry->mutex);
  return read(*entry->session);
}

json SessionStore::mutate(const std::string& id, const std::function<json(const Session&)>& prepare,
                          const std::function<json(const Session&)>& respond) {
  const auto entry = find(id);
  std::lock_guard<std::mutex> lock(entry->mutex);
  const json event = prepare(*entry->session);
  if (!event.is_null()) {
    append(id, event);
    entry->session->apply(event);
  }
  return respond(*entry->session);
}

}  // namespace hetpbo
