#pragma once

// Live preference sessions. A Session is a pure state machine driven by
// events; SessionStore persists each session as an append-only JSON-lines
// event log and replays it on load.

#include "hetpbo/engine.hpp"
#include "hetpbo/harness.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace hetpbo {

enum class SessionStatus { collecting_anchors, active, closed };

std::string to_string(SessionStatus status);

/// Errors carry the HTTP status the service answers with.
class SessionError : public std::runtime_error {
 public:
  SessionError(int status, std::string code, const std::string& message)
      : std::runtime_error(message), status_(status), code_(std::move(code)) {}
  int status() const { return status_; }
  const std::string& code() const { return code_; }

 private:
  int status_;
  std::string code_;
};

struct SessionConfig {
  BoxDomain domain = BoxDomain::unit(1);
  double noise_scale = 1.0;
  EngineSettings engine;
  unsigned long long seed = 0;
  /// Duels answered before proposals switch from the Halton sequence to the acquisition.
  std::size_t cold_start_duels = 3;

  /// Parses the flat creation body: lower, upper, noise_scale, acquisition,
  /// gamma, eta, seed, backend, pool_size, cold_start_duels.
  static SessionConfig from_json(const nlohmann::json& body);
  nlohmann::json to_json() const;
};

struct PendingDuel {
  DesignPoint challenger;
  DesignPoint reference;
  bool cold_start = false;
  double acquisition_value = 0.0;
  double sigma2_hat_challenger = 0.0;
  double lengthscale = 0.0;
  double bandwidth = 0.0;
};

class Session {
 public:
  Session(std::string id, SessionConfig config, std::string created_at);

  const std::string& id() const { return id_; }
  const SessionConfig& config() const { return config_; }
  SessionStatus status() const { return status_; }
  const std::vector<DesignPoint>& anchors() const { return anchors_; }
  double bandwidth() const { return bandwidth_; }
  const DuelDataset& duels() const { return duels_; }
  const std::optional<PendingDuel>& pending() const { return pending_; }
  const std::string& created_at() const { return created_at_; }
  const std::string& updated_at() const { return updated_at_; }
  std::size_t proposals() const { return proposals_; }

  /// Kernel-density noise model over the current anchors.
  AnchorModel anchor_model() const;

  // Each prepare_* call validates a request against the current state and
  // returns the event that performs it; apply() commits an event.
  nlohmann::json prepare_anchors(const std::vector<DesignPoint>& points) const;
  nlohmann::json prepare_freeze() const;
  nlohmann::json prepare_duel() const;
  nlohmann::json prepare_preference(const std::string& winner_tag) const;
  nlohmann::json prepare_close() const;
  void apply(const nlohmann::json& event);

  nlohmann::json state_json() const;
  nlohmann::json pending_json() const;
  /// Incumbent and posterior at the last answered pair.
  nlohmann::json iteration_json() const;
  /// (x, mu, sigma, sigma2_hat, acquisition) on `grid` Halton points.
  nlohmann::json summary_json(std::size_t grid) const;
  /// Harness trace schema; oracle-dependent columns are NA.
  std::string trace_csv() const;

  /// Deterministic Laplace posterior used for reporting.
  Surrogate reporting_surrogate() const;

 private:
  void require_not_closed() const;

  std::string id_;
  SessionConfig config_;
  SessionStatus status_ = SessionStatus::collecting_anchors;
  std::vector<DesignPoint> anchors_;
  double bandwidth_ = 0.0;
  DuelDataset duels_;
  std::optional<PendingDuel> pending_;
  std::vector<TraceRow> trace_;
  std::size_t proposals_ = 0;
  std::string created_at_;
  std::string updated_at_;
};

/// Stable seed substream for the k-th proposal of a session.
Rng proposal_stream(unsigned long long seed, std::size_t proposal_index);

nlohmann::json point_json(const DesignPoint& x);
DesignPoint point_from_json(const nlohmann::json& j, std::size_t dim);

class SessionStore {
 public:
  /// Loads every "<id>.jsonl" log found in `dir`.
  explicit SessionStore(std::filesystem::path dir);

  std::string create(const SessionConfig& config);
  std::vector<std::string> ids() const;

  /// Runs `fn` with the session locked. Mutating callers return the event to
  /// persist (or null); it is appended to the log before being applied.
  nlohmann::json with_session(const std::string& id, const std::function<nlohmann::json(Session&)>& read);
  nlohmann::json mutate(const std::string& id, const std::function<nlohmann::json(const Session&)>& prepare,
                        const std::function<nlohmann::json(const Session&)>& respond);

  const std::filesystem::path& directory() const { return dir_; }

 private:
  struct Entry {
    std::mutex mutex;
    std::unique_ptr<Session> session;
  };
  std::shared_ptr<Entry> find(const std::string& id) const;
  void append(const std::string& id, const nlohmann::json& event) const;
  static Session replay(const std::filesystem::path& log);

  std::filesystem::path dir_;
  mutable std::mutex map_mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
};

std::string now_iso8601();

}  // namespace hetpbo
