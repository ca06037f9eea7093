#include "hetpbo/service.hpp"

#include <httplib.h>

namespace hetpbo {

namespace {

using nlohmann::json;

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
  send_json(res, status, {{"code", code}, {"message", message}});
}

json parse_body(const httplib::Request& req, bool allow_empty) {
  if (req.body.empty()) {
    if (allow_empty) return json::object();
    throw SessionError(400, "invalid_body", "request body is required");
  }
  json body;
  try {
    body = json::parse(req.body);
  } catch (const json::parse_error& e) {
    throw SessionError(400, "invalid_json", e.what());
  }
  if (!body.is_object()) throw SessionError(400, "invalid_body", "request body must be a JSON object");
  return body;
}

}  // namespace

struct HttpService::Impl {
  SessionStore& store;
  httplib::Server server;

  explicit Impl(SessionStore& s) : store(s) { routes(); }

  template <typename Handler>
  httplib::Server::Handler guarded(Handler handler) {
    return [handler](const httplib::Request& req, httplib::Response& res) {
      try {
        handler(req, res);
      } catch (const SessionError& e) {
        send_error(res, e.status(), e.code(), e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, "internal_error", e.what());
      }
    };
  }

  void routes() {
    server.set_post_routing_handler([](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Origin", "*");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    });
    server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    server.Get("/sessions", guarded([this](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, {{"sessions", store.ids()}});
    }));

    server.Post("/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const SessionConfig config = SessionConfig::from_json(parse_body(req, false));
      const std::string id = store.create(config);
      send_json(res, 201, store.with_session(id, [](Session& s) { return s.state_json(); }));
    }));

    server.Get(R"(/sessions/([0-9a-f]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      send_json(res, 200, store.with_session(req.matches[1], [](Session& s) { return s.state_json(); }));
    }));

    server.Post(R"(/sessions/([0-9a-f]+)/anchors)",
                guarded([this](const httplib::Request& req, httplib::Response& res) {
                  const json body = parse_body(req, false);
                  if (!body.contains("points") || !body["points"].is_array()) {
                    throw SessionError(400, "invalid_body", "points must be an array of points");
                  }
                  const auto respond = [](const Session& s) {
                    return json{{"n_anchors", s.anchors().size()}, {"bandwidth", s.bandwidth()}};
                  };
                  send_json(res, 200,
                            store.mutate(
                                req.matches[1],
                                [&](const Session& s) {
                                  std::vector<DesignPoint> points;
                                  for (const json& p : body["points"]) {
                                    points.push_back(point_from_json(p, s.config().domain.dim()));
                                  }
                                  return s.prepare_anchors(points);
                                },
                                respond));
                }));

    server.Post(R"(/sessions/([0-9a-f]+)/freeze)",
                guarded([this](const httplib::Request& req, httplib::Response& res) {
                  send_json(res, 200,
                            store.mutate(
                                req.matches[1], [](const Session& s) { return s.prepare_freeze(); },
                                [](const Session& s) { return s.state_json(); }));
                }));

    server.Get(R"(/sessions/([0-9a-f]+)/duel)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      send_json(res, 200,
                store.mutate(
                    req.matches[1], [](const Session& s) { return s.prepare_duel(); },
                    [](const Session& s) { return s.pending_json(); }));
    }));

    server.Post(R"(/sessions/([0-9a-f]+)/preference)",
                guarded([this](const httplib::Request& req, httplib::Response& res) {
                  const json body = parse_body(req, false);
                  if (!body.contains("winner") || !body["winner"].is_string()) {
                    throw SessionError(400, "invalid_winner", "winner must be 'challenger' or 'reference'");
                  }
                  const std::string tag = body["winner"].get<std::string>();
                  send_json(res, 200,
                            store.mutate(
                                req.matches[1], [&](const Session& s) { return s.prepare_preference(tag); },
                                [](const Session& s) { return s.iteration_json(); }));
                }));

    server.Get(R"(/sessions/([0-9a-f]+)/summary)",
               guarded([this](const httplib::Request& req, httplib::Response& res) {
                 std::size_t grid = 64;
                 if (req.has_param("grid")) {
                   try {
                     const long long g = parse_int(req.get_param_value("grid"), "grid");
                     if (g < 1) throw ConfigError("grid");
                     grid = static_cast<std::size_t>(g);
                   } catch (const ConfigError&) {
                     throw SessionError(400, "invalid_grid", "grid must be a positive integer");
                   }
                 }
                 send_json(res, 200, store.with_session(req.matches[1], [&](Session& s) { return s.summary_json(grid); }));
               }));

    server.Get(R"(/sessions/([0-9a-f]+)/trace)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const json csv = store.with_session(req.matches[1], [](Session& s) { return json(s.trace_csv()); });
      res.status = 200;
      res.set_content(csv.get<std::string>(), "text/csv");
    }));

    server.Post(R"(/sessions/([0-9a-f]+)/close)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      send_json(res, 200,
                store.mutate(
                    req.matches[1], [](const Session& s) { return s.prepare_close(); },
                    [](const Session& s) { return s.state_json(); }));
    }));

    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (res.body.empty()) {
        const std::string code = res.status == 404 ? "not_found" : "http_error";
        send_error(res, res.status, code, "no route for this request");
      }
    });
  }
};

HttpService::HttpService(SessionStore& store) : impl_(std::make_unique<Impl>(store)) {}

HttpService::~HttpService() = default;

int HttpService::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool HttpService::serve() { return impl_->server.listen_after_bind(); }

void HttpService::stop() { impl_->server.stop(); }

void HttpService::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace hetpbo
