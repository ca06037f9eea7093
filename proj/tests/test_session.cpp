#include "hetpbo/service.hpp"
#include "hetpbo/session.hpp"

#include <doctest.h>
#include <httplib.h>

#include <cmath>
#include <filesystem>
#include <sstream>
#include <thread>

using namespace hetpbo;
using nlohmann::json;

namespace {

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("hetpbo_session_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

SessionConfig config_1d(double lower = 0.0, double upper = 1.0) {
  return SessionConfig::from_json(json{{"lower", {lower}}, {"upper", {upper}}, {"noise_scale", 0.1},
                                       {"seed", 7}, {"pool_size", 128}});
}

json mutate(SessionStore& store, const std::string& id, const std::function<json(const Session&)>& prepare) {
  return store.mutate(id, prepare, [](const Session& s) { return s.state_json(); });
}

int status_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const SessionError& e) {
    return e.status();
  }
  return 200;
}

void add_anchors(SessionStore& store, const std::string& id, const std::vector<double>& xs) {
  std::vector<DesignPoint> pts;
  for (double x : xs) pts.push_back(DesignPoint::Constant(1, x));
  mutate(store, id, [&](const Session& s) { return s.prepare_anchors(pts); });
}

json answer(SessionStore& store, const std::string& id, const std::string& tag) {
  return store.mutate(
      id, [&](const Session& s) { return s.prepare_preference(tag); },
      [](const Session& s) { return s.iteration_json(); });
}

json propose(SessionStore& store, const std::string& id) {
  return store.mutate(
      id, [](const Session& s) { return s.prepare_duel(); }, [](const Session& s) { return s.pending_json(); });
}

// Human who prefers the point closer to `target`.
std::string closer_to(const json& pending, double target) {
  const double c = pending["challenger"][0].get<double>();
  const double r = pending["reference"][0].get<double>();
  return std::abs(c - target) <= std::abs(r - target) ? "challenger" : "reference";
}

}  // namespace

TEST_CASE("creation validates the domain and yields distinct ids") {
  SessionStore store(fresh_dir("create"));
  const std::string a = store.create(config_1d());
  const std::string b = store.create(config_1d());
  CHECK(a != b);
  CHECK(store.ids().size() == 2);
  const json st = store.with_session(a, [](Session& s) { return s.state_json(); });
  CHECK(st["status"] == "collecting_anchors");
  CHECK(st["n_anchors"] == 0);
  CHECK(std::filesystem::exists(store.directory() / (a + ".jsonl")));

  CHECK(status_of([] { SessionConfig::from_json(json{{"lower", {1.0}}, {"upper", {0.0}}}); }) == 400);
  CHECK(status_of([] { SessionConfig::from_json(json{{"lower", {0.0}}}); }) == 400);
  CHECK(status_of([] { SessionConfig::from_json(json{{"lower", {0.0, 0.0}}, {"upper", {1.0}}}); }) == 400);
  CHECK(status_of([] { SessionConfig::from_json(json{{"lower", {0.0}}, {"upper", {1.0}}, {"noise_scale", 0.0}}); }) == 400);
  CHECK(status_of([] { SessionConfig::from_json(json{{"lower", {0.0}}, {"upper", {1.0}}, {"acquisition", "pi"}}); }) == 400);
  CHECK(status_of([] { SessionConfig::from_json(json{{"lower", {0.0}}, {"upper", {1.0}}, {"colour", 1}}); }) == 400);
  CHECK(status_of([&] { store.with_session("deadbeef", [](Session& s) { return s.state_json(); }); }) == 404);
}

TEST_CASE("anchors") {
  SessionStore store(fresh_dir("anchors"));
  const std::string id = store.create(config_1d(0.0, 2.0));
  add_anchors(store, id, {0.0, 1.0});
  const double h = store.with_session(id, [](Session& s) { return json(s.bandwidth()); }).get<double>();
  Matrix anchors(2, 1);
  anchors << 0.0, 1.0;
  const BoxDomain domain(Vector::Zero(1), Vector::Constant(1, 2.0));
  CHECK(h == loo_bandwidth(anchors, bandwidth_search_for(EngineSettings{}, domain)).bandwidth);

  add_anchors(store, id, {1.0});
  CHECK(store.with_session(id, [](Session& s) { return json(s.anchors().size()); }) == 3);
  const std::string before = store.with_session(id, [](Session& s) { return s.state_json(); }).dump();
  add_anchors(store, id, {});
  json after = store.with_session(id, [](Session& s) { return s.state_json(); });
  CHECK(after["n_anchors"] == 3);
  CHECK(after.dump() == before);

  try {
    add_anchors(store, id, {0.5, 2.5, -1.0});
    FAIL("out-of-domain anchors accepted");
  } catch (const SessionError& e) {
    CHECK(e.status() == 400);
    CHECK(std::string(e.what()).find("[1,2]") != std::string::npos);
  }
  CHECK(store.with_session(id, [](Session& s) { return json(s.anchors().size()); }) == 3);

  mutate(store, id, [](const Session& s) { return s.prepare_freeze(); });
  CHECK(status_of([&] { add_anchors(store, id, {0.5}); }) == 409);
  CHECK(status_of([&] { mutate(store, id, [](const Session& s) { return s.prepare_freeze(); }); }) == 409);

  const std::string empty = store.create(config_1d());
  CHECK(status_of([&] { mutate(store, empty, [](const Session& s) { return s.prepare_freeze(); }); }) == 409);
  CHECK(status_of([&] { propose(store, empty); }) == 409);
}

TEST_CASE("duel protocol") {
  SessionStore store(fresh_dir("duels"));
  const std::string id = store.create(config_1d());
  add_anchors(store, id, {0.2, 0.3, 0.35});
  mutate(store, id, [](const Session& s) { return s.prepare_freeze(); });

  CHECK(status_of([&] { answer(store, id, "challenger"); }) == 409);
  const json first = propose(store, id);
  CHECK(first["cold_start"] == true);
  const Matrix h = halton_points(2, 1);
  CHECK(first["challenger"][0].get<double>() == h(0, 0));
  CHECK(first["reference"][0].get<double>() == h(1, 0));
  CHECK(status_of([&] { propose(store, id); }) == 409);
  CHECK(status_of([&] { answer(store, id, "left"); }) == 400);

  const json it = answer(store, id, "reference");
  CHECK(it["n_duels"] == 1);
  CHECK(it["winner"] == "reference");
  CHECK(it["last_winner"][0].get<double>() == h(1, 0));
  for (const char* k : {"challenger", "reference"}) {
    CHECK(std::isfinite(it[k]["mu"].get<double>()));
    CHECK(it[k]["sigma2_hat"].get<double>() > 0.0);
  }
  CHECK(it.contains("incumbent"));
  CHECK(status_of([&] { answer(store, id, "challenger"); }) == 409);
  CHECK(store.with_session(id, [](Session& s) { return json(s.duels().size()); }) == 1);

  // The next cold-start pair continues the sequence.
  const json second = propose(store, id);
  const Matrix h4 = halton_points(4, 1);
  CHECK(second["challenger"][0].get<double>() == h4(2, 0));
  CHECK(second["reference"][0].get<double>() == h4(3, 0));
}

TEST_CASE("summary") {
  SessionStore store(fresh_dir("summary"));
  const std::string id = store.create(config_1d());
  add_anchors(store, id, {0.1, 0.15, 0.6});
  CHECK(status_of([&] { store.with_session(id, [](Session& s) { return s.summary_json(5); }); }) == 409);
  mutate(store, id, [](const Session& s) { return s.prepare_freeze(); });

  const json prior = store.with_session(id, [](Session& s) { return s.summary_json(5); });
  REQUIRE(prior["grid"].size() == 5);
  for (const json& r : prior["grid"]) CHECK(r["mu"].get<double>() == 0.0);
  CHECK(prior["incumbent"].is_null());

  for (int i = 0; i < 3; ++i) {
    propose(store, id);
    answer(store, id, "challenger");
  }
  propose(store, id);
  const json s = store.with_session(id, [](Session& s) { return s.summary_json(5); });
  REQUIRE(s["grid"].size() == 5);
  CHECK_FALSE(s["pending"].is_null());
  CHECK_FALSE(s["incumbent"].is_null());
  Matrix anchors(3, 1);
  anchors << 0.1, 0.15, 0.6;
  const double h = s["bandwidth"].get<double>();
  const AnchorModel model(anchors, h, 0.1);
  const Matrix u = halton_points(5, 1);
  for (std::size_t i = 0; i < 5; ++i) {
    const json& r = s["grid"][i];
    CHECK(r["x"][0].get<double>() == u(static_cast<Eigen::Index>(i), 0));
    for (const char* k : {"mu", "sigma", "sigma2_hat", "acquisition"}) CHECK(std::isfinite(r[k].get<double>()));
    CHECK(r["sigma2_hat"].get<double>() ==
          doctest::Approx(model.variance(DesignPoint::Constant(1, r["x"][0].get<double>()))).epsilon(1e-12));
  }
  CHECK(status_of([&] { store.with_session(id, [](Session& s) { return s.summary_json(0); }); }) == 400);
}

TEST_CASE("scripted human steers the incumbent") {
  SessionStore store(fresh_dir("steer"));
  const std::string id = store.create(config_1d());
  add_anchors(store, id, {0.2, 0.5, 0.8});
  mutate(store, id, [](const Session& s) { return s.prepare_freeze(); });
  json it;
  for (int i = 0; i < 5; ++i) {
    const json p = propose(store, id);
    it = answer(store, id, closer_to(p, 0.9));
  }
  CHECK(it["incumbent"]["x"][0].get<double>() > 0.6);
}

TEST_CASE("session proposals match the engine given the same duels and seed") {
  SessionStore store(fresh_dir("engine"));
  const SessionConfig config = config_1d();
  const std::string id = store.create(config);
  add_anchors(store, id, {0.2, 0.5, 0.8});
  mutate(store, id, [](const Session& s) { return s.prepare_freeze(); });
  for (int i = 0; i < 4; ++i) answer(store, id, closer_to(propose(store, id), 0.3));
  const json p = propose(store, id);
  CHECK(p["cold_start"] == false);

  DuelDataset data(1);
  std::vector<DesignPoint> anchors;
  store.with_session(id, [&](Session& s) {
    for (const DuelRecord& r : s.duels().records()) data.add(r.winner, r.loser);
    anchors = s.anchors();
    return json();
  });
  const double h = anchor_bandwidth(stack_rows(anchors), config.domain, config.engine);
  const AnchorModel model(stack_rows(anchors), h, config.noise_scale);
  Rng rng = proposal_stream(config.seed, 4);
  const EngineStep step = engine_step(data, model, config.domain, queried_points(data),
                                      data.records().back().winner, config.engine, rng);
  CHECK(p["challenger"][0].get<double>() == step.proposal.challenger[0]);
  CHECK(p["reference"][0].get<double>() == step.proposal.reference[0]);
}

TEST_CASE("restart replays the event log") {
  const auto dir = fresh_dir("replay");
  std::string id, state, trace, summary;
  {
    SessionStore store(dir);
    id = store.create(config_1d());
    add_anchors(store, id, {0.2, 0.2, 0.7});
    mutate(store, id, [](const Session& s) { return s.prepare_freeze(); });
    for (int i = 0; i < 4; ++i) answer(store, id, closer_to(propose(store, id), 0.25));
    propose(store, id);
    state = store.with_session(id, [](Session& s) { return s.state_json(); }).dump();
    trace = store.with_session(id, [](Session& s) { return json(s.trace_csv()); }).get<std::string>();
    summary = store.with_session(id, [](Session& s) { return s.summary_json(7); }).dump();
  }
  SessionStore again(dir);
  CHECK(again.with_session(id, [](Session& s) { return s.state_json(); }).dump() == state);
  CHECK(again.with_session(id, [](Session& s) { return json(s.trace_csv()); }).get<std::string>() == trace);
  CHECK(again.with_session(id, [](Session& s) { return s.summary_json(7); }).dump() == summary);
  // The replayed session proposes exactly what the original would have.
  answer(again, id, "challenger");
  const json next = propose(again, id);
  SessionStore third(dir);
  const std::string log_state = third.with_session(id, [](Session& s) { return s.state_json(); }).dump();
  CHECK(json::parse(log_state)["pending"] == next);

  // A torn final line is ignored.
  {
    std::ofstream log(dir / (id + ".jsonl"), std::ios::app);
    log << "{\"type\":\"duel_ans";
  }
  SessionStore torn(dir);
  CHECK(torn.with_session(id, [](Session& s) { return s.state_json(); }).dump() == log_state);
}

TEST_CASE("trace uses the harness schema") {
  SessionStore store(fresh_dir("trace"));
  const std::string id = store.create(config_1d());
  add_anchors(store, id, {0.4, 0.6});
  mutate(store, id, [](const Session& s) { return s.prepare_freeze(); });
  for (int i = 0; i < 4; ++i) {
    propose(store, id);
    answer(store, id, "challenger");
  }
  std::istringstream in(store.with_session(id, [](Session& s) { return json(s.trace_csv()); }).get<std::string>());
  const TraceTable t = read_trace(in);
  CHECK(t.header == trace_header(1, {}));
  REQUIRE(t.values.rows() == 4);
  CHECK_FALSE(t.aborted);
  const json st = store.with_session(id, [](Session& s) { return s.state_json(); });
  for (Eigen::Index i = 0; i < 4; ++i) {
    CHECK(t.values(i, static_cast<Eigen::Index>(t.column("iteration"))) == static_cast<double>(i + 1));
    CHECK(t.values(i, static_cast<Eigen::Index>(t.column("challenger_won"))) == 1.0);
    CHECK(t.values(i, static_cast<Eigen::Index>(t.column("x_1"))) ==
          st["duels"][static_cast<std::size_t>(i)]["winner"][0].get<double>());
    CHECK(std::isnan(t.values(i, static_cast<Eigen::Index>(t.column("simple_regret")))));
  }
  CHECK(std::isnan(t.column_values("lengthscale")[0]));
  CHECK(t.column_values("lengthscale")[3] > 0.0);
}

TEST_CASE("closed sessions") {
  SessionStore store(fresh_dir("closed"));
  const std::string id = store.create(config_1d());
  add_anchors(store, id, {0.4, 0.6});
  mutate(store, id, [](const Session& s) { return s.prepare_freeze(); });
  mutate(store, id, [](const Session& s) { return s.prepare_close(); });
  CHECK(status_of([&] { propose(store, id); }) == 410);
  CHECK(status_of([&] { store.with_session(id, [](Session& s) { return s.summary_json(5); }); }) == 410);
  CHECK(status_of([&] { add_anchors(store, id, {0.5}); }) == 410);
  CHECK(status_of([&] { mutate(store, id, [](const Session& s) { return s.prepare_close(); }); }) == 410);
  CHECK(store.with_session(id, [](Session& s) { return s.state_json(); })["status"] == "closed");
}

TEST_CASE("HTTP interface") {
  SessionStore store(fresh_dir("http"));
  HttpService service(store);
  const int port = service.bind("127.0.0.1", 0);
  REQUIRE(port > 0);
  std::thread server([&] { service.serve(); });
  service.wait_until_ready();
  httplib::Client cli("127.0.0.1", port);
  const auto body = [](const httplib::Result& r) { return json::parse(r->body); };

  auto r = cli.Post("/sessions", R"({"lower":[0],"upper":[2],"noise_scale":0.1,"seed":3,"pool_size":64})",
                    "application/json");
  REQUIRE(r);
  CHECK(r->status == 201);
  CHECK(r->get_header_value("Access-Control-Allow-Origin") == "*");
  const std::string id = body(r)["id"];
  CHECK(body(r)["status"] == "collecting_anchors");

  r = cli.Post("/sessions", R"({"lower":[1],"upper":[0]})", "application/json");
  CHECK(r->status == 400);
  CHECK(body(r)["code"] == "invalid_domain");
  CHECK(body(r).contains("message"));
  r = cli.Post("/sessions", "not json", "application/json");
  CHECK(r->status == 400);

  r = cli.Post("/sessions/" + id + "/anchors", R"({"points":[[0],[1]]})", "application/json");
  CHECK(r->status == 200);
  CHECK(body(r)["n_anchors"] == 2);
  Matrix anchors(2, 1);
  anchors << 0.0, 1.0;
  const BoxDomain domain(Vector::Zero(1), Vector::Constant(1, 2.0));
  CHECK(body(r)["bandwidth"].get<double>() == loo_bandwidth(anchors, bandwidth_search_for(EngineSettings{}, domain)).bandwidth);
  r = cli.Post("/sessions/" + id + "/anchors", R"({"points":[[3]]})", "application/json");
  CHECK(r->status == 400);
  CHECK(body(r)["code"] == "out_of_domain");

  r = cli.Get("/sessions/" + id + "/duel");
  CHECK(r->status == 409);
  r = cli.Post("/sessions/" + id + "/freeze", "", "application/json");
  CHECK(r->status == 200);
  CHECK(body(r)["status"] == "active");

  r = cli.Get("/sessions/" + id + "/summary?grid=5");
  CHECK(r->status == 200);
  CHECK(body(r)["grid"].size() == 5);
  r = cli.Get("/sessions/" + id + "/summary?grid=abc");
  CHECK(r->status == 400);

  r = cli.Get("/sessions/" + id + "/duel");
  CHECK(r->status == 200);
  CHECK(body(r)["cold_start"] == true);
  CHECK(cli.Get("/sessions/" + id + "/duel")->status == 409);
  r = cli.Post("/sessions/" + id + "/preference", R"({"winner":"sideways"})", "application/json");
  CHECK(r->status == 400);
  r = cli.Post("/sessions/" + id + "/preference", R"({"winner":"challenger"})", "application/json");
  CHECK(r->status == 200);
  CHECK(body(r)["n_duels"] == 1);
  CHECK(cli.Post("/sessions/" + id + "/preference", R"({"winner":"challenger"})", "application/json")->status == 409);

  r = cli.Get("/sessions/" + id + "/trace");
  CHECK(r->status == 200);
  CHECK(r->get_header_value("Content-Type") == "text/csv");
  std::istringstream in(r->body);
  const TraceTable t = read_trace(in);
  CHECK(t.header == trace_header(1, {}));
  REQUIRE(t.values.rows() == 1);
  CHECK(t.column_values("challenger_won")[0] == 1.0);
  CHECK(std::isnan(t.column_values("f")[0]));
  CHECK(t.column_values("sigma2_hat")[0] > 0.0);

  r = cli.Get("/sessions");
  CHECK(body(r)["sessions"] == json::array({id}));
  CHECK(cli.Get("/sessions/0123abcd")->status == 404);
  CHECK(cli.Get("/nowhere")->status == 404);
  r = cli.Options("/sessions");
  CHECK(r->status == 204);
  CHECK(r->get_header_value("Access-Control-Allow-Methods").find("POST") != std::string::npos);

  CHECK(cli.Post("/sessions/" + id + "/close", "", "application/json")->status == 200);
  r = cli.Get("/sessions/" + id + "/duel");
  CHECK(r->status == 410);
  CHECK(body(r)["code"] == "session_closed");
  CHECK(cli.Get("/sessions/" + id + "/summary?grid=5")->status == 410);

  service.stop();
  server.join();
}
