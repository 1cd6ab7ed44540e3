#include "sca/errors.hpp"
#include "sca/protocol.hpp"

#include <doctest.h>
#include <httplib.h>

#include <chrono>
#include <thread>

using namespace sca;
using namespace sca::protocol;
using nlohmann::json;

TEST_CASE("envelope framing survives arbitrary splits") {
  const Envelope a{kCommand, "s0001", 4, {{"command", "MuInput"}, {"value", 5}}};
  const Envelope b{kHello, "", 0, {{"client", "test"}, {"text", "µ ✓"}}};
  const std::string bytes = encode(a) + encode(b);
  CHECK(static_cast<unsigned char>(bytes[0]) == 0);
  for (std::size_t cut = 0; cut <= bytes.size(); ++cut) {
    Decoder d;
    auto first = d.feed(bytes.substr(0, cut));
    auto rest = d.feed(bytes.substr(cut));
    first.insert(first.end(), rest.begin(), rest.end());
    REQUIRE(first.size() == 2);
    CHECK(first[0] == a);
    CHECK(first[1] == b);
    CHECK(d.buffered() == 0);
  }
}

TEST_CASE("decoder rejects oversized and malformed messages") {
  Decoder big;
  const std::string header = {'\x7f', '\x00', '\x00', '\x00'};
  CHECK_THROWS_AS(big.feed(header), ContractViolation);

  Decoder junk;
  const std::string body = "not json";
  std::string frame = {'\0', '\0', '\0', static_cast<char>(body.size())};
  CHECK_THROWS_AS(junk.feed(frame + body), ContractViolation);

  CHECK_THROWS_AS(Envelope::from_json({{"payload", {}}}), ContractViolation);
}

TEST_CASE("request bodies resolve scenarios and overrides") {
  const auto cfg = scenario_from_request({{"scenario", "sca1-harsh"}, {"alert", "late"}, {"seed", 9}});
  CHECK(cfg.label == "late");
  CHECK(cfg.seed == 9);
  const auto from_cfg = scenario_from_request({{"config", scenario::to_json(scenario::named_scenario("sca2-perf"))}});
  CHECK(from_cfg == scenario::named_scenario("sca2-perf"));
  CHECK_THROWS_AS(scenario_from_request({{"scenario", "nope"}}), ConfigError);
}

TEST_CASE("message handler: hello, start, command, errors") {
  session::SessionManager mgr;
  Connection conn;
  auto hello = handle_message(mgr, {kHello, "", 1, {}}, conn);
  REQUIRE(hello.size() == 1);
  CHECK(hello[0].type == kHello);
  CHECK(hello[0].payload.at("version") == kProtocolVersion);

  auto cmd = handle_message(mgr, {kCommand, "", 2, {{"command", "MuInput"}, {"value", 3}}}, conn);
  CHECK(cmd[0].type == kError);

  auto start = handle_message(mgr, {kStartSession, "", 3, {{"scenario", "sca2-perf"}, {"pilot", "human"}, {"pacing", 0.05}}},
                              conn);
  REQUIRE(start[0].type == kAck);
  const std::string id = start[0].payload.at("session");
  CHECK(start[0].payload.at("family") == "sca2");
  CHECK(conn.subscription != nullptr);

  auto mu = handle_message(mgr, {kCommand, "", 4, {{"command", "MuInput"}, {"value", 3}}}, conn);
  REQUIRE(mu[0].type == kAck);
  CHECK(mu[0].payload.at("accepted") == true);
  CHECK(mu[0].payload.at("ref") == 4);
  auto stick = handle_message(mgr, {kCommand, id, 5, {{"command", "Stick"}, {"value", 1}}}, conn);
  CHECK(stick[0].payload.at("accepted") == false);

  CHECK(handle_message(mgr, {"Bogus", "", 6, {}}, conn)[0].type == kError);
  CHECK(handle_message(mgr, {kHello, "", 7, {{"session", "missing"}}}, conn)[0].type == kError);
  mgr.shutdown();
}

TEST_CASE("duplex server streams telemetry and acknowledges commands") {
  session::SessionManager mgr;
  mgr.set_default_pacing(0.0);
  DuplexServer server(mgr);
  server.listen("127.0.0.1", 0);
  REQUIRE(server.port() > 0);

  DuplexClient client;
  client.connect("127.0.0.1", server.port());
  client.send({kStartSession, "", 1, {{"scenario", "sca2-train-mid"}, {"pilot", "human"}, {"pacing", 0.02}}});
  std::string id;
  long last_seq = -1;
  int frames = 0;
  bool acked_mu = false;
  bool sent_mu = false;
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(20);
  while (std::chrono::steady_clock::now() < deadline && !(acked_mu && frames > 20)) {
    auto env = client.receive(2000);
    REQUIRE(env.has_value());
    CHECK(env->seq > last_seq);
    last_seq = env->seq;
    if (env->type == kAck && env->payload.contains("session") && id.empty()) id = env->payload.at("session");
    if (env->type == kFrame) ++frames;
    if (!sent_mu && frames > 5) {
      client.send({kCommand, id, 2, {{"command", "MuInput"}, {"value", 6}}});
      sent_mu = true;
    }
    if (env->type == kAck && env->payload.value("command", "") == "MuInput") {
      CHECK(env->payload.at("accepted") == true);
      acked_mu = true;
    }
  }
  CHECK(acked_mu);
  CHECK(frames > 20);
  client.close();

  // the human channel went away: the session pauses
  auto s = mgr.get(id);
  for (int i = 0; i < 50 && s->status() == session::Status::running; ++i)
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  CHECK(s->status() == session::Status::paused);
  server.stop();
  mgr.shutdown();
}

TEST_CASE("duplex server reports a busy port") {
  session::SessionManager mgr;
  DuplexServer a(mgr), b(mgr);
  a.listen("127.0.0.1", 0);
  CHECK_THROWS_AS(b.listen("127.0.0.1", a.port()), std::runtime_error);
}

TEST_CASE("http api") {
  session::SessionManager mgr;
  HttpApi api(mgr);
  api.listen("127.0.0.1", 0);
  httplib::Client cli("127.0.0.1", api.port());

  auto health = cli.Get("/health");
  REQUIRE(health);
  CHECK(health->status == 200);
  auto scen = cli.Get("/scenarios");
  REQUIRE(scen);
  CHECK(json::parse(scen->body).size() >= 6);

  CHECK(cli.Post("/sessions", "{not json", "application/json")->status == 400);
  CHECK(cli.Post("/sessions", R"({"scenario":"sca9"})", "application/json")->status == 400);

  auto created = cli.Post("/sessions", R"({"scenario":"sca2-train-low","pacing":0})", "application/json");
  REQUIRE(created);
  CHECK(created->status == 201);
  const std::string id = json::parse(created->body).at("id");
  mgr.get(id)->wait();

  auto info = cli.Get("/sessions/" + id);
  CHECK(json::parse(info->body).at("status") == "complete");
  CHECK(cli.Get("/sessions/zzz")->status == 404);

  auto log = cli.Get("/sessions/" + id + "/log");
  REQUIRE(log);
  CHECK(log->status == 200);
  CHECK(log->body.find('\n') != std::string::npos);
  auto report = cli.Get("/sessions/" + id + "/report");
  REQUIRE(report);
  CHECK(report->status == 200);
  CHECK(json::parse(report->body).at("family") == "sca2");

  auto rejected = cli.Post("/sessions/" + id + "/commands", R"({"command":"MuInput","value":2})", "application/json");
  CHECK(rejected->status == 422);
  CHECK(cli.Post("/sessions/" + id + "/stop", "", "application/json")->status == 200);
  CHECK(json::parse(cli.Get("/sessions")->body).size() == 1);
  api.stop();
  mgr.shutdown();
}
