#include <gtest/gtest.h>

#include <thread>

#include "common.hpp"
#include "diagnosys/eval.hpp"
#include "diagnosys/service.hpp"
#include "local_server.hpp"

using namespace diagnosys;
using json = nlohmann::json;

namespace {

struct Http {
  explicit Http(const std::string& url) : client(url) {}
  std::pair<int, json> post(const std::string& path, const json& body) {
    auto res = client.Post(path, body.dump(), "application/json");
    if (!res) return {0, {{"transport", httplib::to_string(res.error())}}};
    return {res->status, json::parse(res->body, nullptr, false)};
  }
  std::pair<int, json> get(const std::string& path) {
    auto res = client.Get(path);
    if (!res) return {0, {}};
    return {res->status, json::parse(res->body, nullptr, false)};
  }
  httplib::Client client;
};

/// Plays a simulated patient against the HTTP API; returns the final report.
json drive_over_http(Http& http, const SimCase& c) {
  auto [st, created] = http.post("/api/v1/sessions", {{"text", c.opening_text()}});
  EXPECT_EQ(st, 201) << created.dump();
  if (st != 201) return {};
  const std::string base = "/api/v1/sessions/" + created["session_id"].get<std::string>();
  json next = created["next_question"];
  for (int guard = 0; guard < 200 && next["type"] != "report_ready"; ++guard) {
    std::pair<int, json> r;
    if (next["type"] == "question") {
      r = http.post(base + "/answer",
                    {{"question_id", next["id"]}, {"answer", c.has(next["canonical"].get<std::string>()) ? "yes" : "no"}});
    } else if (next["type"] == "test") {
      auto it = c.test_values.find(next["test_id"].get<std::string>());
      json value = it != c.test_values.end() && it->second ? json(*it->second) : json("unknown");
      r = http.post(base + "/test-result", {{"test_id", next["test_id"]}, {"value", value}});
    } else {
      r = http.post(base + "/answer", {{"question_id", next["id"]}, {"answer", "no"}});
    }
    EXPECT_EQ(r.first, 200) << r.second.dump();
    if (r.first != 200) break;
    next = r.second["next"].is_null() ? r.second["next_question"] : r.second["next"];
  }
  auto [rs, report] = http.get(base + "/report");
  EXPECT_EQ(rs, 200) << report.dump();
  return report;
}

struct FakeClock {
  std::chrono::steady_clock::time_point now{};
  Clock fn() {
    return [this] { return now; };
  }
};

}  // namespace

TEST(Service, HealthAndDiseaseListing) {
  ConsultationService svc(testkit::bundled(), EngineConfig{});
  auto h = svc.healthz();
  EXPECT_EQ(h.status, 200);
  EXPECT_EQ(h.body, (json{{"status", "ok"}, {"kb_diseases", 14}}));
  auto d = svc.kb_diseases();
  ASSERT_EQ(d.body["diseases"].size(), 14u);
  EXPECT_TRUE(d.body["diseases"][0].contains("category"));
}

TEST(Service, HttpStatusMapping) {
  EXPECT_EQ(http_status(ErrorCode::unknown_session), 404);
  EXPECT_EQ(http_status(ErrorCode::stale_question), 409);
  EXPECT_EQ(http_status(ErrorCode::wrong_phase), 409);
  EXPECT_EQ(http_status(ErrorCode::non_finite_value), 422);
  EXPECT_EQ(http_status(ErrorCode::empty_evidence), 422);
  EXPECT_EQ(http_status(ErrorCode::capacity_exceeded), 503);
  EXPECT_EQ(http_status(ErrorCode::provider_unavailable), 502);
}

TEST(Service, SessionLifecycleThroughHandlers) {
  ConsultationService svc(testkit::toy(), EngineConfig{});
  auto created = svc.create_session(json::object());
  ASSERT_EQ(created.status, 201);
  EXPECT_TRUE(created.body.contains("greeting"));
  const std::string id = created.body["session_id"];
  EXPECT_EQ(id.size(), 32u);
  EXPECT_EQ(created.body["phase"], "symptom_elicitation");

  auto attr = svc.get_attribution(id);
  EXPECT_EQ(attr.status, 422);
  EXPECT_EQ(attr.body["error"], "EmptyEvidence");

  auto msg = svc.post_message(id, {{"text", "high temperature and a skin rash, also moon fever"}});
  ASSERT_EQ(msg.status, 200) << msg.body.dump();
  EXPECT_EQ(msg.body["confirmed"], (json{"fever", "rash"}));
  EXPECT_EQ(msg.body["state"]["confirmed"].size(), 2u);

  auto s1 = svc.get_state(id), s2 = svc.get_state(id);
  EXPECT_EQ(s1.body, s2.body);  // reads do not change anything

  const std::string qid = msg.body["next_question"]["id"];
  auto stale = svc.post_answer(id, {{"question_id", "q999"}, {"answer", "yes"}});
  EXPECT_EQ(stale.status, 409);
  EXPECT_EQ(stale.body["error"], "StaleQuestion");
  EXPECT_EQ(svc.post_answer(id, {{"question_id", qid}, {"answer", "perhaps"}}).status, 422);
  auto ok = svc.post_answer(id, {{"question_id", qid}, {"answer", "yes"}});
  EXPECT_EQ(ok.status, 200);
  EXPECT_EQ(svc.post_answer(id, {{"question_id", qid}, {"answer", "yes"}}).status, 409);  // replay

  EXPECT_EQ(svc.get_report(id).status, 409);
  EXPECT_EQ(svc.post_test_result(id, {{"test_id", "ta"}, {"value", 1}}).status, 409);

  auto attr2 = svc.get_attribution(id);
  ASSERT_EQ(attr2.status, 200);
  EXPECT_EQ(attr2.body["rows"][0]["kind"], "confirmed");

  EXPECT_EQ(svc.get_state("deadbeef").status, 404);
}

TEST(Service, TestPhaseValuesAndReport) {
  EngineConfig cfg;
  cfg.min_questions = 0;
  cfg.min_symptoms = 2;
  ConsultationService svc(testkit::toy(), cfg);
  auto created = svc.create_session({{"text", "wheeze and cough"}});
  ASSERT_EQ(created.status, 201);
  EXPECT_TRUE(created.body["phase_transition"].get<bool>());
  EXPECT_EQ(created.body["phase"], "test_evaluation");
  const std::string id = created.body["session_id"];
  json next = created.body["next_question"];
  ASSERT_EQ(next["type"], "test");
  EXPECT_EQ(svc.post_message(id, {{"text", "fever"}}).status, 409);
  auto inf = svc.post_test_result(id, {{"test_id", next["test_id"]}, {"value", std::numeric_limits<double>::infinity()}});
  EXPECT_EQ(inf.status, 422);
  EXPECT_EQ(inf.body["error"], "NonFiniteValue");
  EXPECT_EQ(svc.post_test_result(id, {{"test_id", "zz"}, {"value", 1}}).status, 422);
  EXPECT_EQ(svc.post_test_result(id, {{"test_id", next["test_id"]}, {"value", "lots"}}).status, 422);
  while (next["type"] != "report_ready") {
    Response r = next["type"] == "test"
                     ? svc.post_test_result(id, {{"test_id", next["test_id"]}, {"value", "unknown"}})
                     : svc.post_answer(id, {{"question_id", next["id"]}, {"answer", "unsure"}});
    ASSERT_EQ(r.status, 200) << r.body.dump();
    next = r.body["next"];
  }
  auto report = svc.get_report(id);
  ASSERT_EQ(report.status, 200);
  EXPECT_EQ(report.body["most_likely"]["disease"], "Gamma");
  EXPECT_EQ(report.body["phase"], "concluded");
  EXPECT_NE(report.body["text"].get<std::string>().find("Gamma"), std::string::npos);
  EXPECT_EQ(svc.get_report(id).body, report.body);
  EXPECT_EQ(svc.post_message(id, {{"text", "rash"}}).status, 409);
}

TEST(SessionStoreTest, IdleSessionsExpire) {
  FakeClock clock;
  ServiceOptions opts;
  opts.clock = clock.fn();
  ConsultationService svc(testkit::toy(), EngineConfig{}, opts);
  const std::string id = svc.create_session({}).body["session_id"];
  clock.now += std::chrono::minutes(29);
  EXPECT_EQ(svc.get_state(id).status, 200);  // touching resets the idle timer
  clock.now += std::chrono::minutes(29);
  EXPECT_EQ(svc.get_state(id).status, 200);
  clock.now += std::chrono::minutes(30) + std::chrono::seconds(1);
  auto gone = svc.get_state(id);
  EXPECT_EQ(gone.status, 404);
  EXPECT_EQ(gone.body["error"], "UnknownSession");
  EXPECT_EQ(svc.store().size(), 0u);
}

TEST(SessionStoreTest, CapacityAndPurge) {
  FakeClock clock;
  ServiceOptions opts;
  opts.clock = clock.fn();
  opts.capacity = 2;
  ConsultationService svc(testkit::toy(), EngineConfig{}, opts);
  EXPECT_EQ(svc.create_session({}).status, 201);
  EXPECT_EQ(svc.create_session({}).status, 201);
  auto full = svc.create_session({});
  EXPECT_EQ(full.status, 503);
  EXPECT_EQ(full.body["error"], "CapacityExceeded");
  clock.now += std::chrono::hours(1);
  EXPECT_EQ(svc.create_session({}).status, 201);  // expired sessions were purged
  EXPECT_EQ(svc.store().size(), 1u);
}

TEST(SessionStoreTest, IdsAreRandomHex) {
  std::set<std::string> ids;
  for (int i = 0; i < 1000; ++i) {
    auto id = random_session_id();
    ASSERT_EQ(id.size(), 32u);
    ASSERT_EQ(id.find_first_not_of("0123456789abcdef"), std::string::npos);
    ids.insert(id);
  }
  EXPECT_EQ(ids.size(), 1000u);
}

TEST(HttpApi, ScriptedDenguePatient) {
  ConsultationService svc(testkit::bundled(), EngineConfig{});
  testkit::LocalServer server([&](httplib::Server& s) { mount_routes(s, svc); });
  Http http(server.url());
  auto [hs, health] = http.get("/healthz");
  EXPECT_EQ(hs, 200);
  EXPECT_EQ(health["kb_diseases"], 14);

  const auto cases = generate_cases(testkit::bundled()->kb(), 1, 42);
  const auto it = std::find_if(cases.begin(), cases.end(), [](auto& c) { return c.true_disease == "Dengue Fever"; });
  ASSERT_NE(it, cases.end());
  auto report = drive_over_http(http, *it);
  std::vector<std::string> top{report["most_likely"]["disease"].get<std::string>()};
  for (auto& r : report["runners_up"]) top.push_back(r["disease"].get<std::string>());
  EXPECT_NE(std::find(top.begin(), top.end(), "Dengue Fever"), top.end()) << report.dump(2);
}

TEST(HttpApi, TransportErrorsAndCors) {
  ServiceOptions opts;
  opts.cors_origin = "http://localhost:3000";
  ConsultationService svc(testkit::toy(), EngineConfig{}, opts);
  testkit::LocalServer server([&](httplib::Server& s) { mount_routes(s, svc); });
  httplib::Client cli(server.url());
  auto bad = cli.Post("/api/v1/sessions", "{not json", "application/json");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 400);
  auto empty = cli.Post("/api/v1/sessions", "", "application/json");
  ASSERT_TRUE(empty);
  EXPECT_EQ(empty->status, 201);
  EXPECT_EQ(empty->get_header_value("Access-Control-Allow-Origin"), "http://localhost:3000");
  auto pre = cli.Options("/api/v1/sessions");
  ASSERT_TRUE(pre);
  EXPECT_EQ(pre->status, 204);
  auto missing = cli.Get("/api/v1/sessions/abc123/state");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);
  auto huge = cli.Post("/api/v1/sessions/abc123/test-result", R"({"test_id":"ta","value":1e999})", "application/json");
  ASSERT_TRUE(huge);
  EXPECT_TRUE(huge->status == 404 || huge->status == 400);  // unknown session checked before the value
}

TEST(HttpApi, OverflowingValueIsRejected) {
  EngineConfig cfg;
  cfg.min_questions = 0;
  cfg.min_symptoms = 1;
  ConsultationService svc(testkit::toy(), cfg);
  testkit::LocalServer server([&](httplib::Server& s) { mount_routes(s, svc); });
  Http http(server.url());
  auto [st, created] = http.post("/api/v1/sessions", {{"text", "wheeze"}});
  ASSERT_EQ(st, 201);
  ASSERT_EQ(created["next_question"]["type"], "test");
  const std::string path = "/api/v1/sessions/" + created["session_id"].get<std::string>() + "/test-result";
  auto res = http.client.Post(path, R"({"test_id":")" + created["next_question"]["test_id"].get<std::string>() +
                                        R"(","value":1e999})", "application/json");
  ASSERT_TRUE(res);
  // nlohmann reads 1e999 as infinity, or refuses the body outright
  EXPECT_TRUE(res->status == 422 || res->status == 400) << res->status << " " << res->body;
  auto state = http.get(path.substr(0, path.rfind('/')) + "/state");
  EXPECT_TRUE(state.second["state"]["test_outcomes"].empty());
}

TEST(HttpApi, ConcurrentSessionsStayIsolated) {
  const auto ctx = testkit::bundled();
  ConsultationService svc(ctx, EngineConfig{});
  testkit::LocalServer server([&](httplib::Server& s) { mount_routes(s, svc); });
  auto cases = generate_cases(ctx->kb(), 4, 77);
  cases.resize(50);
  std::vector<json> reports(cases.size());
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < cases.size(); ++i)
    threads.emplace_back([&, i] {
      Http http(server.url());
      reports[i] = drive_over_http(http, cases[i]);
    });
  for (auto& t : threads) t.join();
  EXPECT_EQ(svc.store().size(), 50u);
  for (std::size_t i = 0; i < cases.size(); ++i) {
    // Same patient offline must give the same ranking and transcript.
    const auto offline = run_consultation(cases[i], ctx, EngineConfig{});
    std::vector<std::string> top{reports[i]["most_likely"]["disease"].get<std::string>()};
    for (auto& r : reports[i]["runners_up"]) top.push_back(r["disease"].get<std::string>());
    EXPECT_EQ(top, offline.predicted_top3) << i;
    auto digest = reports[i]["transcript_digest"].get<std::vector<std::string>>();
    // the offline transcript also holds the closing phase change and report marker
    ASSERT_EQ(offline.transcript.size(), digest.size() + 2) << i;
    EXPECT_TRUE(std::equal(digest.begin(), digest.end(), offline.transcript.begin())) << i;
  }
}
