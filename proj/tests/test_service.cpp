#include <adaptest/service.hpp>

#include <gtest/gtest.h>

#include <atomic>
#include <fstream>
#include <thread>

using namespace adaptest;
using namespace std::chrono_literals;
using nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::string bank_text(const std::string& name) { return read_file(std::string(ADAPTEST_DATA_DIR) + "/banks/" + name); }

template <class F>
ServiceOptions options(F set) {
  ServiceOptions o;
  set(o);
  return o;
}

struct Fixture {
  AttemptStore store;
  TimePoint now = parse_iso8601("2020-03-02T09:00:00Z");
  Service svc;
  ItemBank demo;

  explicit Fixture(ServiceOptions opt = {})
      : svc(store, with_clock(std::move(opt))) {
    std::istringstream in(bank_text("fig1_demo.json"));
    demo = load_bank(in);
    svc.add_bank(demo);
  }

  ServiceOptions with_clock(ServiceOptions opt) {
    opt.clock = [this] { return now; };
    if (!opt.id_seed) opt.id_seed = 42;
    return opt;
  }

  Response call(const std::string& method, const std::string& path, const json& body = nullptr,
                std::map<std::string, std::string> query = {}, std::string auth = "") {
    Request r{method, path, body.is_null() ? "" : body.dump(), std::move(query), std::move(auth)};
    return svc.handle(r);
  }

  Response start(json extra = json::object()) {
    json body = {{"bank_id", "fig1-demo"}, {"student_id", "s1"}, {"cohort_id", "live"}};
    body.update(extra);
    return call("POST", "/sessions", body);
  }

  std::size_t correct_choice(const json& question) const {
    return demo.find(question["item_id"].get<std::string>())->choice().correct_index;
  }
};

}  // namespace

TEST(ServiceBanks, ListGetAndUpload) {
  Fixture f;
  auto list = f.call("GET", "/banks");
  EXPECT_EQ(list.status, 200);
  ASSERT_EQ(list.body.size(), 1u);
  EXPECT_EQ(list.body[0]["bank_id"], "fig1-demo");
  EXPECT_EQ(list.body[0]["num_levels"], 3);

  EXPECT_EQ(f.call("GET", "/banks/fig1-demo").status, 200);
  auto missing = f.call("GET", "/banks/nope");
  EXPECT_EQ(missing.status, 404);
  EXPECT_EQ(missing.body["error"], "unknown-bank");

  Request up{"POST", "/banks", bank_text("dwtf_theory.json"), {}, ""};
  auto created = f.svc.handle(up);
  EXPECT_EQ(created.status, 201);
  EXPECT_EQ(f.call("GET", "/banks").body.size(), 2u);
  EXPECT_EQ(f.svc.handle(up).status, 201);  // identical re-upload is accepted
}

TEST(ServiceBanks, UploadErrors) {
  Fixture f;
  auto malformed = f.svc.handle({"POST", "/banks", "{not json", {}, ""});
  EXPECT_EQ(malformed.status, 400);
  EXPECT_EQ(malformed.body["error"], "malformed-bank");

  auto doc = json::parse(bank_text("fig1_demo.json"));
  doc["items"][0]["choice"]["correct_index"] = 9;
  auto invalid = f.svc.handle({"POST", "/banks", doc.dump(), {}, ""});
  EXPECT_EQ(invalid.status, 422);
  EXPECT_EQ(invalid.body["error"], "invalid-bank");
  EXPECT_EQ(invalid.body["item_id"], "demo-L1-01");

  doc = json::parse(bank_text("fig1_demo.json"));
  doc["title"] = "another title";
  auto conflict = f.svc.handle({"POST", "/banks", doc.dump(), {}, ""});
  EXPECT_EQ(conflict.status, 409);
  EXPECT_EQ(conflict.body["error"], "bank-exists");
}

TEST(ServiceSessions, QuestionPayloadHidesLevelAndAnswer) {
  Fixture f;
  auto r = f.start();
  ASSERT_EQ(r.status, 201) << r.body.dump();
  const auto& q = r.body["question"];
  EXPECT_EQ(q["k"], 1);
  EXPECT_EQ(q["n_questions"], 6);
  EXPECT_EQ(q["kind"], "multiple-answer");
  EXPECT_EQ(q["options"].size(), 4u);
  EXPECT_EQ(q["remaining_s"], 900);
  for (const char* hidden : {"level", "correct_index", "correct", "expected", "tolerance", "choice"})
    EXPECT_FALSE(q.contains(hidden)) << hidden;
  EXPECT_EQ(r.body["expires_at"], "2020-03-02T09:15:00Z");

  auto again = f.call("GET", "/sessions/" + r.body["session_id"].get<std::string>() + "/question");
  EXPECT_EQ(again.status, 200);
  EXPECT_EQ(again.body["item_id"], q["item_id"]);
}

TEST(ServiceSessions, FullCorrectRunIsRecordedOnce) {
  Fixture f;
  auto r = f.start({{"config", {{"feedback", true}}}});
  ASSERT_EQ(r.status, 201);
  EXPECT_EQ(r.body["feedback_enabled"], true);
  std::string id = r.body["session_id"];
  json q = r.body["question"];
  json last;
  for (int k = 1; k <= 6; ++k) {
    f.now += 20s;
    auto a = f.call("POST", "/sessions/" + id + "/answer", {{"choice", f.correct_choice(q)}});
    ASSERT_EQ(a.status, 200) << a.body.dump();
    EXPECT_EQ(a.body["feedback"]["correct"], true);
    EXPECT_EQ(a.body["finished"], k == 6);
    if (k < 6) q = a.body["question"];
    last = a.body;
  }
  EXPECT_EQ(last["result"]["status"], "finished");
  EXPECT_DOUBLE_EQ(last["result"]["final_grade"].get<double>(), 10.0);
  EXPECT_EQ(last["result"]["answered"], 6);

  ASSERT_EQ(f.store.size(), 1u);
  auto rec = f.store.snapshot()[0];
  EXPECT_EQ(rec.attempt_id, id);
  EXPECT_EQ(rec.student_id, "s1");
  EXPECT_EQ(rec.test_id, "fig1-demo");
  EXPECT_TRUE(rec.finished);
  EXPECT_EQ(rec.items.size(), 6u);

  auto closed = f.call("POST", "/sessions/" + id + "/answer", {{"choice", 0}});
  EXPECT_EQ(closed.status, 410);
  EXPECT_EQ(closed.body["error"], "session-closed");
  EXPECT_EQ(closed.body["result"]["status"], "finished");
  EXPECT_EQ(f.store.size(), 1u);
}

TEST(ServiceSessions, FeedbackCanBeDisabled) {
  Fixture f;
  EXPECT_EQ(f.start().body["feedback_enabled"], true);
  auto r = f.start({{"config", {{"feedback", false}}}});
  EXPECT_EQ(r.body["feedback_enabled"], false);
  auto a = f.call("POST", "/sessions/" + r.body["session_id"].get<std::string>() + "/answer", {{"choice", 0}});
  ASSERT_EQ(a.status, 200);
  EXPECT_FALSE(a.body.contains("feedback"));
}

TEST(ServiceSessions, RequestErrors) {
  Fixture f;
  EXPECT_EQ(f.call("POST", "/sessions", {{"bank_id", "nope"}}).status, 404);
  EXPECT_EQ(f.svc.handle({"POST", "/sessions", "[1,2", {}, ""}).status, 400);
  auto stray = f.call("POST", "/sessions", {{"bank_id", "fig1-demo"}, {"colour", "red"}});
  EXPECT_EQ(stray.status, 400);
  EXPECT_EQ(stray.body["error"], "malformed-request");
  auto cfg = f.start({{"config", {{"n_questions", 0}}}});
  EXPECT_EQ(cfg.status, 422);
  EXPECT_EQ(cfg.body["error"], "invalid-config");
  EXPECT_EQ(f.start({{"config", {{"mode", "sideways"}}}}).status, 422);

  std::string id = f.start().body["session_id"];
  auto path = "/sessions/" + id + "/answer";
  for (const json& bad : {json{{"choice", -1}}, json{{"choice", 1.5}}, json{{"choice", 0}, {"value", 1}},
                          json::object(), json{{"value", "x"}}, json{{"choice", 99}}}) {
    auto a = f.call("POST", path, bad);
    EXPECT_EQ(a.status, 400) << bad.dump();
    EXPECT_EQ(a.body["error"], "malformed-answer") << bad.dump();
  }
  EXPECT_EQ(f.call("GET", "/sessions/" + id + "/question").body["k"], 1);

  EXPECT_EQ(f.call("POST", "/sessions/nope/answer", {{"choice", 0}}).body["error"], "unknown-session");
  EXPECT_EQ(f.call("GET", "/nothing").status, 404);
  EXPECT_EQ(f.call("DELETE", "/banks").status, 404);
}

TEST(ServiceSessions, ExpiryClosesAndRecordsUnfinished) {
  Fixture f;
  std::string id = f.start({{"config", {{"time_limit_s", 60}}}}).body["session_id"];
  f.now += 59s;
  EXPECT_EQ(f.call("GET", "/sessions/" + id + "/question").body["remaining_s"], 1);
  f.now += 1s;
  auto late = f.call("POST", "/sessions/" + id + "/answer", {{"choice", 0}});
  EXPECT_EQ(late.status, 410);
  EXPECT_EQ(late.body["result"]["status"], "expired");
  EXPECT_EQ(late.body["result"]["finished"], false);
  ASSERT_EQ(f.store.size(), 1u);
  EXPECT_FALSE(f.store.snapshot()[0].finished);
  EXPECT_EQ(f.store.snapshot()[0].score, kUnfinishedScore);
}

TEST(ServiceSessions, SweepClosesIdleSessions) {
  Fixture f;
  f.start({{"config", {{"time_limit_s", 60}}}});
  f.start({{"config", {{"time_limit_s", 600}}}});
  EXPECT_EQ(f.svc.active_sessions(), 2u);
  f.now += 120s;
  EXPECT_EQ(f.svc.sweep_expired(), 1u);
  EXPECT_EQ(f.svc.active_sessions(), 1u);
  EXPECT_EQ(f.store.size(), 1u);
  EXPECT_EQ(f.svc.sweep_expired(), 0u);
  EXPECT_EQ(f.store.size(), 1u);
}

TEST(ServiceSessions, AbortRecordsOnce) {
  Fixture f;
  std::string id = f.start().body["session_id"];
  auto a = f.call("POST", "/sessions/" + id + "/abort");
  EXPECT_EQ(a.status, 200);
  EXPECT_EQ(a.body["status"], "aborted");
  EXPECT_EQ(f.call("POST", "/sessions/" + id + "/abort").status, 410);
  EXPECT_EQ(f.store.size(), 1u);
}

TEST(ServiceSessions, PoolExhaustionIsAConflict) {
  Fixture f;
  auto r = f.start({{"config", {{"n_questions", 20}, {"pool_policy", "strict"}}}});
  ASSERT_EQ(r.status, 201);
  std::string id = r.body["session_id"];
  Response a;
  for (int k = 0; k < 20; ++k) {
    a = f.call("POST", "/sessions/" + id + "/answer", {{"choice", 0}});
    if (a.status != 200) break;
  }
  // Always choosing option 0 keeps most answers wrong, so the first level runs dry.
  ASSERT_EQ(a.status, 409) << a.body.dump();
  EXPECT_EQ(a.body["error"], "pool-exhausted");
  EXPECT_EQ(f.store.size(), 1u);
  EXPECT_EQ(f.call("POST", "/sessions/" + id + "/answer", {{"choice", 0}}).status, 410);
}

TEST(ServiceSessions, ConcurrentAnswersAreSerialised) {
  Fixture f;
  std::string id = f.start({{"config", {{"n_questions", 3}}}}).body["session_id"];
  std::atomic<int> ok{0}, closed{0}, other{0};
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t)
    threads.emplace_back([&] {
      for (int i = 0; i < 5; ++i) {
        auto a = f.call("POST", "/sessions/" + id + "/answer", {{"choice", 0}});
        (a.status == 200 ? ok : a.status == 410 ? closed : other)++;
      }
    });
  for (auto& th : threads) th.join();
  EXPECT_EQ(ok.load(), 3);
  EXPECT_EQ(closed.load(), 37);
  EXPECT_EQ(other.load(), 0);
  ASSERT_EQ(f.store.size(), 1u);
  EXPECT_EQ(f.store.snapshot()[0].items.size(), 3u);
}

TEST(ServiceAuth, BearerTokenRequired) {
  Fixture f(options([](ServiceOptions& o) { o.bearer_token = "s3cret"; }));
  auto denied = f.call("GET", "/banks");
  EXPECT_EQ(denied.status, 401);
  EXPECT_EQ(denied.body["error"], "unauthorized");
  EXPECT_EQ(f.call("GET", "/banks", nullptr, {}, "Bearer wrong").status, 401);
  EXPECT_EQ(f.call("GET", "/banks", nullptr, {}, "Bearer s3cret").status, 200);
}

TEST(ServiceIds, SeededIdsAreReproducible) {
  Fixture a, b;
  EXPECT_EQ(a.start().body, b.start().body);
  Fixture c(options([](ServiceOptions& o) { o.id_seed = 7; }));
  EXPECT_NE(a.start().body["session_id"], c.start().body["session_id"]);
}

namespace {

// Runs a cohort of sessions through the service: each student answers the
// first `correct` questions right and the rest wrong, one attempt per day.
void run_cohort(Fixture& f, const std::string& cohort, int students, int correct, TimePoint first_day) {
  for (int s = 0; s < students; ++s)
    for (int day = 0; day < 2; ++day) {
      f.now = first_day + std::chrono::days{day} + std::chrono::minutes{s};
      auto r = f.start({{"student_id", cohort + "-" + std::to_string(s)}, {"cohort_id", cohort}});
      std::string id = r.body["session_id"];
      json q = r.body["question"];
      for (int k = 0; k < 6; ++k) {
        bool right = k < correct + (s % 3);
        std::size_t c = f.correct_choice(q);
        auto a = f.call("POST", "/sessions/" + id + "/answer", {{"choice", right ? c : (c + 1) % 4}});
        if (k < 5) q = a.body["question"];
      }
    }
}

}  // namespace

TEST(ServiceReports, ComparesCohortsInTheStore) {
  Fixture f;
  run_cohort(f, "weak", 6, 0, parse_iso8601("2020-03-02T10:00:00Z"));
  run_cohort(f, "strong", 6, 3, parse_iso8601("2020-03-20T10:00:00Z"));
  ASSERT_EQ(f.store.size(), 24u);

  auto r = f.call("GET", "/reports", nullptr, {{"cohorts", "weak,strong"}, {"metric", "score"}});
  ASSERT_EQ(r.status, 200) << r.body.dump();
  EXPECT_EQ(r.body["metric"], "score");
  ASSERT_EQ(r.body["sections"].size(), 1u);

  auto split = f.call("GET", "/reports", nullptr, {{"cohorts", "weak"}, {"split", "pre/post 2020-03-03"}});
  ASSERT_EQ(split.status, 200) << split.body.dump();
  EXPECT_EQ(split.body["sections"].size(), 1u);

  auto paired = f.call("GET", "/reports", nullptr,
                       {{"cohorts", "weak,strong"}, {"metric", "active-days"}, {"paired", "true"}});
  EXPECT_EQ(paired.status, 200) << paired.body.dump();
}

TEST(ServiceReports, Errors) {
  Fixture f;
  run_cohort(f, "weak", 3, 0, parse_iso8601("2020-03-02T10:00:00Z"));
  EXPECT_EQ(f.call("GET", "/reports").status, 400);
  EXPECT_EQ(f.call("GET", "/reports", nullptr, {{"cohorts", "weak"}, {"metric", "iq"}}).status, 400);
  EXPECT_EQ(f.call("GET", "/reports", nullptr, {{"cohorts", "weak"}, {"paired", "maybe"}}).status, 400);
  EXPECT_EQ(f.call("GET", "/reports", nullptr, {{"cohorts", "weak"}, {"split", "03-40"}}).status, 400);
  auto unknown = f.call("GET", "/reports", nullptr, {{"cohorts", "weak,ghost"}});
  EXPECT_EQ(unknown.status, 404);
  EXPECT_EQ(unknown.body["error"], "unknown-cohort");
  auto single = f.call("GET", "/reports", nullptr, {{"cohorts", "weak"}});
  EXPECT_EQ(single.status, 422);
  EXPECT_EQ(single.body["error"], "invalid-report");
  auto empty = f.call("GET", "/reports", nullptr, {{"cohorts", "weak"}, {"split", "2021-01-01"}});
  EXPECT_EQ(empty.status, 422);
  EXPECT_EQ(empty.body["error"], "empty-slice");
}

TEST(ServiceGolden, PayloadsMatchGoldenFiles) {
  Fixture f;
  auto started = f.start({{"config", {{"feedback", true}, {"seed", 5}}}});
  std::string id = started.body["session_id"];
  f.now += 30s;
  auto answered = f.call("POST", "/sessions/" + id + "/answer", {{"choice", f.correct_choice(started.body["question"])}});
  f.now += 30s;
  auto aborted = f.call("POST", "/sessions/" + id + "/abort");
  json got = {{"start", started.body}, {"answer", answered.body}, {"abort", aborted.body},
              {"banks", f.call("GET", "/banks").body}};

  std::string path = std::string(ADAPTEST_GOLDEN_DIR) + "/service_session.json";
  if (std::getenv("ADAPTEST_UPDATE_GOLDEN")) std::ofstream(path) << got.dump(2) << "\n";
  auto want = read_file(path);
  ASSERT_FALSE(want.empty()) << "missing " << path;
  EXPECT_EQ(got, json::parse(want)) << got.dump(2);
}

TEST(ServiceHttp, BoundServerSpeaksJsonWithCors) {
  AttemptStore store;
  Service svc(store, options([](ServiceOptions& o) { o.cors_origin = "http://localhost:5173"; }));
  std::istringstream in(bank_text("fig1_demo.json"));
  svc.add_bank(load_bank(in));

  httplib::Server server;
  svc.bind(server);
  int port = server.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  httplib::Client client("127.0.0.1", port);
  auto banks = client.Get("/banks");
  ASSERT_TRUE(banks);
  EXPECT_EQ(banks->status, 200);
  EXPECT_EQ(banks->get_header_value("Access-Control-Allow-Origin"), "http://localhost:5173");
  EXPECT_EQ(banks->get_header_value("Content-Type"), "application/json");
  EXPECT_EQ(json::parse(banks->body)[0]["bank_id"], "fig1-demo");

  auto opts = client.Options("/sessions");
  ASSERT_TRUE(opts);
  EXPECT_EQ(opts->status, 204);

  auto started = client.Post("/sessions", R"({"bank_id":"fig1-demo"})", "application/json");
  ASSERT_TRUE(started);
  EXPECT_EQ(started->status, 201);
  std::string id = json::parse(started->body)["session_id"];
  auto answered = client.Post("/sessions/" + id + "/answer", R"({"choice":0})", "application/json");
  ASSERT_TRUE(answered);
  EXPECT_EQ(answered->status, 200);

  auto report = client.Get("/reports?cohorts=ghost");
  ASSERT_TRUE(report);
  EXPECT_EQ(report->status, 404);

  server.stop();
  th.join();
}
