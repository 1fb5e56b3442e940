#pragma once

// HTTP facade over banks, live sessions and cohort reports.
//
// Routing and JSON shaping live in Service::handle, which is transport free
// and is what the tests drive. bind() mounts it on a cpp-httplib server.
//
//   POST /banks                      bank document            -> 201 bank summary
//   GET  /banks                                               -> 200 [bank summary]
//   GET  /banks/{id}                                          -> 200 bank summary
//   POST /sessions                   {bank_id, student_id?, cohort_id?, test_id?, config?}
//                                                             -> 201 {session_id, expires_at, question}
//   GET  /sessions/{id}/question                              -> 200 question
//   POST /sessions/{id}/answer       {"choice": i} | {"value": x}
//                                                             -> 200 {finished, feedback?, question | result}
//   POST /sessions/{id}/abort                                 -> 200 {status, result}
//   GET  /reports?cohorts=a,b&metric=score&split=2020-03-11&paired=false
//                                                             -> 200 {sections: [...]}
//
// Question payloads never carry the item level or the correct answer.

#include <adaptest/attempt_store.hpp>
#include <adaptest/comparison.hpp>
#include <adaptest/engine.hpp>
#include <adaptest/item_bank.hpp>
#include <adaptest/session_json.hpp>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <shared_mutex>
#include <sstream>
#include <string>

namespace adaptest {

struct Request {
  std::string method;
  std::string path;
  std::string body;
  std::map<std::string, std::string> query;
  std::string authorization;  // raw Authorization header
};

struct Response {
  int status = 200;
  nlohmann::json body;
};

struct ServiceOptions {
  std::string bearer_token;          // empty: no authentication
  std::string cors_origin = "*";
  std::string default_cohort = "live";
  std::function<TimePoint()> clock = now_seconds;
  std::optional<std::uint64_t> id_seed;  // fixes session ids, for tests
};

inline nlohmann::json bank_summary(const ItemBank& b) {
  nlohmann::json per_level = nlohmann::json::array();
  for (int l = 1; l <= b.num_levels; ++l) per_level.push_back(b.items_at(l).size());
  return {{"bank_id", b.bank_id},         {"title", b.title},        {"version", b.version},
          {"num_levels", b.num_levels},   {"item_count", b.items.size()}, {"items_per_level", per_level}};
}

/// The student-facing view of a question.
inline nlohmann::json question_payload(const Question& q, const SessionConfig& cfg, TimePoint deadline, TimePoint now) {
  nlohmann::json j = {{"k", q.k},
                      {"n_questions", cfg.n_questions},
                      {"item_id", q.item_id},
                      {"kind", to_string(q.kind)},
                      {"statement", q.statement},
                      {"remaining_s", std::max<std::int64_t>(0, (deadline - now).count())},
                      {"deadline", format_iso8601(deadline)}};
  if (q.kind == ItemKind::multiple_answer) j["options"] = q.options;
  else j["numeric_entry"] = true;
  return j;
}

inline nlohmann::json result_payload(const SessionResult& r, const SessionConfig& cfg) {
  return {{"status", to_string(r.status)},
          {"finished", r.finished},
          {"score", r.score},
          {"final_grade", r.final_grade},
          {"raw_grade", r.raw_grade},
          {"answered", r.items.size()},
          {"n_questions", cfg.n_questions}};
}

class Service {
 public:
  explicit Service(AttemptStore& store, ServiceOptions opt = {})
      : store_(store), opt_(std::move(opt)), ids_(opt_.id_seed ? *opt_.id_seed : std::random_device{}()) {}

  void add_bank(ItemBank bank) {
    std::unique_lock lock(banks_mu_);
    auto id = bank.bank_id;
    banks_[id] = std::make_shared<const ItemBank>(std::move(bank));
  }

  std::size_t active_sessions() const {
    std::shared_lock lock(sessions_mu_);
    std::size_t n = 0;
    for (const auto& [id, live] : sessions_) {
      std::lock_guard g(live->mu);
      n += live->session.status() == SessionStatus::active ? 1 : 0;
    }
    return n;
  }

  /// Closes every session whose deadline has passed and records it.
  std::size_t sweep_expired() {
    auto now = opt_.clock();
    std::vector<std::shared_ptr<Live>> all;
    {
      std::shared_lock lock(sessions_mu_);
      for (const auto& [id, live] : sessions_) all.push_back(live);
    }
    std::size_t n = 0;
    for (auto& live : all) {
      std::lock_guard g(live->mu);
      if (live->session.expire_if_due(now)) ++n;
      record_if_closed(*live);
    }
    return n;
  }

  Response handle(const Request& req) {
    try {
      if (!opt_.bearer_token.empty() && req.authorization != "Bearer " + opt_.bearer_token)
        return error(401, "unauthorized", "missing or invalid bearer token");
      auto parts = split_path(req.path);
      const auto& m = req.method;
      if (parts.size() == 1 && parts[0] == "banks") {
        if (m == "POST") return post_bank(req);
        if (m == "GET") return list_banks();
      } else if (parts.size() == 2 && parts[0] == "banks" && m == "GET") {
        return get_bank(parts[1]);
      } else if (parts.size() == 1 && parts[0] == "sessions" && m == "POST") {
        return start_session(req);
      } else if (parts.size() == 3 && parts[0] == "sessions") {
        if (parts[2] == "question" && m == "GET") return get_question(parts[1]);
        if (parts[2] == "answer" && m == "POST") return submit_answer(parts[1], req);
        if (parts[2] == "abort" && m == "POST") return abort_session(parts[1]);
      } else if (parts.size() == 1 && parts[0] == "reports" && m == "GET") {
        return report(req);
      }
      return error(404, "not-found", "no route for " + m + " " + req.path);
    } catch (const std::exception& e) {
      return error(500, "internal", e.what());
    }
  }

  /// Mounts every route on `server`, with CORS headers for the UI origin.
  void bind(httplib::Server& server) {
    auto forward = [this](const httplib::Request& hr, httplib::Response& res) {
      Request r;
      r.method = hr.method;
      r.path = hr.path;
      r.body = hr.body;
      for (const auto& [k, v] : hr.params) r.query[k] = v;
      r.authorization = hr.get_header_value("Authorization");
      auto out = handle(r);
      res.status = out.status;
      res.set_content(out.body.dump(), "application/json");
    };
    server.set_default_headers({{"Access-Control-Allow-Origin", opt_.cors_origin},
                                {"Access-Control-Allow-Headers", "Content-Type, Authorization"},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    server.Get(R"(/.*)", forward);
    server.Post(R"(/.*)", forward);
  }

 private:
  struct Live {
    Live(Session s, std::string sid, std::string cid, std::string tid)
        : session(std::move(s)), student_id(std::move(sid)), cohort_id(std::move(cid)), test_id(std::move(tid)) {}
    std::mutex mu;
    Session session;
    std::string student_id;
    std::string cohort_id;
    std::string test_id;
    bool recorded = false;
  };

  static Response error(int status, const std::string& code, const std::string& message) {
    return {status, {{"error", code}, {"message", message}}};
  }

  static std::vector<std::string> split_path(const std::string& path) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : path) {
      if (c == '/') {
        if (!cur.empty()) out.push_back(std::move(cur));
        cur.clear();
      } else {
        cur += c;
      }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
  }

  static std::optional<nlohmann::json> parse_body(const std::string& body) {
    if (body.empty()) return nlohmann::json::object();
    try {
      return nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error&) {
      return std::nullopt;
    }
  }

  std::shared_ptr<const ItemBank> find_bank(const std::string& id) const {
    std::shared_lock lock(banks_mu_);
    auto it = banks_.find(id);
    return it == banks_.end() ? nullptr : it->second;
  }

  std::shared_ptr<Live> find_session(const std::string& id) const {
    std::shared_lock lock(sessions_mu_);
    auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
  }

  std::string new_session_id() {
    std::lock_guard g(ids_mu_);
    std::ostringstream os;
    os << "sess-" << std::hex << ids_() << ids_();
    return os.str();
  }

  // Caller holds live.mu.
  void record_if_closed(Live& live) {
    if (live.recorded || live.session.status() == SessionStatus::active) return;
    store_.append(make_attempt_record(live.session.result(), live.session.id(), live.student_id, live.cohort_id,
                                      live.test_id));
    live.recorded = true;
  }

  Response gone(Live& live) {
    record_if_closed(live);
    return {410,
            {{"error", "session-closed"},
             {"message", "session is " + to_string(live.session.status())},
             {"result", result_payload(live.session.result(), live.session.config())}}};
  }

  Response post_bank(const Request& req) {
    std::istringstream in(req.body);
    ItemBank bank;
    try {
      bank = load_bank(in);
    } catch (const ValidationError& e) {
      return {422, {{"error", "invalid-bank"}, {"message", e.what()}, {"item_id", e.item_id}}};
    } catch (const ParseError& e) {
      return error(400, "malformed-bank", e.what());
    }
    std::unique_lock lock(banks_mu_);
    if (auto it = banks_.find(bank.bank_id); it != banks_.end() && !(*it->second == bank))
      return error(409, "bank-exists", "a different bank with id '" + bank.bank_id + "' is already loaded");
    auto summary = bank_summary(bank);
    auto id = bank.bank_id;
    banks_[id] = std::make_shared<const ItemBank>(std::move(bank));
    return {201, summary};
  }

  Response list_banks() const {
    std::shared_lock lock(banks_mu_);
    nlohmann::json out = nlohmann::json::array();
    for (const auto& [id, b] : banks_) out.push_back(bank_summary(*b));
    return {200, out};
  }

  Response get_bank(const std::string& id) const {
    auto b = find_bank(id);
    if (!b) return error(404, "unknown-bank", "no bank '" + id + "'");
    return {200, bank_summary(*b)};
  }

  Response start_session(const Request& req) {
    auto body = parse_body(req.body);
    if (!body || !body->is_object()) return error(400, "malformed-request", "body must be a JSON object");
    std::string bank_id, student, cohort, test;
    try {
      check_keys(*body, {"bank_id", "student_id", "cohort_id", "test_id", "config"}, "");
      bank_id = required_field<std::string>(*body, "bank_id", "");
      student = field_or<std::string>(*body, "student_id", "", "anonymous");
      cohort = field_or<std::string>(*body, "cohort_id", "", opt_.default_cohort);
      test = field_or<std::string>(*body, "test_id", "", "");
    } catch (const FieldError& e) {
      return error(400, "malformed-request", e.what());
    }
    auto bank = find_bank(bank_id);
    if (!bank) return error(404, "unknown-bank", "no bank '" + bank_id + "'");
    if (test.empty()) test = bank->bank_id;

    SessionConfig cfg = SessionConfig::make(6, bank->num_levels);
    {
      std::lock_guard g(ids_mu_);
      cfg.rng_seed = ids_();
    }
    auto now = opt_.clock();
    std::shared_ptr<Live> live;
    try {
      cfg = apply_session_overrides(body->value("config", nlohmann::json::object()), cfg, "config");
      live = std::make_shared<Live>(Session(new_session_id(), bank, cfg, now), student, cohort, test);
    } catch (const Error& e) {
      return error(422, "invalid-config", e.what());
    }
    {
      std::unique_lock lock(sessions_mu_);
      sessions_[live->session.id()] = live;
    }
    std::lock_guard g(live->mu);
    return {201,
            {{"session_id", live->session.id()},
             {"expires_at", format_iso8601(live->session.deadline())},
             {"n_questions", cfg.n_questions},
             {"feedback_enabled", cfg.feedback_enabled},
             {"question", question_payload(live->session.current_question(), cfg, live->session.deadline(), now)}}};
  }

  Response get_question(const std::string& id) {
    auto live = find_session(id);
    if (!live) return error(404, "unknown-session", "no session '" + id + "'");
    std::lock_guard g(live->mu);
    auto now = opt_.clock();
    live->session.expire_if_due(now);
    if (live->session.status() != SessionStatus::active) return gone(*live);
    const auto& s = live->session;
    return {200, question_payload(s.current_question(), s.config(), s.deadline(), now)};
  }

  Response submit_answer(const std::string& id, const Request& req) {
    auto live = find_session(id);
    if (!live) return error(404, "unknown-session", "no session '" + id + "'");
    auto body = parse_body(req.body);

    std::lock_guard g(live->mu);
    auto now = opt_.clock();
    auto& s = live->session;
    s.expire_if_due(now);
    if (s.status() != SessionStatus::active) return gone(*live);

    if (!body || !body->is_object()) return error(400, "malformed-answer", "body must be a JSON object");
    bool has_choice = body->contains("choice"), has_value = body->contains("value");
    if (has_choice == has_value || body->size() != 1)
      return error(400, "malformed-answer", "send exactly one of 'choice' or 'value'");
    Answer answer;
    if (has_choice) {
      const auto& c = (*body)["choice"];
      if (!c.is_number_integer() || c.get<std::int64_t>() < 0)
        return error(400, "malformed-answer", "'choice' must be a non-negative integer");
      answer = ChoiceAnswer{c.get<std::size_t>()};
    } else {
      const auto& v = (*body)["value"];
      if (!v.is_number()) return error(400, "malformed-answer", "'value' must be a number");
      answer = NumericAnswer{v.get<double>()};
    }

    SubmitOutcome out;
    try {
      out = s.submit(answer, now);
    } catch (const MalformedAnswer& e) {
      return error(400, "malformed-answer", e.what());
    } catch (const SessionExpired&) {
      return gone(*live);
    } catch (const PoolExhausted& e) {
      record_if_closed(*live);
      return {409, {{"error", "pool-exhausted"}, {"message", e.what()},
                    {"result", result_payload(s.result(), s.config())}}};
    }

    nlohmann::json j = {{"session_id", s.id()}, {"finished", out.finished}};
    if (s.config().feedback_enabled) j["feedback"] = {{"correct", out.feedback.correct}};
    if (out.finished) {
      record_if_closed(*live);
      j["result"] = result_payload(s.result(), s.config());
    } else {
      j["question"] = question_payload(*out.next, s.config(), s.deadline(), now);
    }
    return {200, j};
  }

  Response abort_session(const std::string& id) {
    auto live = find_session(id);
    if (!live) return error(404, "unknown-session", "no session '" + id + "'");
    std::lock_guard g(live->mu);
    auto now = opt_.clock();
    auto& s = live->session;
    s.expire_if_due(now);
    if (s.status() != SessionStatus::active) return gone(*live);
    auto r = s.abort(now);
    record_if_closed(*live);
    return {200, {{"session_id", s.id()}, {"status", to_string(r.status)}, {"result", result_payload(r, s.config())}}};
  }

  Response report(const Request& req) {
    auto get = [&](const std::string& k) -> std::optional<std::string> {
      auto it = req.query.find(k);
      if (it == req.query.end()) return std::nullopt;
      return it->second;
    };
    auto cohorts_param = get("cohorts");
    if (!cohorts_param || cohorts_param->empty()) return error(400, "malformed-request", "'cohorts' is required");
    std::vector<std::string> ids;
    {
      std::stringstream ss(*cohorts_param);
      std::string c;
      while (std::getline(ss, c, ','))
        if (!c.empty()) ids.push_back(c);
    }

    ComparisonOptions opt;
    Metric metric = Metric::score;
    std::optional<PeriodSplit> split;
    bool paired = false;
    try {
      if (auto m = get("metric")) metric = metric_from_string(*m);
      if (auto p = get("paired")) {
        if (*p != "true" && *p != "false" && *p != "1" && *p != "0")
          throw ParseError("'paired' must be true or false");
        paired = *p == "true" || *p == "1";
      }
      if (auto a = get("alpha")) opt.alpha = parse_double(*a);
      if (auto s = get("split"); s && !s->empty()) {
        std::string spec = *s;
        if (spec.rfind("pre/post ", 0) == 0) spec = spec.substr(9);
        split = PeriodSplit::parse(spec);
      }
    } catch (const Error& e) {
      return error(400, "malformed-request", e.what());
    }

    auto all = store_.snapshot();
    std::vector<CohortDataset> cohorts;
    for (const auto& id : ids) {
      CohortDataset ds;
      ds.cohort_id = id;
      for (const auto& a : all)
        if (a.cohort_id == id) ds.attempts.push_back(a);
      if (ds.attempts.empty()) return error(404, "unknown-cohort", "no attempts for cohort '" + id + "'");
      sort_chronologically(ds.attempts);
      cohorts.push_back(std::move(ds));
    }
    try {
      nlohmann::json sections = nlohmann::json::array();
      for (const auto& r : analyze(cohorts, metric, split, paired, opt)) sections.push_back(to_json(r));
      return {200, {{"metric", to_string(metric)}, {"sections", sections}}};
    } catch (const EmptySlice& e) {
      return error(422, "empty-slice", e.what());
    } catch (const stats::DegenerateData& e) {
      return error(422, "degenerate-data", e.what());
    } catch (const Error& e) {
      return error(422, "invalid-report", e.what());
    }
  }

  AttemptStore& store_;
  ServiceOptions opt_;

  mutable std::shared_mutex banks_mu_;
  std::map<std::string, std::shared_ptr<const ItemBank>> banks_;

  mutable std::shared_mutex sessions_mu_;
  std::map<std::string, std::shared_ptr<Live>> sessions_;

  std::mutex ids_mu_;
  Rng ids_;
};

}  // namespace adaptest
