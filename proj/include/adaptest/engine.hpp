#pragma once

// Adaptive session state machine.
//
// The level of question k is L_k = trunc(N_L * sum(phi_binary[1..k-1]) / N_Q + 1),
// clamped to [1, N_L]. Progression always uses the binary per-item score, even
// when the session is graded with guess correction, so levels never decrease.

#include <adaptest/common.hpp>
#include <adaptest/item_bank.hpp>
#include <adaptest/scoring.hpp>
#include <adaptest/timeutil.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace adaptest {

enum class SessionMode { adaptive, linear };
enum class PoolPolicy { strict, permissive };
enum class SessionStatus { active, finished, aborted, expired };

inline std::string to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::active: return "active";
    case SessionStatus::finished: return "finished";
    case SessionStatus::aborted: return "aborted";
    case SessionStatus::expired: return "expired";
  }
  return "unknown";
}

struct SessionExpired : SessionError {
  using SessionError::SessionError;
};
struct SessionClosed : SessionError {
  using SessionError::SessionError;
};
struct MalformedAnswer : SessionError {
  using SessionError::SessionError;
};
struct PoolExhausted : SessionError {
  PoolExhausted(int lvl) : SessionError("level pool exhausted at level " + std::to_string(lvl)), level(lvl) {}
  int level;
};

struct SessionConfig {
  int n_questions = 6;
  int n_levels = 3;
  std::chrono::seconds time_limit{15 * 60};
  ScoringConfig scoring = ScoringConfig::uniform(6);
  std::uint64_t rng_seed = 0;
  SessionMode mode = SessionMode::adaptive;
  std::vector<std::string> fixed_order;  // linear mode only
  bool feedback_enabled = true;
  PoolPolicy pool_policy = PoolPolicy::strict;

  /// Uniform weights, K = 10.
  static SessionConfig make(int n_questions, int n_levels, ScoringMode mode = ScoringMode::binary) {
    SessionConfig c;
    c.n_questions = n_questions;
    c.n_levels = n_levels;
    c.scoring = ScoringConfig::uniform(n_questions, 10.0, mode);
    return c;
  }

  void validate() const {
    if (n_questions < 1) throw Error("session: n_questions must be >= 1");
    if (n_levels < 1) throw Error("session: n_levels must be >= 1");
    if (time_limit <= std::chrono::seconds{0}) throw Error("session: time limit must be positive");
    if (scoring.n_questions != n_questions) throw Error("session: scoring config is for a different N_Q");
    scoring.validate();
    if (mode == SessionMode::linear && fixed_order.size() != static_cast<std::size_t>(n_questions))
      throw Error("session: linear mode needs a fixed order of exactly N_Q items");
  }
};

inline int current_level(std::span<const double> history, int n_questions, int n_levels) {
  double correct = std::accumulate(history.begin(), history.end(), 0.0);
  double l = std::trunc(n_levels * correct / n_questions + 1.0);
  return static_cast<int>(std::clamp(l, 1.0, static_cast<double>(n_levels)));
}

struct ChoiceAnswer {
  std::size_t index;
};
struct NumericAnswer {
  double value;
};
using Answer = std::variant<ChoiceAnswer, NumericAnswer>;

/// A drawn item as the engine sees it, including the hidden answer key.
struct Question {
  int k = 0;
  std::string item_id;
  int level = 1;
  ItemKind kind = ItemKind::multiple_answer;
  std::string statement;
  std::vector<std::string> options;
  std::optional<std::size_t> correct_index;
  std::optional<double> expected;
  double tolerance = kDefaultAnswerTolerance;
  bool repeated = false;
  TimePoint presented_at{};
};

struct AskedItem {
  int k = 0;
  std::string item_id;
  int level = 1;
  double phi_binary = 0.0;
  double phi_scoring = 0.0;
  double elapsed_s = 0.0;
  bool repeated = false;

  bool operator==(const AskedItem&) const = default;
};

struct SessionResult {
  std::string session_id;
  double score = 0.0;        // S
  double final_grade = 0.0;  // FG = K * S
  int raw_grade = 0;         // G, number of binary-correct answers
  bool finished = false;
  SessionStatus status = SessionStatus::active;
  std::string end_reason;
  int final_level = 1;
  int repeats = 0;  // items re-drawn after a level pool ran dry (permissive mode)
  TimePoint started_at{};
  TimePoint ended_at{};
  std::vector<AskedItem> items;
};

struct Feedback {
  bool correct = false;
  double phi_binary = 0.0;
  double phi_scoring = 0.0;
};

struct SubmitOutcome {
  Feedback feedback;
  bool finished = false;
  std::optional<Question> next;
};

inline bool judge_answer(const Question& q, const Answer& answer) {
  if (q.kind == ItemKind::multiple_answer) {
    const auto* c = std::get_if<ChoiceAnswer>(&answer);
    if (!c) throw MalformedAnswer("multiple-answer question needs a choice index");
    if (c->index >= q.options.size()) throw MalformedAnswer("choice index out of range");
    return c->index == *q.correct_index;
  }
  const auto* n = std::get_if<NumericAnswer>(&answer);
  if (!n) throw MalformedAnswer("open-answer question needs a numeric value");
  if (!std::isfinite(n->value)) throw MalformedAnswer("numeric answer must be finite");
  return std::fabs(n->value - *q.expected) <= q.tolerance * std::max(1.0, std::fabs(*q.expected));
}

class Session {
 public:
  Session(std::string session_id, std::shared_ptr<const ItemBank> bank, SessionConfig config, TimePoint now)
      : id_(std::move(session_id)), bank_(std::move(bank)), config_(std::move(config)), rng_(config_.rng_seed) {
    if (!bank_) throw Error("session: no bank");
    config_.validate();
    auto issues = validate_bank(*bank_, config_.mode == SessionMode::adaptive ? config_.n_levels : 0);
    if (!issues.empty()) throw Error("session: bank '" + bank_->bank_id + "' unusable: " + issues.front().message);
    if (config_.mode == SessionMode::linear) {
      std::set<std::string> distinct;
      for (const auto& id : config_.fixed_order) {
        if (!bank_->find(id)) throw Error("session: fixed order references unknown item '" + id + "'");
        if (!distinct.insert(id).second) throw Error("session: fixed order repeats item '" + id + "'");
      }
    }
    started_at_ = now;
    deadline_ = now + config_.time_limit;
    current_ = draw(now);
  }

  const std::string& id() const noexcept { return id_; }
  const SessionConfig& config() const noexcept { return config_; }
  const ItemBank& bank() const noexcept { return *bank_; }
  SessionStatus status() const noexcept { return status_; }
  TimePoint started_at() const noexcept { return started_at_; }
  TimePoint deadline() const noexcept { return deadline_; }
  std::span<const AskedItem> asked() const noexcept { return asked_; }
  int next_index() const noexcept { return static_cast<int>(asked_.size()) + 1; }

  const Question& current_question() const {
    if (status_ != SessionStatus::active || !current_) throw SessionClosed("session is not active");
    return *current_;
  }

  std::vector<double> binary_history() const {
    std::vector<double> h;
    h.reserve(asked_.size());
    for (const auto& a : asked_) h.push_back(a.phi_binary);
    return h;
  }

  /// Marks the session expired if the deadline has passed. Returns true on transition.
  bool expire_if_due(TimePoint now) {
    if (status_ != SessionStatus::active || now < deadline_) return false;
    close(SessionStatus::expired, "expired", deadline_);
    return true;
  }

  SubmitOutcome submit(const Answer& answer, TimePoint now) {
    if (status_ != SessionStatus::active) throw SessionClosed("session is " + to_string(status_));
    if (expire_if_due(now)) throw SessionExpired("session deadline has passed");

    const Question& q = *current_;
    bool correct = judge_answer(q, answer);
    std::optional<int> n_opts;
    if (q.kind == ItemKind::multiple_answer) n_opts = static_cast<int>(q.options.size());
    auto scored = ItemOutcome::judge(correct, n_opts, config_.scoring.mode);

    AskedItem rec;
    rec.k = q.k;
    rec.item_id = q.item_id;
    rec.level = q.level;
    rec.phi_binary = phi_binary(correct);
    rec.phi_scoring = scored.phi;
    rec.elapsed_s = std::chrono::duration<double>(now - q.presented_at).count();
    rec.repeated = q.repeated;
    asked_.push_back(std::move(rec));
    outcomes_.push_back(scored);

    SubmitOutcome out;
    out.feedback = {correct, asked_.back().phi_binary, scored.phi};
    if (static_cast<int>(asked_.size()) == config_.n_questions) {
      close(SessionStatus::finished, "completed", now);
      out.finished = true;
      return out;
    }
    try {
      current_ = draw(now);
    } catch (const PoolExhausted&) {
      close(SessionStatus::aborted, "pool-exhausted", now);
      throw;
    }
    out.next = *current_;
    return out;
  }

  SessionResult abort(TimePoint now) {
    if (status_ != SessionStatus::active) throw SessionClosed("session is " + to_string(status_));
    if (!expire_if_due(now)) close(SessionStatus::aborted, "aborted", now);
    return result();
  }

  /// Result of a completed session.
  SessionResult finish() const {
    if (status_ != SessionStatus::finished) throw SessionError("finish: session is incomplete");
    return result();
  }

  /// Result in any state; unfinished sessions carry their partial history.
  SessionResult result() const {
    SessionResult r;
    r.session_id = id_;
    r.finished = status_ == SessionStatus::finished;
    r.status = status_;
    r.end_reason = end_reason_;
    r.items = asked_;
    r.started_at = started_at_;
    r.ended_at = status_ == SessionStatus::active ? started_at_ : ended_at_;
    r.score = session_score(outcomes_, config_.scoring);
    r.final_grade = final_grade(r.score, config_.scoring);
    for (const auto& a : asked_) {
      r.raw_grade += static_cast<int>(a.phi_binary);
      r.repeats += a.repeated ? 1 : 0;
    }
    r.final_level = asked_.empty() ? 1 : asked_.back().level;
    return r;
  }

 private:
  void close(SessionStatus s, std::string reason, TimePoint at) {
    status_ = s;
    end_reason_ = std::move(reason);
    ended_at_ = std::max(at, started_at_);
    current_.reset();
  }

  Question draw(TimePoint now) {
    int k = next_index();
    const Item* item = nullptr;
    bool repeated = false;
    if (config_.mode == SessionMode::linear) {
      item = bank_->find(config_.fixed_order[static_cast<std::size_t>(k - 1)]);
    } else {
      auto hist = binary_history();
      int level = current_level(hist, config_.n_questions, config_.n_levels);
      auto pool = bank_->items_at(level);
      std::vector<const Item*> fresh;
      for (const Item* it : pool)
        if (!asked_ids_.count(it->item_id)) fresh.push_back(it);
      if (fresh.empty()) {
        if (config_.pool_policy == PoolPolicy::strict) throw PoolExhausted(level);
        fresh = pool;
        repeated = true;
      }
      item = fresh[uniform_index(rng_, fresh.size())];
    }
    asked_ids_.insert(item->item_id);

    Question q;
    q.k = k;
    q.item_id = item->item_id;
    q.level = item->level;
    q.kind = item->kind();
    q.repeated = repeated;
    q.presented_at = now;
    if (q.kind == ItemKind::multiple_answer) {
      q.statement = item->statement;
      q.options = item->choice().options;
      q.correct_index = item->choice().correct_index;
    } else {
      auto inst = instantiate_numeric_item(*item, mix_seed(config_.rng_seed, static_cast<std::uint64_t>(k)));
      q.statement = std::move(inst.statement);
      q.expected = inst.expected;
      q.tolerance = item->numeric().solution.tolerance;
    }
    return q;
  }

  std::string id_;
  std::shared_ptr<const ItemBank> bank_;
  SessionConfig config_;
  Rng rng_;
  SessionStatus status_ = SessionStatus::active;
  std::string end_reason_;
  TimePoint started_at_{};
  TimePoint deadline_{};
  TimePoint ended_at_{};
  std::vector<AskedItem> asked_;
  std::vector<ItemOutcome> outcomes_;
  std::set<std::string> asked_ids_;
  std::optional<Question> current_;
};

}  // namespace adaptest
