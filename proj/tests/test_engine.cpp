#include <adaptest/engine.hpp>

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

using namespace adaptest;
using namespace std::chrono_literals;

namespace {

std::shared_ptr<const ItemBank> bundled(const std::string& name) {
  std::ifstream in(std::filesystem::path(ADAPTEST_DATA_DIR) / "banks" / (name + ".json"));
  return std::make_shared<const ItemBank>(load_bank(in));
}

// Small bank: `per_level` choice items on each of `levels` levels, correct option 0.
std::shared_ptr<const ItemBank> tiny_bank(int levels, int per_level) {
  ItemBank b;
  b.bank_id = "tiny";
  b.num_levels = levels;
  for (int l = 1; l <= levels; ++l)
    for (int i = 0; i < per_level; ++i)
      b.items.push_back(Item{"L" + std::to_string(l) + "-" + std::to_string(i), l, "q", std::nullopt,
                             ChoiceSpec{{"right", "wrong", "wrong too"}, 0}});
  return std::make_shared<const ItemBank>(std::move(b));
}

Answer right(const Question& q) { return ChoiceAnswer{*q.correct_index}; }
Answer wrong(const Question& q) { return ChoiceAnswer{(*q.correct_index + 1) % q.options.size()}; }

const TimePoint t0 = parse_iso8601("2020-03-01T10:00:00Z");

}  // namespace

TEST(Engine, LevelRuleMatchesIntegerFormula) {
  // L = min(N_L, floor(N_L * c / N_Q) + 1), computed in integers.
  for (int nq = 1; nq <= 24; ++nq)
    for (int nl = 1; nl <= 6; ++nl)
      for (int c = 0; c <= nq; ++c) {
        std::vector<double> h(static_cast<std::size_t>(c), 1.0);
        h.resize(static_cast<std::size_t>(nq), 0.0);
        int expected = std::min(nl, nl * c / nq + 1);
        EXPECT_EQ(current_level(std::span<const double>(h.data(), static_cast<std::size_t>(c)), nq, nl), expected);
        EXPECT_EQ(current_level(h, nq, nl), expected) << nq << " " << nl << " " << c;
      }
}

TEST(Engine, LevelIsMonotoneInCorrectAnswers) {
  for (int nq = 1; nq <= 20; ++nq)
    for (int nl = 1; nl <= 5; ++nl) {
      int prev = 1;
      for (int c = 0; c <= nq; ++c) {
        std::vector<double> h(static_cast<std::size_t>(c), 1.0);
        int l = current_level(h, nq, nl);
        EXPECT_GE(l, prev);
        EXPECT_LE(l, nl);
        prev = l;
      }
    }
}

TEST(Engine, SixQuestionThreeLevelWalk) {
  auto s = Session("w", bundled("fig1_demo"), SessionConfig::make(6, 3), t0);
  std::vector<int> levels;
  for (int k = 0; k < 6; ++k) {
    levels.push_back(s.current_question().level);
    s.submit(right(s.current_question()), t0 + 10s);
  }
  EXPECT_EQ(levels, (std::vector<int>{1, 1, 2, 2, 3, 3}));
  auto r = s.finish();
  EXPECT_EQ(r.raw_grade, 6);
  EXPECT_DOUBLE_EQ(r.final_grade, 10.0);
  EXPECT_EQ(r.status, SessionStatus::finished);
}

TEST(Engine, WrongAnswersHoldTheLevel) {
  auto s = Session("w", bundled("fig1_demo"), SessionConfig::make(6, 3), t0);
  for (int k = 0; k < 6; ++k) {
    EXPECT_EQ(s.current_question().level, 1);
    s.submit(wrong(s.current_question()), t0 + 5s);
  }
  EXPECT_EQ(s.finish().final_grade, 0.0);
}

TEST(Engine, NoItemRepeatsWithinASession) {
  auto bank = bundled("dwtf_theory");
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto cfg = SessionConfig::make(18, 3);
    cfg.rng_seed = seed;
    Session s("r", bank, cfg, t0);
    std::set<std::string> seen;
    Rng rng(seed);
    while (s.status() == SessionStatus::active) {
      const auto& q = s.current_question();
      EXPECT_TRUE(seen.insert(q.item_id).second);
      s.submit(uniform01(rng) < 0.5 ? right(q) : wrong(q), t0 + 1s);
    }
  }
}

TEST(Engine, SameSeedSameItems) {
  auto bank = bundled("dwtf_theory");
  auto cfg = SessionConfig::make(18, 3);
  cfg.rng_seed = 99;
  Session a("a", bank, cfg, t0), b("b", bank, cfg, t0);
  for (int k = 0; k < 18; ++k) {
    EXPECT_EQ(a.current_question().item_id, b.current_question().item_id);
    bool r = k % 3 != 0;
    a.submit(r ? right(a.current_question()) : wrong(a.current_question()), t0);
    b.submit(r ? right(b.current_question()) : wrong(b.current_question()), t0);
  }
  EXPECT_EQ(a.result().items, b.result().items);
}

TEST(Engine, CorrectedScoringMatchesHandComputation) {
  auto cfg = SessionConfig::make(6, 3, ScoringMode::corrected);
  Session s("c", bundled("fig1_demo"), cfg, t0);  // 4 options per item
  int answers[] = {1, 0, 1, 1, 0, 0};
  for (int a : answers) s.submit(a ? right(s.current_question()) : wrong(s.current_question()), t0);
  auto r = s.finish();
  EXPECT_EQ(r.raw_grade, 3);
  EXPECT_NEAR(r.score, (3.0 - 3.0 / 3.0) / 6.0, 1e-15);
  EXPECT_NEAR(r.final_grade, 10.0 * r.score, 1e-15);
}

TEST(Engine, NumericJudgingUsesRelativeToleranceWithUnitFloor) {
  Question q;
  q.kind = ItemKind::open_answer;
  q.tolerance = 1e-3;
  q.expected = 100.0;
  EXPECT_TRUE(judge_answer(q, NumericAnswer{100.1}));
  EXPECT_FALSE(judge_answer(q, NumericAnswer{100.11}));
  q.expected = 0.5;
  EXPECT_TRUE(judge_answer(q, NumericAnswer{0.5009}));
  EXPECT_FALSE(judge_answer(q, NumericAnswer{0.5011}));
  EXPECT_THROW(judge_answer(q, ChoiceAnswer{0}), MalformedAnswer);
  EXPECT_THROW(judge_answer(q, NumericAnswer{std::nan("")}), MalformedAnswer);
}

TEST(Engine, OpenAnswerSession) {
  auto cfg = SessionConfig::make(12, 4);
  cfg.rng_seed = 5;
  Session s("o", bundled("applied_computing"), cfg, t0);
  while (s.status() == SessionStatus::active) {
    const auto& q = s.current_question();
    ASSERT_EQ(q.kind, ItemKind::open_answer);
    ASSERT_TRUE(q.expected.has_value());
    EXPECT_THROW(s.submit(ChoiceAnswer{0}, t0), MalformedAnswer);
    s.submit(NumericAnswer{*q.expected * (1 + 0.5 * q.tolerance)}, t0 + 20s);
  }
  auto r = s.finish();
  EXPECT_EQ(r.raw_grade, 12);
  EXPECT_EQ(r.final_level, 4);
}

TEST(Engine, MalformedAnswerLeavesStateUntouched) {
  Session s("m", bundled("fig1_demo"), SessionConfig::make(6, 3), t0);
  auto before = s.current_question().item_id;
  EXPECT_THROW(s.submit(ChoiceAnswer{99}, t0), MalformedAnswer);
  EXPECT_THROW(s.submit(NumericAnswer{1.0}, t0), MalformedAnswer);
  EXPECT_EQ(s.current_question().item_id, before);
  EXPECT_TRUE(s.asked().empty());
}

TEST(Engine, ExpiryClosesAtDeadline) {
  auto cfg = SessionConfig::make(6, 3);
  cfg.time_limit = 60s;
  Session s("e", bundled("fig1_demo"), cfg, t0);
  s.submit(right(s.current_question()), t0 + 30s);
  EXPECT_FALSE(s.expire_if_due(t0 + 59s));
  EXPECT_THROW(s.submit(right(s.current_question()), t0 + 60s), SessionExpired);
  EXPECT_EQ(s.status(), SessionStatus::expired);
  auto r = s.result();
  EXPECT_FALSE(r.finished);
  EXPECT_EQ(r.ended_at, t0 + 60s);
  EXPECT_EQ(r.items.size(), 1u);
  EXPECT_THROW(s.submit(ChoiceAnswer{0}, t0 + 61s), SessionClosed);
  EXPECT_THROW(s.current_question(), SessionClosed);
  EXPECT_THROW(s.finish(), SessionError);
}

TEST(Engine, AbortKeepsPartialHistory) {
  Session s("a", bundled("fig1_demo"), SessionConfig::make(6, 3), t0);
  s.submit(right(s.current_question()), t0 + 10s);
  s.submit(right(s.current_question()), t0 + 20s);
  auto r = s.abort(t0 + 25s);
  EXPECT_EQ(r.status, SessionStatus::aborted);
  EXPECT_EQ(r.raw_grade, 2);
  EXPECT_EQ(r.items.size(), 2u);
  EXPECT_THROW(s.abort(t0 + 26s), SessionClosed);
}

TEST(Engine, AbortAfterDeadlineReportsExpiry) {
  auto cfg = SessionConfig::make(6, 3);
  cfg.time_limit = 10s;
  Session s("a", bundled("fig1_demo"), cfg, t0);
  EXPECT_EQ(s.abort(t0 + 11s).status, SessionStatus::expired);
}

TEST(Engine, ElapsedTimePerItem) {
  Session s("t", bundled("fig1_demo"), SessionConfig::make(6, 3), t0);
  s.submit(right(s.current_question()), t0 + 12s);
  s.submit(right(s.current_question()), t0 + 40s);
  auto items = s.asked();
  EXPECT_DOUBLE_EQ(items[0].elapsed_s, 12.0);
  EXPECT_DOUBLE_EQ(items[1].elapsed_s, 28.0);
}

TEST(Engine, StrictPoolExhaustionAborts) {
  // The next item is drawn on submit, so a wrong first answer already needs a second level-1 item.
  Session s("p", tiny_bank(3, 1), SessionConfig::make(4, 3), t0);
  try {
    s.submit(wrong(s.current_question()), t0);
    FAIL();
  } catch (const PoolExhausted& e) {
    EXPECT_EQ(e.level, 1);
  }
  EXPECT_EQ(s.status(), SessionStatus::aborted);
  EXPECT_EQ(s.result().end_reason, "pool-exhausted");
}

TEST(Engine, PermissivePoolRepeats) {
  auto cfg = SessionConfig::make(4, 3);
  cfg.pool_policy = PoolPolicy::permissive;
  Session s("p", tiny_bank(3, 1), cfg, t0);
  for (int k = 0; k < 4; ++k) s.submit(wrong(s.current_question()), t0);
  auto r = s.finish();
  EXPECT_EQ(r.repeats, 3);
  EXPECT_TRUE(r.items[1].repeated);
}

TEST(Engine, LinearModeFollowsFixedOrder) {
  auto cfg = SessionConfig::make(3, 3);
  cfg.mode = SessionMode::linear;
  cfg.fixed_order = {"L3-0", "L1-1", "L2-0"};
  Session s("l", tiny_bank(3, 2), cfg, t0);
  std::vector<std::string> ids;
  while (s.status() == SessionStatus::active) {
    ids.push_back(s.current_question().item_id);
    s.submit(right(s.current_question()), t0);
  }
  EXPECT_EQ(ids, cfg.fixed_order);

  cfg.fixed_order = {"L3-0", "L3-0", "L2-0"};
  EXPECT_THROW(Session("l", tiny_bank(3, 2), cfg, t0), Error);
  cfg.fixed_order = {"L3-0", "nope", "L2-0"};
  EXPECT_THROW(Session("l", tiny_bank(3, 2), cfg, t0), Error);
}

TEST(Engine, StartRejectsBanksMissingALevel) {
  EXPECT_THROW(Session("x", tiny_bank(2, 3), SessionConfig::make(6, 3), t0), Error);
  EXPECT_THROW(Session("x", nullptr, SessionConfig::make(6, 3), t0), Error);
}

TEST(Engine, ConfigValidation) {
  auto cfg = SessionConfig::make(6, 3);
  cfg.time_limit = 0s;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = SessionConfig::make(6, 3);
  cfg.n_questions = 5;
  EXPECT_THROW(cfg.validate(), Error);
  EXPECT_THROW(SessionConfig::make(0, 3).validate(), Error);
}
