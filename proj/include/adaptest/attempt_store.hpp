#pragma once

// Attempt records, the append-only store that holds them, CSV export/import,
// and the activity/score queries the analytics pipeline runs on them.
//
// Unfinished attempts carry score -1. Every score aggregate skips them; every
// activity aggregate (attempt counts, active days) includes them.

#include <adaptest/common.hpp>
#include <adaptest/csv.hpp>
#include <adaptest/engine.hpp>
#include <adaptest/timeutil.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace adaptest {

inline constexpr double kUnfinishedScore = -1.0;

struct ItemRow {
  int k = 0;
  std::string item_id;
  int level = 1;
  double phi_binary = 0.0;
  double phi_scoring = 0.0;
  double elapsed_s = 0.0;

  bool operator==(const ItemRow&) const = default;
};

struct AttemptRecord {
  std::string attempt_id;
  std::string student_id;
  std::string cohort_id;
  std::string test_id;
  TimePoint started_at{};
  TimePoint ended_at{};
  bool finished = false;
  double score = kUnfinishedScore;
  std::vector<ItemRow> items;

  bool operator==(const AttemptRecord&) const = default;

  void validate() const {
    auto fail = [&](const std::string& why) { throw ValidationError("", "attempt '" + attempt_id + "': " + why); };
    if (attempt_id.empty()) fail("empty attempt_id");
    if (student_id.empty()) fail("empty student_id");
    if (ended_at < started_at) fail("ended_at precedes started_at");
    if (finished && !(score >= 0.0)) fail("finished attempt must have a score >= 0");
    if (!finished && score != kUnfinishedScore) fail("unfinished attempt must have score -1");
  }
};

/// Converts an engine result into a record. Finished scores are floored at 0
/// (guess-corrected sessions can go negative); unfinished ones become -1.
inline AttemptRecord make_attempt_record(const SessionResult& r, std::string attempt_id, std::string student_id,
                                         std::string cohort_id, std::string test_id) {
  AttemptRecord a;
  a.attempt_id = std::move(attempt_id);
  a.student_id = std::move(student_id);
  a.cohort_id = std::move(cohort_id);
  a.test_id = std::move(test_id);
  a.started_at = r.started_at;
  a.ended_at = r.ended_at;
  a.finished = r.finished;
  a.score = r.finished ? std::max(0.0, r.final_grade) : kUnfinishedScore;
  for (const auto& it : r.items) a.items.push_back({it.k, it.item_id, it.level, it.phi_binary, it.phi_scoring, it.elapsed_s});
  return a;
}

inline nlohmann::json to_json(const AttemptRecord& a) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& r : a.items)
    items.push_back({{"k", r.k}, {"item_id", r.item_id}, {"level", r.level}, {"phi_binary", r.phi_binary},
                     {"phi_scoring", r.phi_scoring}, {"elapsed_s", r.elapsed_s}});
  return {{"attempt_id", a.attempt_id}, {"student_id", a.student_id}, {"cohort_id", a.cohort_id},
          {"test_id", a.test_id},       {"started_at", format_iso8601(a.started_at)},
          {"ended_at", format_iso8601(a.ended_at)}, {"finished", a.finished}, {"score", a.score},
          {"items", std::move(items)}};
}

inline AttemptRecord attempt_from_json(const nlohmann::json& j) {
  AttemptRecord a;
  try {
    a.attempt_id = j.at("attempt_id").get<std::string>();
    a.student_id = j.at("student_id").get<std::string>();
    a.cohort_id = j.at("cohort_id").get<std::string>();
    a.test_id = j.at("test_id").get<std::string>();
    a.started_at = parse_iso8601(j.at("started_at").get<std::string>());
    a.ended_at = parse_iso8601(j.at("ended_at").get<std::string>());
    a.finished = j.at("finished").get<bool>();
    a.score = j.at("score").get<double>();
    for (const auto& r : j.at("items"))
      a.items.push_back({r.at("k").get<int>(), r.at("item_id").get<std::string>(), r.at("level").get<int>(),
                         r.at("phi_binary").get<double>(), r.at("phi_scoring").get<double>(),
                         r.at("elapsed_s").get<double>()});
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed attempt record: ") + e.what());
  }
  return a;
}

// ---------------------------------------------------------------------------

struct Period {
  std::string name;
  TimePoint start{};
  TimePoint end{};  // exclusive

  bool contains(TimePoint t) const noexcept { return t >= start && t < end; }
};

struct CohortDataset {
  std::string cohort_id;
  std::vector<AttemptRecord> attempts;
  std::vector<Period> periods;

  /// Throws if two periods overlap.
  void validate_periods() const {
    for (std::size_t i = 0; i < periods.size(); ++i)
      for (std::size_t j = i + 1; j < periods.size(); ++j)
        if (periods[i].start < periods[j].end && periods[j].start < periods[i].end)
          throw ValidationError("", "periods '" + periods[i].name + "' and '" + periods[j].name + "' overlap");
  }

  std::set<std::string> cohort_ids() const {
    std::set<std::string> out;
    for (const auto& a : attempts) out.insert(a.cohort_id);
    return out;
  }
};

/// Two periods, "pre" before `split` and "post" from `split` on.
inline std::vector<Period> split_periods(TimePoint split) {
  auto lo = TimePoint{std::chrono::seconds{std::numeric_limits<std::int32_t>::min()}};
  auto hi = TimePoint{std::chrono::seconds{std::numeric_limits<std::int64_t>::max() / 4}};
  return {{"pre", lo, split}, {"post", split, hi}};
}

inline void sort_chronologically(std::vector<AttemptRecord>& v) {
  std::stable_sort(v.begin(), v.end(), [](const AttemptRecord& a, const AttemptRecord& b) {
    if (a.started_at != b.started_at) return a.started_at < b.started_at;
    return a.attempt_id < b.attempt_id;
  });
}

// ---------------------------------------------------------------------------
// CSV

inline const std::vector<std::string>& summary_columns() {
  static const std::vector<std::string> cols = {"attempt_id", "student_id", "cohort_id", "test_id",
                                                "started_at", "ended_at",   "finished",  "score"};
  return cols;
}

inline const std::vector<std::string>& detail_columns() {
  static const std::vector<std::string> cols = {"attempt_id",  "k",           "item_id",  "level",
                                                "phi_binary", "phi_scoring", "elapsed_s"};
  return cols;
}

/// Writes the summary table (one row per attempt) and the detail table (one
/// row per answered item), both in chronological attempt order.
inline void export_csv(std::span<const AttemptRecord> records, std::ostream& summary, std::ostream& detail) {
  std::vector<AttemptRecord> sorted(records.begin(), records.end());
  sort_chronologically(sorted);
  csv::write_row(summary, summary_columns());
  csv::write_row(detail, detail_columns());
  for (const auto& a : sorted) {
    csv::write_row(summary, {a.attempt_id, a.student_id, a.cohort_id, a.test_id, format_iso8601(a.started_at),
                             format_iso8601(a.ended_at), a.finished ? "true" : "false", format_double(a.score)});
    for (const auto& r : a.items)
      csv::write_row(detail, {a.attempt_id, std::to_string(r.k), r.item_id, std::to_string(r.level),
                              format_double(r.phi_binary), format_double(r.phi_scoring), format_double(r.elapsed_s)});
  }
}

struct RowError {
  std::string file;
  std::size_t line = 0;
  std::string message;
};

struct ImportError : ParseError {
  explicit ImportError(std::vector<RowError> errs) : ParseError(describe(errs)), errors(std::move(errs)) {}
  std::vector<RowError> errors;

 private:
  static std::string describe(const std::vector<RowError>& errs) {
    std::string s = std::to_string(errs.size()) + " bad row(s)";
    for (const auto& e : errs) s += "; " + e.file + ":" + std::to_string(e.line) + ": " + e.message;
    return s;
  }
};

/// Reads the summary table and, when given, the detail table. Schema
/// mismatches throw ParseError; bad rows are collected into one ImportError.
inline CohortDataset import_csv(std::istream& summary, std::istream* detail = nullptr) {
  CohortDataset ds;
  std::vector<RowError> errors;
  std::unordered_map<std::string, std::size_t> index;

  for (auto& row : csv::read_table(summary, summary_columns(), "summary")) {
    try {
      if (row.fields.size() != summary_columns().size()) throw ParseError("expected 8 fields");
      AttemptRecord a;
      a.attempt_id = row.fields[0];
      a.student_id = row.fields[1];
      a.cohort_id = row.fields[2];
      a.test_id = row.fields[3];
      a.started_at = parse_iso8601(row.fields[4]);
      a.ended_at = parse_iso8601(row.fields[5]);
      if (row.fields[6] == "true") a.finished = true;
      else if (row.fields[6] == "false") a.finished = false;
      else throw ParseError("finished must be true or false");
      a.score = parse_double(row.fields[7]);
      a.validate();
      if (!index.emplace(a.attempt_id, ds.attempts.size()).second) throw ParseError("duplicate attempt_id");
      ds.attempts.push_back(std::move(a));
    } catch (const Error& e) {
      errors.push_back({"summary", row.line, e.what()});
    }
  }

  if (detail) {
    for (auto& row : csv::read_table(*detail, detail_columns(), "detail")) {
      try {
        if (row.fields.size() != detail_columns().size()) throw ParseError("expected 7 fields");
        auto it = index.find(row.fields[0]);
        if (it == index.end()) throw ParseError("unknown attempt_id '" + row.fields[0] + "'");
        ds.attempts[it->second].items.push_back({parse_int<int>(row.fields[1]), row.fields[2],
                                                 parse_int<int>(row.fields[3]), parse_double(row.fields[4]),
                                                 parse_double(row.fields[5]), parse_double(row.fields[6])});
      } catch (const Error& e) {
        errors.push_back({"detail", row.line, e.what()});
      }
    }
  }
  if (!errors.empty()) throw ImportError(std::move(errors));

  for (auto& a : ds.attempts)
    std::stable_sort(a.items.begin(), a.items.end(), [](const ItemRow& x, const ItemRow& y) { return x.k < y.k; });
  auto ids = ds.cohort_ids();
  if (ids.size() == 1) ds.cohort_id = *ids.begin();
  return ds;
}

// ---------------------------------------------------------------------------
// Queries

struct AttemptQuery {
  std::optional<std::string> cohort;
  std::optional<std::string> period;
  std::optional<std::string> test_id;
  bool finished_only = false;
  std::optional<double> min_score;
  std::optional<double> max_score;
  std::chrono::minutes utc_offset{0};  // day boundary for active-day counting
};

struct ActivityMetrics {
  std::size_t attempts = 0;
  std::size_t students = 0;
  double attempts_per_student = 0.0;
  double mean_active_days = 0.0;
  std::map<std::string, std::size_t> attempts_by_student;
  std::map<std::string, std::size_t> active_days_by_student;
  std::map<std::string, std::size_t> attempts_per_day;  // "YYYY-MM-DD"
};

struct ScoreSummary {
  std::size_t n = 0;
  double mean = 0.0;
  double sd = 0.0;  // sample SD, 0 when n < 2
};

struct QueryResult {
  std::vector<AttemptRecord> attempts;
  ActivityMetrics activity;
  ScoreSummary scores;
};

inline ActivityMetrics activity_metrics(std::span<const AttemptRecord> attempts,
                                        std::chrono::minutes utc_offset = std::chrono::minutes{0}) {
  ActivityMetrics m;
  std::map<std::string, std::set<std::chrono::sys_days>> days;
  for (const auto& a : attempts) {
    auto d = calendar_day(a.started_at, utc_offset);
    ++m.attempts_by_student[a.student_id];
    days[a.student_id].insert(d);
    ++m.attempts_per_day[format_date(d)];
  }
  m.attempts = attempts.size();
  m.students = m.attempts_by_student.size();
  std::size_t total_days = 0;
  for (const auto& [s, set] : days) {
    m.active_days_by_student[s] = set.size();
    total_days += set.size();
  }
  if (m.students) {
    m.attempts_per_student = static_cast<double>(m.attempts) / static_cast<double>(m.students);
    m.mean_active_days = static_cast<double>(total_days) / static_cast<double>(m.students);
  }
  return m;
}

/// Mean and SD over finished attempts only.
inline ScoreSummary score_summary(std::span<const AttemptRecord> attempts) {
  ScoreSummary s;
  double sum = 0.0;
  for (const auto& a : attempts)
    if (a.finished) {
      ++s.n;
      sum += a.score;
    }
  if (s.n == 0) return s;
  s.mean = sum / static_cast<double>(s.n);
  if (s.n > 1) {
    double ss = 0.0;
    for (const auto& a : attempts)
      if (a.finished) ss += (a.score - s.mean) * (a.score - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(s.n - 1));
  }
  return s;
}

inline QueryResult query(const CohortDataset& ds, const AttemptQuery& q) {
  const Period* period = nullptr;
  if (q.period) {
    auto it = std::find_if(ds.periods.begin(), ds.periods.end(), [&](const Period& p) { return p.name == *q.period; });
    if (it == ds.periods.end()) throw Error("unknown period '" + *q.period + "'");
    period = &*it;
  }
  if (q.cohort && !ds.cohort_ids().count(*q.cohort) && ds.cohort_id != *q.cohort)
    throw Error("unknown cohort '" + *q.cohort + "'");

  QueryResult r;
  for (const auto& a : ds.attempts) {
    if (q.cohort && a.cohort_id != *q.cohort) continue;
    if (q.test_id && a.test_id != *q.test_id) continue;
    if (period && !period->contains(a.started_at)) continue;
    if (q.finished_only && !a.finished) continue;
    if (q.min_score && a.score < *q.min_score) continue;
    if (q.max_score && a.score > *q.max_score) continue;
    r.attempts.push_back(a);
  }
  sort_chronologically(r.attempts);
  r.activity = activity_metrics(r.attempts, q.utc_offset);
  r.scores = score_summary(r.attempts);
  return r;
}

/// Scores of finished attempts, chronological.
inline std::vector<double> finished_scores(std::span<const AttemptRecord> attempts) {
  std::vector<double> out;
  for (const auto& a : attempts)
    if (a.finished) out.push_back(a.score);
  return out;
}

// ---------------------------------------------------------------------------
// Store

/// Append-only attempt log. With a path, each record is persisted as one JSON
/// line and the file is replayed on open. One writer at a time; readers get
/// consistent snapshots.
class AttemptStore {
 public:
  enum class AppendStatus { stored, duplicate };

  AttemptStore() = default;

  explicit AttemptStore(std::filesystem::path path) : path_(std::move(path)) {
    std::ifstream in(path_);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (line.empty()) continue;
      AttemptRecord a;
      try {
        a = attempt_from_json(nlohmann::json::parse(line));
      } catch (const std::exception& e) {
        throw ParseError(path_.string() + ":" + std::to_string(n) + ": " + e.what());
      }
      insert(std::move(a));
    }
  }

  AppendStatus append(const AttemptRecord& a) {
    a.validate();
    std::unique_lock lock(mu_);
    if (auto it = index_.find(a.attempt_id); it != index_.end()) {
      if (records_[it->second] == a) return AppendStatus::duplicate;
      throw ValidationError("", "attempt '" + a.attempt_id + "' already stored with a different payload");
    }
    if (!path_.empty()) {
      std::ofstream out(path_, std::ios::app);
      out << to_json(a).dump() << '\n';
      out.flush();
      if (!out) throw Error("cannot write attempt store " + path_.string());
    }
    insert(a);
    return AppendStatus::stored;
  }

  std::vector<AttemptRecord> snapshot() const {
    std::shared_lock lock(mu_);
    return records_;
  }

  std::size_t size() const {
    std::shared_lock lock(mu_);
    return records_.size();
  }

  /// All records, or those of one cohort, as a dataset.
  CohortDataset dataset(const std::optional<std::string>& cohort = std::nullopt) const {
    CohortDataset ds;
    if (cohort) ds.cohort_id = *cohort;
    for (auto& a : snapshot())
      if (!cohort || a.cohort_id == *cohort) ds.attempts.push_back(std::move(a));
    sort_chronologically(ds.attempts);
    return ds;
  }

 private:
  void insert(AttemptRecord a) {
    index_.emplace(a.attempt_id, records_.size());
    records_.push_back(std::move(a));
  }

  std::filesystem::path path_;
  mutable std::shared_mutex mu_;
  std::vector<AttemptRecord> records_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace adaptest
