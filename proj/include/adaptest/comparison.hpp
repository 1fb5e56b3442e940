#pragma once

// Cohort comparison pipeline: normality gate, parametric or rank-based
// omnibus test, pairwise follow-ups, pass-proportion z-tests, and the paired
// signed-rank branch for related samples.

#include <adaptest/attempt_store.hpp>
#include <adaptest/csv.hpp>
#include <adaptest/stats.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace adaptest {

enum class Metric { score, proportion, active_days };

inline std::string to_string(Metric m) {
  switch (m) {
    case Metric::score: return "score";
    case Metric::proportion: return "proportion";
    case Metric::active_days: return "active-days";
  }
  return "unknown";
}

inline Metric metric_from_string(const std::string& s) {
  if (s == "score") return Metric::score;
  if (s == "proportion") return Metric::proportion;
  if (s == "active-days") return Metric::active_days;
  throw ParseError("unknown metric '" + s + "'");
}

enum class Branch { parametric, nonparametric, paired, proportion };

inline std::string to_string(Branch b) {
  switch (b) {
    case Branch::parametric: return "parametric";
    case Branch::nonparametric: return "nonparametric";
    case Branch::paired: return "paired";
    case Branch::proportion: return "proportion";
  }
  return "unknown";
}

struct EmptySlice : Error {
  using Error::Error;
};

struct Slice {
  std::string label;
  std::string cohort;
  std::string period;
  std::vector<double> values;
};

struct Descriptives {
  std::string label;
  std::size_t n = 0;
  double mean = 0.0;
  double sd = 0.0;
};

struct NormalityVerdict {
  std::string label;
  bool normal = false;
  std::optional<stats::TestResult> test;
  std::string reason;
};

struct PairwiseResult {
  std::size_t first = 0;
  std::size_t second = 0;
  stats::TestResult test;
  bool significant = false;
  std::string marker;
};

struct ProportionRow {
  std::string label;
  std::size_t passed = 0;
  std::size_t n = 0;
  double proportion = 0.0;
};

struct ComparisonReport {
  std::string title;
  Metric metric = Metric::score;
  double alpha = 0.05;
  Branch branch = Branch::nonparametric;
  std::vector<std::string> labels;
  std::vector<Descriptives> descriptives;
  std::vector<NormalityVerdict> normality;
  std::optional<stats::TestResult> omnibus;
  bool omnibus_significant = false;
  std::vector<PairwiseResult> pairwise;
  std::vector<ProportionRow> proportions;
};

struct ComparisonOptions {
  double alpha = 0.05;
  bool paired = false;
  double pass_threshold = 5.0;
  stats::Tails tails = stats::Tails::two;
};

inline Descriptives describe(const std::string& label, const std::vector<double>& v) {
  Descriptives d{label, v.size(), 0.0, 0.0};
  if (v.empty()) return d;
  for (double x : v) d.mean += x;
  d.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - d.mean) * (x - d.mean);
    d.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return d;
}

/// Significance marker for a pair of slices: within-cohort period contrasts
/// get a pilcrow; across cohorts, last-vs-first is '*', last-vs-second '#',
/// anything else '$'.
inline std::string pair_marker(const std::vector<Slice>& slices, std::size_t i, std::size_t j) {
  if (!slices[i].cohort.empty() && slices[i].cohort == slices[j].cohort) return "¶";
  std::vector<std::string> cohorts;
  for (const auto& s : slices)
    if (std::find(cohorts.begin(), cohorts.end(), s.cohort) == cohorts.end()) cohorts.push_back(s.cohort);
  auto pos = [&](const std::string& c) {
    return static_cast<std::size_t>(std::find(cohorts.begin(), cohorts.end(), c) - cohorts.begin());
  };
  std::size_t a = std::min(pos(slices[i].cohort), pos(slices[j].cohort));
  std::size_t b = std::max(pos(slices[i].cohort), pos(slices[j].cohort));
  std::size_t last = cohorts.size() - 1;
  if (b == last && a == 0) return "*";
  if (b == last && a == 1) return "#";
  return "$";
}

inline NormalityVerdict check_normality(const Slice& s, double alpha) {
  NormalityVerdict v;
  v.label = s.label;
  if (s.values.size() < 8) {
    v.reason = "n < 8, normality not testable";
    return v;
  }
  try {
    v.test = stats::dagostino_pearson_k2(s.values);
    v.normal = v.test->p_value >= alpha;
    v.reason = v.normal ? "passes normality test" : "fails normality test";
  } catch (const stats::DegenerateData& e) {
    v.reason = e.what();
  }
  return v;
}

inline ComparisonReport compare_cohorts(std::vector<Slice> slices, Metric metric, const ComparisonOptions& opt = {}) {
  if (slices.size() < 2) throw Error("comparison needs at least 2 slices");
  if (metric != Metric::active_days)
    for (auto& s : slices)
      std::erase_if(s.values, [](double v) { return v == kUnfinishedScore; });
  for (const auto& s : slices)
    if (s.values.empty()) throw EmptySlice("slice '" + s.label + "' is empty");

  ComparisonReport rep;
  rep.metric = metric;
  rep.alpha = opt.alpha;
  for (const auto& s : slices) {
    rep.labels.push_back(s.label);
    rep.descriptives.push_back(describe(s.label, s.values));
  }

  auto add_pair = [&](std::size_t i, std::size_t j, stats::TestResult t) {
    bool sig = t.p_value < opt.alpha;
    rep.pairwise.push_back({i, j, std::move(t), sig, sig ? pair_marker(slices, i, j) : std::string{}});
  };

  if (metric == Metric::proportion) {
    rep.branch = Branch::proportion;
    for (const auto& s : slices) {
      std::size_t pass = static_cast<std::size_t>(
          std::count_if(s.values.begin(), s.values.end(), [&](double v) { return v >= opt.pass_threshold; }));
      rep.proportions.push_back({s.label, pass, s.values.size(),
                                 static_cast<double>(pass) / static_cast<double>(s.values.size())});
    }
    for (std::size_t i = 0; i < slices.size(); ++i)
      for (std::size_t j = i + 1; j < slices.size(); ++j) {
        stats::TestResult t;
        try {
          t = stats::z_two_proportions(rep.proportions[i].passed, rep.proportions[i].n, rep.proportions[j].passed,
                                       rep.proportions[j].n, opt.tails);
        } catch (const stats::DegenerateData& e) {
          t.method = "two-proportion z-test";
          t.n = {rep.proportions[i].n, rep.proportions[j].n};
          t.notes = e.what();
        }
        add_pair(i, j, std::move(t));
      }
    return rep;
  }

  if (opt.paired) {
    if (slices.size() != 2 || slices[0].values.size() != slices[1].values.size())
      throw Error("paired comparison needs exactly 2 aligned slices");
    rep.branch = Branch::paired;
    stats::TestResult t;
    try {
      t = stats::wilcoxon_signed_rank(slices[0].values, slices[1].values, opt.tails);
    } catch (const stats::DegenerateData& e) {
      t.method = "Wilcoxon signed-rank";
      t.notes = e.what();
    }
    rep.omnibus = t;
    rep.omnibus_significant = t.p_value < opt.alpha;
    add_pair(0, 1, std::move(t));
    return rep;
  }

  bool all_normal = true;
  for (const auto& s : slices) {
    rep.normality.push_back(check_normality(s, opt.alpha));
    all_normal = all_normal && rep.normality.back().normal;
  }
  rep.branch = all_normal ? Branch::parametric : Branch::nonparametric;

  auto pair_test = [&](std::size_t i, std::size_t j) {
    if (all_normal) {
      try {
        return stats::t_test_unpaired(slices[i].values, slices[j].values, opt.tails);
      } catch (const stats::DegenerateData& e) {
        stats::TestResult t;
        t.method = "unpaired t-test";
        t.notes = e.what();
        return t;
      }
    }
    return stats::mann_whitney_u(slices[i].values, slices[j].values, opt.tails);
  };

  if (slices.size() == 2) {
    rep.omnibus = pair_test(0, 1);
    rep.omnibus_significant = rep.omnibus->p_value < opt.alpha;
    add_pair(0, 1, *rep.omnibus);
    return rep;
  }

  std::vector<std::vector<double>> groups;
  for (const auto& s : slices) groups.push_back(s.values);
  if (all_normal) {
    try {
      rep.omnibus = stats::anova_oneway(groups);
    } catch (const stats::DegenerateData& e) {
      stats::TestResult t;
      t.method = "one-way ANOVA";
      t.notes = e.what();
      rep.omnibus = t;
    }
  } else {
    rep.omnibus = stats::kruskal_wallis(groups);
  }
  rep.omnibus_significant = rep.omnibus->p_value < opt.alpha;
  if (rep.omnibus_significant)
    for (std::size_t i = 0; i < slices.size(); ++i)
      for (std::size_t j = i + 1; j < slices.size(); ++j) add_pair(i, j, pair_test(i, j));
  return rep;
}

// ---------------------------------------------------------------------------
// Building slices from datasets

/// Per-student active days in `ds`, keyed by student.
inline std::map<std::string, double> active_days_by_student(const CohortDataset& ds,
                                                             std::chrono::minutes utc_offset = {}) {
  std::map<std::string, double> out;
  for (const auto& [s, d] : activity_metrics(ds.attempts, utc_offset).active_days_by_student)
    out[s] = static_cast<double>(d);
  return out;
}

/// Active days for the same students in two datasets, aligned by student_id.
/// Students absent from one dataset count 0 days there.
inline std::vector<Slice> paired_active_days(const CohortDataset& a, const CohortDataset& b, std::string label_a,
                                             std::string label_b) {
  auto da = active_days_by_student(a);
  auto db = active_days_by_student(b);
  std::set<std::string> students;
  for (const auto& [s, _] : da) students.insert(s);
  for (const auto& [s, _] : db) students.insert(s);
  Slice sa{std::move(label_a), a.cohort_id, "", {}};
  Slice sb{std::move(label_b), b.cohort_id, "", {}};
  for (const auto& s : students) {
    sa.values.push_back(da.count(s) ? da[s] : 0.0);
    sb.values.push_back(db.count(s) ? db[s] : 0.0);
  }
  return {sa, sb};
}

/// Signed-rank comparison of per-student active days between two datasets of
/// the same students.
inline ComparisonReport analyze_paired_active_days(const CohortDataset& a, const CohortDataset& b,
                                                   const std::string& label_a, const std::string& label_b,
                                                   const ComparisonOptions& opt = {}) {
  ComparisonOptions o = opt;
  o.paired = true;
  auto rep = compare_cohorts(paired_active_days(a, b, label_a, label_b), Metric::active_days, o);
  rep.title = "paired " + label_a + " vs " + label_b;
  return rep;
}

inline Slice make_slice(const std::string& label, const std::string& cohort, const std::string& period,
                        std::span<const AttemptRecord> attempts, Metric metric) {
  Slice s{label, cohort, period, {}};
  if (metric == Metric::active_days) {
    for (const auto& [_, d] : activity_metrics(attempts).active_days_by_student) s.values.push_back(static_cast<double>(d));
  } else {
    s.values = finished_scores(attempts);
  }
  return s;
}

/// Pre/post boundary: an absolute date, or a month-day applied within each
/// attempt's own year so earlier cohorts are split at the equivalent date.
struct PeriodSplit {
  std::variant<TimePoint, std::chrono::month_day> at;

  /// "YYYY-MM-DD" or "MM-DD".
  static PeriodSplit parse(const std::string& s) {
    if (s.size() == 5 && s[2] == '-') {
      std::chrono::month_day md{std::chrono::month{parse_int<unsigned>(s.substr(0, 2))},
                                std::chrono::day{parse_int<unsigned>(s.substr(3, 2))}};
      if (!md.ok()) throw ParseError("bad split date '" + s + "'");
      return {md};
    }
    return {parse_iso8601(s)};
  }

  bool is_post(TimePoint t) const {
    if (const auto* abs = std::get_if<TimePoint>(&at)) return t >= *abs;
    std::chrono::year_month_day ymd{std::chrono::floor<std::chrono::days>(t)};
    const auto& md = std::get<std::chrono::month_day>(at);
    return std::chrono::month_day{ymd.month(), ymd.day()} >= md;
  }
};

/// Sections of a cohort analysis. Without a split: one comparison across
/// cohorts. With a split: one cross-cohort comparison per period, then one
/// pre/post comparison per cohort.
inline std::vector<ComparisonReport> analyze_cohorts(const std::vector<CohortDataset>& cohorts, Metric metric,
                                                     std::optional<PeriodSplit> split, const ComparisonOptions& opt = {}) {
  std::vector<ComparisonReport> out;
  auto label_of = [](const CohortDataset& ds) { return ds.cohort_id.empty() ? std::string("cohort") : ds.cohort_id; };

  if (!split) {
    std::vector<Slice> slices;
    for (const auto& ds : cohorts) slices.push_back(make_slice(label_of(ds), label_of(ds), "", ds.attempts, metric));
    auto rep = compare_cohorts(std::move(slices), metric, opt);
    rep.title = "cohorts";
    out.push_back(std::move(rep));
    return out;
  }

  const std::vector<std::string> periods = {"pre", "post"};
  std::map<std::string, std::map<std::string, std::vector<AttemptRecord>>> parts;
  for (const auto& ds : cohorts) {
    auto& by_period = parts[label_of(ds)];
    by_period["pre"];
    by_period["post"];
    for (const auto& a : ds.attempts) by_period[split->is_post(a.started_at) ? "post" : "pre"].push_back(a);
  }

  if (cohorts.size() >= 2) {
    for (const auto& p : periods) {
      std::vector<Slice> slices;
      for (const auto& ds : cohorts)
        slices.push_back(make_slice(label_of(ds) + "/" + p, label_of(ds), p, parts[label_of(ds)][p], metric));
      auto rep = compare_cohorts(std::move(slices), metric, opt);
      rep.title = "period " + p;
      out.push_back(std::move(rep));
    }
  }
  for (const auto& ds : cohorts) {
    std::vector<Slice> slices;
    for (const auto& p : periods)
      slices.push_back(make_slice(label_of(ds) + "/" + p, label_of(ds), p, parts[label_of(ds)][p], metric));
    ComparisonOptions o = opt;
    o.paired = false;
    auto rep = compare_cohorts(std::move(slices), metric, o);
    rep.title = "cohort " + label_of(ds);
    out.push_back(std::move(rep));
  }
  return out;
}

/// Entry point shared by the CLI and the report endpoint. Paired mode compares
/// per-student active days of exactly two cohorts.
inline std::vector<ComparisonReport> analyze(const std::vector<CohortDataset>& cohorts, Metric metric,
                                             std::optional<PeriodSplit> split, bool paired,
                                             const ComparisonOptions& opt = {}) {
  if (paired) {
    if (cohorts.size() != 2) throw Error("paired analysis needs exactly 2 cohorts, got " + std::to_string(cohorts.size()));
    if (metric != Metric::active_days) throw Error("paired analysis compares per-student active days; use metric active-days");
    return {analyze_paired_active_days(cohorts[0], cohorts[1], cohorts[0].cohort_id, cohorts[1].cohort_id, opt)};
  }
  if (cohorts.size() < 2 && !split) throw Error("analysis needs at least 2 cohorts or a split");
  ComparisonOptions o = opt;
  o.paired = false;
  return analyze_cohorts(cohorts, metric, split, o);
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json to_json(const stats::TestResult& t) {
  nlohmann::json j = {{"method", t.method}, {"statistic", t.statistic}, {"p_value", t.p_value},
                      {"tails", stats::to_string(t.tails)}, {"n", t.n}, {"exact", t.exact}};
  if (t.df) j["df"] = *t.df;
  if (t.df2) j["df2"] = *t.df2;
  if (t.exact) {
    j["extreme_count"] = t.extreme_count;
    j["total_count"] = t.total_count;
  }
  if (!t.notes.empty()) j["notes"] = t.notes;
  return j;
}

inline nlohmann::json to_json(const ComparisonReport& r) {
  nlohmann::json j;
  j["title"] = r.title;
  j["metric"] = to_string(r.metric);
  j["alpha"] = r.alpha;
  j["branch"] = to_string(r.branch);
  j["groups"] = nlohmann::json::array();
  for (const auto& d : r.descriptives) j["groups"].push_back({{"label", d.label}, {"n", d.n}, {"mean", d.mean}, {"sd", d.sd}});
  j["normality"] = nlohmann::json::array();
  for (const auto& v : r.normality) {
    nlohmann::json n = {{"label", v.label}, {"normal", v.normal}, {"reason", v.reason}};
    if (v.test) n["test"] = to_json(*v.test);
    j["normality"].push_back(std::move(n));
  }
  j["omnibus"] = r.omnibus ? to_json(*r.omnibus) : nlohmann::json(nullptr);
  j["omnibus_significant"] = r.omnibus_significant;
  j["pairwise"] = nlohmann::json::array();
  for (const auto& p : r.pairwise)
    j["pairwise"].push_back({{"first", r.labels[p.first]}, {"second", r.labels[p.second]}, {"test", to_json(p.test)},
                             {"significant", p.significant}, {"marker", p.marker}});
  if (!r.proportions.empty()) {
    j["proportions"] = nlohmann::json::array();
    for (const auto& p : r.proportions)
      j["proportions"].push_back({{"label", p.label}, {"passed", p.passed}, {"n", p.n}, {"proportion", p.proportion}});
  }
  return j;
}

namespace detail {
inline std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}
inline std::string pvalue(double p) {
  if (p < 1e-4) return "<0.0001";
  return fixed(p, 4);
}
}  // namespace detail

/// Human-readable report: mean +- SD per group with significance markers on
/// the later group of each significant pair, then the test details.
inline void write_text_report(std::ostream& os, const std::vector<ComparisonReport>& sections) {
  for (const auto& r : sections) {
    os << "== " << r.title << " (" << to_string(r.metric) << ", " << to_string(r.branch) << " branch, alpha "
       << detail::fixed(r.alpha, 2) << ")\n";
    for (std::size_t i = 0; i < r.descriptives.size(); ++i) {
      const auto& d = r.descriptives[i];
      std::string marks;
      for (const auto& p : r.pairwise)
        if (p.significant && p.second == i && marks.find(p.marker) == std::string::npos) marks += p.marker;
      os << "  " << std::left << std::setw(24) << d.label << " n=" << std::setw(5) << d.n;
      if (r.metric == Metric::proportion) {
        const auto& pr = r.proportions[i];
        os << " pass " << pr.passed << "/" << pr.n << " (" << detail::fixed(100.0 * pr.proportion, 1) << "%)";
      } else {
        os << " " << detail::fixed(d.mean, 2) << " ± " << detail::fixed(d.sd, 2);
      }
      if (!marks.empty()) os << " " << marks;
      os << "\n";
    }
    for (const auto& v : r.normality) {
      os << "  normality " << v.label << ": " << (v.normal ? "normal" : "not normal");
      if (v.test) os << " (K2=" << detail::fixed(v.test->statistic, 3) << ", p=" << detail::pvalue(v.test->p_value) << ")";
      else os << " (" << v.reason << ")";
      os << "\n";
    }
    if (r.omnibus)
      os << "  omnibus " << r.omnibus->method << ": statistic=" << detail::fixed(r.omnibus->statistic, 4)
         << " p=" << detail::pvalue(r.omnibus->p_value) << (r.omnibus->exact ? " (exact)" : "") << "\n";
    for (const auto& p : r.pairwise)
      os << "  " << r.labels[p.first] << " vs " << r.labels[p.second] << ": " << p.test.method
         << " statistic=" << detail::fixed(p.test.statistic, 4) << " p=" << detail::pvalue(p.test.p_value)
         << (p.significant ? " " + p.marker : std::string{}) << "\n";
  }
}

/// Pairwise table: section,first,second,method,statistic,p_value,exact,significant,marker
inline void write_pairwise_csv(std::ostream& os, const std::vector<ComparisonReport>& sections) {
  csv::write_row(os, {"section", "first", "second", "method", "statistic", "p_value", "exact", "significant", "marker"});
  for (const auto& r : sections)
    for (const auto& p : r.pairwise)
      csv::write_row(os, {r.title, r.labels[p.first], r.labels[p.second], p.test.method, format_double(p.test.statistic),
                          format_double(p.test.p_value), p.test.exact ? "true" : "false",
                          p.significant ? "true" : "false", p.marker});
}

}  // namespace adaptest
