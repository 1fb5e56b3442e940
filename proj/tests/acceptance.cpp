// Acceptance checks. One PASS/FAIL line per criterion; exit status is the
// number of failures.

#include "oracles.hpp"

#include <adaptest/attempt_store.hpp>
#include <adaptest/comparison.hpp>
#include <adaptest/engine.hpp>
#include <adaptest/simulator.hpp>
#include <adaptest/stats.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <bit>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace adaptest;

namespace {

const fs::path kData = ADAPTEST_DATA_DIR;

struct Outcome {
  bool pass = true;
  std::string detail;
};

struct Check {
  int id;
  std::string name;
  double budget_s;
  std::function<Outcome()> run;
};

std::shared_ptr<const ItemBank> bank(const std::string& name) {
  std::ifstream in(kData / "banks" / (name + ".json"));
  if (!in) throw Error("missing bank " + name);
  return std::make_shared<const ItemBank>(load_bank(in));
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot read " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

CohortDataset dataset(const std::string& scenario, const std::string& group) {
  fs::path dir = kData / "datasets" / scenario;
  std::ifstream s(dir / (group + ".csv")), d(dir / "items" / (group + ".csv"));
  if (!s || !d) throw Error("missing dataset " + scenario + "/" + group);
  return import_csv(s, &d);
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os << std::setprecision(digits) << v;
  return os.str();
}

// 1 -------------------------------------------------------------------------
Outcome lattice() {
  auto b = bank("fig1_demo");
  auto cfg = SessionConfig::make(6, 3);
  int mismatches = 0;
  for (unsigned mask = 0; mask < 64; ++mask) {
    Session s("lattice", b, cfg, TimePoint{});
    int correct = 0, prev_level = 1;
    for (int k = 1; k <= 6; ++k) {
      const Question& q = s.current_question();
      int predicted = std::min(3, 1 + correct / 2);
      if (q.level != predicted || q.level < prev_level) ++mismatches;
      prev_level = q.level;
      bool right = mask >> (k - 1) & 1u;
      std::size_t pick = right ? *q.correct_index : (*q.correct_index + 1) % q.options.size();
      s.submit(ChoiceAnswer{pick}, TimePoint{std::chrono::seconds{10 * k}});
      correct += right;
    }
    auto r = s.result();
    if (r.raw_grade != std::popcount(mask)) ++mismatches;
    if (std::fabs(r.final_grade - 10.0 * std::popcount(mask) / 6.0) > 1e-12) ++mismatches;
    if (mask == 0 && (r.raw_grade != 0 || r.final_level != 1)) ++mismatches;
    if (mask == 63 && (r.raw_grade != 6 || r.final_level != 3)) ++mismatches;
  }
  return {mismatches == 0, "64 sequences, " + std::to_string(mismatches) + " mismatches"};
}

// 2 -------------------------------------------------------------------------
Outcome guessing_null() {
  auto b = bank("dwtf_theory");
  auto cfg = SessionConfig::make(18, 3, ScoringMode::corrected);
  AbilityProfile guesser{{1.0 / 3, 1.0 / 3, 1.0 / 3}, 0.5};
  const int n = 10000;
  double sum = 0, sum2 = 0;
  for (int i = 0; i < n; ++i) {
    double s = simulate_session(guesser, b, cfg, mix_seed(42, static_cast<std::uint64_t>(i))).score;
    sum += s;
    sum2 += s * s;
  }
  double mean = sum / n;
  double se = std::sqrt((sum2 / n - mean * mean) * n / (n - 1) / n);
  return {std::fabs(mean) <= 3 * se, "mean S " + fmt(mean) + ", 3 SE " + fmt(3 * se)};
}

// 3 -------------------------------------------------------------------------
Outcome band_clustering() {
  auto ds = dataset("applied_computing_2017", "ac-2017");
  std::map<int, int> freq;  // score grid index j for score 10 j / 12
  for (double v : finished_scores(ds.attempts)) {
    double j = v * 12.0 / 10.0;
    if (std::fabs(j - std::round(j)) > 1e-6) return {false, "score off the 12-step grid: " + fmt(v)};
    ++freq[static_cast<int>(std::lround(j))];
  }
  double interior = 0;
  for (int j = 1; j <= 11; ++j) interior += freq[j];
  interior /= 11.0;
  bool ok = freq[3] > interior && freq[6] > interior && freq[9] > interior;
  return {ok, "freq(2.5,5,7.5) = " + std::to_string(freq[3]) + "," + std::to_string(freq[6]) + "," +
                  std::to_string(freq[9]) + " vs interior mean " + fmt(interior)};
}

// 4 -------------------------------------------------------------------------
Outcome nonparametric_oracles() {
  Rng rng(20240501);
  auto draw = [&](std::size_t n, bool ties) {
    std::vector<double> v(n);
    for (auto& x : v) x = ties ? static_cast<double>(uniform_index(rng, 4)) : uniform01(rng);
    return v;
  };
  std::size_t cases = 0, bad = 0;
  double worst = 0;
  auto check = [&](const stats::TestResult& r, const oracle::ExactP& o) {
    ++cases;
    double diff = std::fabs(r.p_value - o.p());
    worst = std::max(worst, diff);
    if (!r.exact || diff > 1e-12 || r.extreme_count != o.extreme || r.total_count != o.total) ++bad;
  };

  for (std::size_t na = 1; na <= 6; ++na)
    for (std::size_t nb = 1; na + nb <= 7; ++nb)
      for (int rep = 0; rep < 30; ++rep)
        for (bool two : {true, false}) {
          auto a = draw(na, rep % 2 == 0), b = draw(nb, rep % 2 == 0);
          check(stats::mann_whitney_u(a, b, two ? stats::Tails::two : stats::Tails::one),
                oracle::mann_whitney(a, b, two));
        }

  for (std::size_t n = 1; n <= 10; ++n)
    for (int rep = 0; rep < 30; ++rep)
      for (bool two : {true, false}) {
        std::vector<double> d(n);
        do {
          for (auto& x : d) x = rep % 2 == 0 ? static_cast<double>(uniform_index(rng, 9)) - 4.0 : uniform01(rng) - 0.5;
        } while (std::all_of(d.begin(), d.end(), [](double x) { return x == 0.0; }));
        check(stats::wilcoxon_signed_rank(d, two ? stats::Tails::two : stats::Tails::one), oracle::wilcoxon(d, two));
      }

  std::function<void(std::vector<std::size_t>&, std::size_t)> sizes_rec = [&](std::vector<std::size_t>& sizes,
                                                                             std::size_t left) {
    if (sizes.size() >= 2)
      for (int rep = 0; rep < 10; ++rep) {
        std::vector<std::vector<double>> groups;
        for (auto s : sizes) groups.push_back(draw(s, rep % 2 == 0));
        check(stats::kruskal_wallis(groups), oracle::kruskal_wallis(groups));
      }
    if (sizes.size() == 4) return;
    for (std::size_t s = 1; s <= left; ++s) {
      sizes.push_back(s);
      sizes_rec(sizes, left - s);
      sizes.pop_back();
    }
  };
  std::vector<std::size_t> sizes;
  sizes_rec(sizes, 7);

  return {bad == 0, std::to_string(cases) + " inputs, " + std::to_string(bad) + " mismatches, max |dp| " + fmt(worst)};
}

// 5 -------------------------------------------------------------------------
Outcome wilcoxon_anchor() {
  auto crit = stats::wilcoxon_critical_value(14, 0.05, stats::Tails::one);
  double at25 = oracle::signed_rank_cdf(14, 25), at26 = oracle::signed_rank_cdf(14, 26);
  bool enum_ok = at25 <= 0.05 && at26 > 0.05;

  // 14 nonzero differences whose negative midranks sum to 15.5 (ranks 1, 3.5, 5, 6).
  std::vector<double> d = {-1, 2, -3, 3, -5, -6, 7, 8, 9, 10, 11, 12, 13, 14};
  auto r = stats::wilcoxon_signed_rank(d, stats::Tails::one);
  bool w_ok = r.statistic == 15.5 && r.p_value <= 0.05 && 15.5 <= 25;
  return {crit && *crit == 25 && enum_ok && w_ok,
          "critical W " + (crit ? std::to_string(*crit) : std::string("none")) + ", P(T<=25)=" + fmt(at25) +
              ", P(T<=26)=" + fmt(at26) + ", W=15.5 one-sided p=" + fmt(r.p_value)};
}

// 6 -------------------------------------------------------------------------
Outcome null_calibration() {
  const int trials = 1000;
  std::map<std::string, int> rejects;
  Rng rng(777);
  std::normal_distribution<double> z(0.0, 1.0);
  auto normal = [&](std::size_t n, double mu = 5.0, double sd = 2.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = mu + sd * z(rng);
    return v;
  };
  std::binomial_distribution<int> bin(200, 0.4);
  for (int t = 0; t < trials; ++t) {
    rejects["D'Agostino-Pearson"] += stats::dagostino_pearson_k2(normal(100)).p_value < 0.05;
    rejects["Mann-Whitney"] += stats::mann_whitney_u(normal(25), normal(25)).p_value < 0.05;
    rejects["Kruskal-Wallis"] += stats::kruskal_wallis({normal(20), normal(20), normal(20)}).p_value < 0.05;
    rejects["Wilcoxon"] += stats::wilcoxon_signed_rank(normal(20, 0.0, 1.0)).p_value < 0.05;
    rejects["t-test"] += stats::t_test_unpaired(normal(20), normal(20)).p_value < 0.05;
    rejects["ANOVA"] += stats::anova_oneway({normal(15), normal(15), normal(15)}).p_value < 0.05;
    rejects["z-test"] += stats::z_two_proportions(static_cast<std::size_t>(bin(rng)), 200,
                                                  static_cast<std::size_t>(bin(rng)), 200).p_value < 0.05;
  }
  bool ok = true;
  std::string detail;
  for (const auto& [name, c] : rejects) {
    double rate = static_cast<double>(c) / trials;
    ok = ok && rate >= 0.03 && rate <= 0.07;
    detail += (detail.empty() ? "" : ", ") + name + " " + fmt(rate, 3);
  }
  return {ok && rejects.size() == 7, detail};
}

// 7 -------------------------------------------------------------------------
Outcome aggregates() {
  auto s2 = activity_metrics(dataset("dwtf_stages", "stage2").attempts);
  auto s3 = activity_metrics(dataset("dwtf_stages", "stage3").attempts);
  auto total_days = [](const ActivityMetrics& m) {
    std::size_t t = 0;
    for (const auto& [s, d] : m.active_days_by_student) t += d;
    return t;
  };
  auto r1 = [](double v) { return std::round(v * 10.0) / 10.0; };
  bool counts = s2.attempts == 123 && s2.students == 13 && total_days(s2) == 25 && s3.attempts == 102 &&
                s3.students == 19 && total_days(s3) == 46;
  bool rounded = r1(s2.attempts_per_student) == 9.5 && r1(s3.attempts_per_student) == 5.4 &&
                 r1(s2.mean_active_days) == 1.9 && r1(s3.mean_active_days) == 2.4;

  auto ac = dataset("applied_computing_2017", "ac-2017");
  auto exam_end = parse_iso8601("2018-05-22");
  std::size_t last6 = 0;
  for (const auto& a : ac.attempts) last6 += a.started_at >= exam_end - std::chrono::days{6};
  double share = static_cast<double>(last6) / static_cast<double>(ac.attempts.size());

  return {counts && rounded && share > 1.0 / 3.0,
          "attempts/student " + fmt(s2.attempts_per_student) + " -> " + fmt(s3.attempts_per_student) +
              ", active days " + fmt(s2.mean_active_days) + " -> " + fmt(s3.mean_active_days) +
              ", last-6-day share " + fmt(share, 3)};
}

// 8 -------------------------------------------------------------------------
Outcome decision_tree() {
  auto ac = dataset("applied_computing_2017", "ac-2017");
  std::vector<Slice> banded = {{"feb-mar", "", "", {}}, {"apr", "", "", {}}, {"may", "", "", {}}};
  for (const auto& a : ac.attempts) {
    if (!a.finished) continue;
    auto ymd = std::chrono::year_month_day{std::chrono::floor<std::chrono::days>(a.started_at)};
    unsigned m = static_cast<unsigned>(ymd.month());
    banded[m <= 3 ? 0 : m == 4 ? 1 : 2].values.push_back(a.score);
  }
  auto rb3 = compare_cohorts(banded, Metric::score);
  auto rb2 = compare_cohorts({banded[0], banded[2]}, Metric::score);

  Rng rng(8);
  std::normal_distribution<double> z(6.0, 1.5);
  std::vector<Slice> normal;
  for (const char* name : {"a", "b", "c"}) {
    Slice s{name, "", "", {}};
    for (int i = 0; i < 80; ++i) s.values.push_back(z(rng));
    normal.push_back(std::move(s));
  }
  auto rn3 = compare_cohorts(normal, Metric::score);
  auto rn2 = compare_cohorts({normal[0], normal[1]}, Metric::score);
  auto again = compare_cohorts(banded, Metric::score);

  bool ok = rb3.branch == Branch::nonparametric && rb3.omnibus->method == "Kruskal-Wallis H" &&
            rb2.branch == Branch::nonparametric && rb2.omnibus->method == "Mann-Whitney U" &&
            rn3.branch == Branch::parametric && rn3.omnibus->method == "one-way ANOVA" &&
            rn2.branch == Branch::parametric && rn2.omnibus->method == "unpaired t-test" &&
            to_json(again).dump() == to_json(rb3).dump();
  return {ok, "banded -> " + rb3.omnibus->method + " / " + rb2.omnibus->method + ", normal -> " +
                  rn3.omnibus->method + " / " + rn2.omnibus->method};
}

// 9 -------------------------------------------------------------------------
Outcome round_trip() {
  std::size_t files = 0, unfinished = 0;
  bool ok = true;
  for (const auto& entry : fs::directory_iterator(kData / "datasets")) {
    for (const auto& f : fs::directory_iterator(entry.path())) {
      if (f.path().extension() != ".csv") continue;
      auto detail_path = entry.path() / "items" / f.path().filename();
      std::string s0 = read_file(f.path()), d0 = read_file(detail_path);
      std::istringstream si(s0), di(d0);
      auto ds = import_csv(si, &di);
      std::ostringstream s1, d1;
      export_csv(ds.attempts, s1, d1);
      std::istringstream si2(s1.str()), di2(d1.str());
      auto ds2 = import_csv(si2, &di2);
      std::ostringstream s2, d2;
      export_csv(ds2.attempts, s2, d2);
      ok = ok && s1.str() == s0 && d1.str() == d0 && s2.str() == s1.str() && d2.str() == d1.str();
      ++files;

      std::size_t n_unfinished = 0, n_finished = 0;
      for (const auto& a : ds.attempts) {
        if (a.finished) ++n_finished;
        else {
          ++n_unfinished;
          ok = ok && a.score == kUnfinishedScore;
        }
      }
      unfinished += n_unfinished;
      auto act = activity_metrics(ds.attempts);
      auto sc = score_summary(ds.attempts);
      ok = ok && act.attempts == ds.attempts.size() && sc.n == n_finished &&
           finished_scores(ds.attempts).size() == n_finished;
      auto rep = compare_cohorts({make_slice("x", "x", "", ds.attempts, Metric::score),
                                  make_slice("y", "y", "", ds.attempts, Metric::score)},
                                 Metric::score);
      ok = ok && rep.descriptives[0].n == n_finished;
      for (double v : finished_scores(ds.attempts)) ok = ok && v >= 0.0;
    }
  }
  return {ok && files > 0 && unfinished > 0,
          std::to_string(files) + " datasets byte-identical, " + std::to_string(unfinished) + " unfinished attempts excluded from scores"};
}

}  // namespace

int main() {
  std::vector<Check> checks = {
      {1, "lattice equivalence (N_Q=6, N_L=3)", 1, lattice},
      {2, "guessing null under corrected scoring", 10, guessing_null},
      {3, "score-band clustering at 2.5/5/7.5", 30, band_clustering},
      {4, "exact nonparametric p vs enumeration", 60, nonparametric_oracles},
      {5, "Wilcoxon n=14 critical value", 10, wilcoxon_anchor},
      {6, "null calibration of 7 tests", 120, null_calibration},
      {7, "pipeline aggregates on bundled data", 30, aggregates},
      {8, "normality decision tree", 30, decision_tree},
      {9, "store round trip and -1 exclusion", 5, round_trip},
  };
  int failures = 0;
  for (const auto& c : checks) {
    auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool in_time = secs < c.budget_s;
    bool pass = o.pass && in_time;
    failures += !pass;
    std::cout << (pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.name << ": " << o.detail << " ("
              << std::fixed << std::setprecision(2) << secs << " s of " << std::setprecision(0) << c.budget_s
              << " s" << (in_time ? "" : ", over budget") << ")" << std::defaultfloat << "\n";
  }
  return failures;
}
