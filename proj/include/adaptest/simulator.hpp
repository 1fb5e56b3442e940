#pragma once

// Synthetic students and attempt logs.
//
// A student is a per-level success probability. Sessions run through the real
// engine; the simulator only decides whether each answer is right and how long
// it took. A schedule decides on which days a student is active and how many
// attempts fall on each day.

#include <adaptest/attempt_store.hpp>
#include <adaptest/engine.hpp>
#include <adaptest/item_bank.hpp>
#include <adaptest/json_fields.hpp>
#include <adaptest/session_json.hpp>
#include <adaptest/timeutil.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace adaptest {

// ---------------------------------------------------------------------------
// Student model

struct AbilityProfile {
  std::vector<double> success;  // index 0 is level 1
  double numeric_noise = 0.5;   // spread of correct numeric answers, as a fraction of the tolerance

  void validate(int n_levels) const {
    if (success.size() != static_cast<std::size_t>(n_levels))
      throw ValidationError("", "ability profile has " + std::to_string(success.size()) + " levels, expected " +
                                    std::to_string(n_levels));
    for (double p : success)
      if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("", "success probabilities must lie in [0, 1]");
    if (!(numeric_noise >= 0.0 && numeric_noise <= 1.0))
      throw ValidationError("", "numeric_noise must lie in [0, 1]");
  }

  double at(int level) const { return success.at(static_cast<std::size_t>(level - 1)); }
};

/// How a population's profiles are drawn: one fixed vector for everybody, or
/// a latent ability theta ~ N(mean, sd) with p_L = logistic(slope * (theta - b_L)).
struct AbilityModel {
  enum class Kind { fixed, logistic };
  Kind kind = Kind::fixed;
  std::vector<double> success;
  double mean = 0.0;
  double sd = 1.0;
  double slope = 1.0;
  std::vector<double> difficulties;
  double numeric_noise = 0.5;

  void validate(int n_levels) const {
    if (kind == Kind::fixed) {
      AbilityProfile{success, numeric_noise}.validate(n_levels);
      return;
    }
    if (difficulties.size() != static_cast<std::size_t>(n_levels))
      throw ValidationError("", "logistic ability needs one difficulty per level");
    if (!(sd >= 0.0)) throw ValidationError("", "ability sd must be >= 0");
    if (!(slope > 0.0)) throw ValidationError("", "ability slope must be > 0");
  }

  AbilityProfile draw(Rng& rng) const {
    if (kind == Kind::fixed) return {success, numeric_noise};
    double theta = std::normal_distribution<double>(mean, sd)(rng);
    AbilityProfile p;
    p.numeric_noise = numeric_noise;
    for (double b : difficulties) p.success.push_back(1.0 / (1.0 + std::exp(-slope * (theta - b))));
    return p;
  }
};

// ---------------------------------------------------------------------------
// Single session

namespace detail {

inline Answer simulated_answer(const Question& q, bool correct, double noise, Rng& rng) {
  if (q.kind == ItemKind::multiple_answer) {
    std::size_t n = q.options.size();
    if (correct) return ChoiceAnswer{*q.correct_index};
    std::size_t pick = uniform_index(rng, n - 1);
    if (pick >= *q.correct_index) ++pick;
    return ChoiceAnswer{pick};
  }
  double e = *q.expected;
  double scale = std::max(1.0, std::fabs(e));
  if (correct) return NumericAnswer{e + (2.0 * uniform01(rng) - 1.0) * noise * q.tolerance * scale};
  double sign = uniform01(rng) < 0.5 ? -1.0 : 1.0;
  return NumericAnswer{e + sign * scale * (2.0 * q.tolerance + 0.1 + uniform01(rng))};
}

}  // namespace detail

/// Runs one session through the engine. Each question at level L is answered
/// correctly with probability p[L]. With `abort_after`, the student walks away
/// after that many answers and the session ends unfinished.
inline SessionResult simulate_session(const AbilityProfile& profile, std::shared_ptr<const ItemBank> bank,
                                      SessionConfig config, std::uint64_t seed, TimePoint start = TimePoint{},
                                      std::optional<int> abort_after = std::nullopt,
                                      const std::string& session_id = "sim") {
  profile.validate(config.n_levels);
  config.rng_seed = mix_seed(seed, 0);
  Rng rng(mix_seed(seed, 1));
  Session s(session_id, std::move(bank), config, start);

  auto per_item_cap = std::max<std::int64_t>(10, static_cast<std::int64_t>(0.8 * config.time_limit.count() /
                                                                            config.n_questions));
  std::uniform_int_distribution<std::int64_t> think(10, per_item_cap);
  TimePoint now = start;
  int answered = 0;
  while (s.status() == SessionStatus::active) {
    if (abort_after && answered >= *abort_after) {
      s.abort(now);
      break;
    }
    const Question& q = s.current_question();
    bool correct = uniform01(rng) < profile.at(q.level);
    Answer a = detail::simulated_answer(q, correct, profile.numeric_noise, rng);
    now += std::chrono::seconds{think(rng)};
    s.submit(a, now);
    ++answered;
  }
  return s.result();
}

// ---------------------------------------------------------------------------
// Schedules

enum class ScheduleShape { cramming, uniform, continuous };

inline std::string to_string(ScheduleShape s) {
  switch (s) {
    case ScheduleShape::cramming: return "cramming";
    case ScheduleShape::uniform: return "uniform";
    case ScheduleShape::continuous: return "continuous";
  }
  return "?";
}

inline ScheduleShape schedule_shape_from_string(const std::string& s) {
  if (s == "cramming") return ScheduleShape::cramming;
  if (s == "uniform") return ScheduleShape::uniform;
  if (s == "continuous") return ScheduleShape::continuous;
  throw ParseError("unknown schedule shape '" + s + "'");
}

/// When a group of students is active.
///
/// Without totals, each student gets 1 + Poisson(mean_active_days - 1) days and
/// 1 + Poisson(mean_attempts_per_day - 1) attempts per day. With
/// total_active_days / total_attempts the group hits those counts exactly.
/// Reward responders are pushed to at least reward_min_days distinct days.
struct ScheduleModel {
  TimePoint start{};
  TimePoint end{};  // exclusive; both on day boundaries
  ScheduleShape shape = ScheduleShape::uniform;
  double cram_fraction = 0.5;  // share of day weight in the end-loaded component
  double cram_tau_days = 3.0;
  double mean_active_days = 1.0;
  double mean_attempts_per_day = 1.0;
  bool reward_response = false;
  double reward_uptake = 1.0;  // share of students who respond to the reward
  int reward_min_days = 3;
  std::optional<int> total_active_days;
  std::optional<int> total_attempts;
  double abort_rate = 0.0;

  int n_days() const {
    return static_cast<int>(std::chrono::floor<std::chrono::days>(end - start).count());
  }

  std::chrono::sys_days day(int i) const { return std::chrono::floor<std::chrono::days>(start) + std::chrono::days{i}; }

  void validate() const {
    auto fail = [](const std::string& why) { throw ValidationError("", "schedule: " + why); };
    if (!(start < end)) fail("window is empty");
    if (std::chrono::floor<std::chrono::days>(start) != start || std::chrono::floor<std::chrono::days>(end) != end)
      fail("window bounds must be whole days");
    if (!(cram_fraction >= 0.0 && cram_fraction <= 1.0)) fail("cram_fraction must lie in [0, 1]");
    if (!(cram_tau_days > 0.0)) fail("cram_tau_days must be > 0");
    if (!(mean_active_days >= 1.0)) fail("mean_active_days must be >= 1");
    if (!(mean_attempts_per_day >= 1.0)) fail("mean_attempts_per_day must be >= 1");
    if (!(reward_uptake >= 0.0 && reward_uptake <= 1.0)) fail("reward_uptake must lie in [0, 1]");
    if (reward_min_days < 1) fail("reward_min_days must be >= 1");
    if (!(abort_rate >= 0.0 && abort_rate <= 1.0)) fail("abort_rate must lie in [0, 1]");
    if (total_attempts && !total_active_days) fail("total_attempts requires total_active_days");
    if (total_active_days && total_attempts && *total_attempts < *total_active_days)
      fail("total_attempts must be >= total_active_days");
  }

  /// Relative intensity of each day in the window.
  std::vector<double> day_weights() const {
    int d = n_days();
    std::vector<double> w(static_cast<std::size_t>(d), 1.0 / d);
    if (shape != ScheduleShape::cramming) return w;
    std::vector<double> tail(static_cast<std::size_t>(d));
    double sum = 0.0;
    for (int i = 0; i < d; ++i) sum += tail[static_cast<std::size_t>(i)] = std::exp(-(d - 1 - i) / cram_tau_days);
    for (int i = 0; i < d; ++i)
      w[static_cast<std::size_t>(i)] = (1.0 - cram_fraction) / d + cram_fraction * tail[static_cast<std::size_t>(i)] / sum;
    return w;
  }
};

struct DayPlan {
  int day = 0;  // index into the window
  int attempts = 0;
};

namespace detail {

inline std::size_t weighted_pick(const std::vector<double>& w, Rng& rng) {
  double total = std::accumulate(w.begin(), w.end(), 0.0);
  double u = uniform01(rng) * total;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (u < w[i]) return i;
    u -= w[i];
  }
  for (std::size_t i = w.size(); i-- > 0;)
    if (w[i] > 0.0) return i;
  throw Error("weighted_pick: all weights are zero");
}

inline int poisson(double mean, Rng& rng) {
  if (mean <= 0.0) return 0;
  return std::poisson_distribution<int>(mean)(rng);
}

/// `m` distinct day indices for one student.
inline std::vector<int> choose_days(const ScheduleModel& s, const std::vector<double>& weights, int m, Rng& rng) {
  int d = s.n_days();
  m = std::min(m, d);
  std::vector<int> days;
  if (s.shape == ScheduleShape::continuous) {
    // one day per stratum so activity is spread across the window
    for (int j = 0; j < m; ++j) {
      int lo = j * d / m, hi = (j + 1) * d / m;
      days.push_back(lo + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(hi - lo))));
    }
    return days;
  }
  std::vector<double> w = weights;
  for (int j = 0; j < m; ++j) {
    auto i = weighted_pick(w, rng);
    days.push_back(static_cast<int>(i));
    w[i] = 0.0;
  }
  std::sort(days.begin(), days.end());
  return days;
}

/// Spreads `attempts` over the chosen days: one each, the rest by day weight.
inline std::vector<DayPlan> spread_attempts(const std::vector<int>& days, int attempts,
                                            const std::vector<double>& weights, Rng& rng) {
  std::vector<DayPlan> plan;
  std::vector<double> w;
  for (int d : days) {
    plan.push_back({d, 1});
    w.push_back(weights[static_cast<std::size_t>(d)]);
  }
  for (int extra = attempts - static_cast<int>(days.size()); extra > 0; --extra) ++plan[weighted_pick(w, rng)].attempts;
  return plan;
}

}  // namespace detail

/// Per-student active days and attempts for a group of `n` students.
inline std::vector<std::vector<DayPlan>> plan_schedule(const ScheduleModel& s, std::size_t n, Rng& rng) {
  s.validate();
  const int d = s.n_days();
  const int reward_days = std::min(s.reward_min_days, d);
  const auto weights = s.day_weights();
  std::vector<int> days(n, 1), attempts(n, 0);
  std::vector<bool> responder(n, false);

  if (s.total_active_days) {
    int budget = *s.total_active_days - static_cast<int>(n);
    if (budget < 0) throw ValidationError("", "schedule: total_active_days is below the number of students");
    if (*s.total_active_days > static_cast<int>(n) * d)
      throw ValidationError("", "schedule: total_active_days exceeds students x window days");
    if (s.reward_response) {
      auto k = static_cast<std::size_t>(std::lround(s.reward_uptake * static_cast<double>(n)));
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t j = 0; j < k; ++j) responder[order[j]] = true;
      for (std::size_t j = 0; j < k && budget > 0; ++j) {
        int add = std::min(budget, reward_days - days[order[j]]);
        days[order[j]] += add;
        budget -= add;
      }
    }
    while (budget > 0) {
      auto i = uniform_index(rng, n);
      if (days[i] >= d) continue;
      ++days[i];
      --budget;
    }
    int total_attempts = s.total_attempts.value_or(*s.total_active_days);
    for (std::size_t i = 0; i < n; ++i) attempts[i] = days[i];
    for (int extra = total_attempts - *s.total_active_days; extra > 0; --extra) ++attempts[uniform_index(rng, n)];
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      days[i] = std::min(d, 1 + detail::poisson(s.mean_active_days - 1.0, rng));
      if (s.reward_response && uniform01(rng) < s.reward_uptake) days[i] = std::max(days[i], reward_days);
      for (int j = 0; j < days[i]; ++j) attempts[i] += 1 + detail::poisson(s.mean_attempts_per_day - 1.0, rng);
    }
  }

  std::vector<std::vector<DayPlan>> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(detail::spread_attempts(detail::choose_days(s, weights, days[i], rng), attempts[i], weights, rng));
  return out;
}

// ---------------------------------------------------------------------------
// Scenarios

struct GroupSpec {
  std::string name;
  std::string cohort_id;
  std::string test_id;
  std::optional<std::size_t> participants;  // staged: drawn from the shared population
  std::optional<std::size_t> size;          // unstaged: students of its own
  std::string id_prefix;
  std::optional<AbilityModel> ability;
  nlohmann::json session_overrides;
  ScheduleModel schedule;
};

struct PopulationSpec {
  std::size_t size = 0;
  std::string id_prefix = "s";
  AbilityModel ability;
};

struct ScenarioConfig {
  std::string name;
  std::uint64_t seed = 0;
  std::shared_ptr<const ItemBank> bank;
  SessionConfig session;
  PopulationSpec population;
  bool staged = false;
  std::vector<GroupSpec> groups;

  SessionConfig session_for(const GroupSpec& g) const {
    return apply_session_overrides(g.session_overrides, session, "groups." + g.name + ".session");
  }

  void validate() const {
    if (!bank) throw ValidationError("", "scenario: no bank");
    if (groups.empty()) throw ValidationError("", "scenario: no groups");
    if (staged) {
      if (population.size < 1) throw ValidationError("", "scenario: population size must be >= 1");
      population.ability.validate(session.n_levels);
    }
    std::set<std::string> names;
    for (const auto& g : groups) {
      if (!names.insert(g.name).second) throw ValidationError("", "scenario: duplicate group '" + g.name + "'");
      g.schedule.validate();
      auto cfg = session_for(g);
      if (staged) {
        if (!g.participants || *g.participants < 1 || *g.participants > population.size)
          throw ValidationError("", "group '" + g.name + "': participants must lie in [1, population size]");
      } else if (!g.size || *g.size < 1) {
        throw ValidationError("", "group '" + g.name + "': size must be >= 1");
      }
      (g.ability ? *g.ability : population.ability).validate(cfg.n_levels);
      auto issues = validate_bank(*bank, cfg.mode == SessionMode::adaptive ? cfg.n_levels : 0);
      if (!issues.empty()) throw ValidationError("", "group '" + g.name + "': " + issues.front().message);
    }
  }
};

namespace detail {

inline std::string numbered(const std::string& prefix, std::size_t i, int width) {
  std::string n = std::to_string(i);
  if (static_cast<int>(n.size()) < width) n.insert(0, static_cast<std::size_t>(width) - n.size(), '0');
  return prefix + n;
}

struct Student {
  std::string id;
  AbilityProfile ability;
};

inline CohortDataset simulate_group(const ScenarioConfig& sc, std::size_t gi, const std::vector<Student>& students) {
  const GroupSpec& g = sc.groups[gi];
  const SessionConfig cfg = sc.session_for(g);
  const std::uint64_t gseed = mix_seed(sc.seed, 0x100 + gi);
  Rng rng(gseed);
  auto plans = plan_schedule(g.schedule, students.size(), rng);

  struct Pending {
    TimePoint start;
    std::size_t student;
    int seq;
  };
  std::vector<Pending> pending;
  for (std::size_t i = 0; i < students.size(); ++i) {
    int seq = 0;
    for (const auto& dp : plans[i])
      for (int a = 0; a < dp.attempts; ++a) {
        auto offset = std::chrono::seconds{8 * 3600 + static_cast<std::int64_t>(uniform_index(rng, 14 * 3600))};
        pending.push_back({TimePoint{g.schedule.day(dp.day)} + offset, i, seq++});
      }
  }
  std::sort(pending.begin(), pending.end(), [&](const Pending& a, const Pending& b) {
    if (a.start != b.start) return a.start < b.start;
    if (students[a.student].id != students[b.student].id) return students[a.student].id < students[b.student].id;
    return a.seq < b.seq;
  });

  CohortDataset ds;
  ds.cohort_id = g.cohort_id;
  ds.periods.push_back({g.name, g.schedule.start, g.schedule.end});
  const int width = std::max<int>(4, static_cast<int>(std::to_string(pending.size()).size()));
  for (std::size_t j = 0; j < pending.size(); ++j) {
    const auto& p = pending[j];
    std::uint64_t aseed = mix_seed(gseed, 1 + j);
    Rng arng(aseed);
    std::optional<int> abort_after;
    if (uniform01(arng) < g.schedule.abort_rate)
      abort_after = static_cast<int>(uniform_index(arng, static_cast<std::size_t>(cfg.n_questions)));
    auto id = numbered(g.name + "-", j + 1, width);
    auto r = simulate_session(students[p.student].ability, sc.bank, cfg, mix_seed(aseed, 7), p.start, abort_after, id);
    auto rec = make_attempt_record(r, id, students[p.student].id, g.cohort_id, g.test_id);
    rec.validate();
    ds.attempts.push_back(std::move(rec));
  }
  return ds;
}

inline std::vector<Student> draw_population(const ScenarioConfig& sc) {
  std::vector<Student> pop;
  const int width = std::max<int>(3, static_cast<int>(std::to_string(sc.population.size).size()));
  for (std::size_t i = 0; i < sc.population.size; ++i) {
    Rng rng(mix_seed(sc.seed, 0x10000 + i));
    pop.push_back({numbered(sc.population.id_prefix, i + 1, width), sc.population.ability.draw(rng)});
  }
  return pop;
}

}  // namespace detail

/// One dataset per group, in group order. Deterministic under the scenario seed.
inline std::vector<CohortDataset> simulate_cohort(const ScenarioConfig& sc) {
  sc.validate();
  std::vector<CohortDataset> out;
  std::vector<detail::Student> population;
  if (sc.staged) population = detail::draw_population(sc);

  for (std::size_t gi = 0; gi < sc.groups.size(); ++gi) {
    const auto& g = sc.groups[gi];
    std::vector<detail::Student> students;
    if (sc.staged) {
      Rng pick(mix_seed(sc.seed, 0x200 + gi));
      std::vector<std::size_t> idx(population.size());
      std::iota(idx.begin(), idx.end(), 0);
      std::shuffle(idx.begin(), idx.end(), pick);
      idx.resize(*g.participants);
      std::sort(idx.begin(), idx.end());
      for (auto i : idx) students.push_back(population[i]);
    } else {
      const AbilityModel& model = g.ability ? *g.ability : sc.population.ability;
      std::string prefix = g.id_prefix.empty() ? g.name + "-s" : g.id_prefix;
      const int width = std::max<int>(3, static_cast<int>(std::to_string(*g.size).size()));
      for (std::size_t i = 0; i < *g.size; ++i) {
        Rng rng(mix_seed(mix_seed(sc.seed, 0x300 + gi), i));
        students.push_back({detail::numbered(prefix, i + 1, width), model.draw(rng)});
      }
    }
    out.push_back(detail::simulate_group(sc, gi, students));
  }
  return out;
}

/// Staged availability: one shared population, consecutive non-overlapping
/// windows. Returns one dataset per stage.
inline std::vector<CohortDataset> simulate_stage_scenario(const ScenarioConfig& sc) {
  if (!sc.staged) throw ValidationError("", "stage scenario: 'staged' must be true");
  for (std::size_t i = 0; i < sc.groups.size(); ++i)
    for (std::size_t j = i + 1; j < sc.groups.size(); ++j) {
      const auto& a = sc.groups[i].schedule;
      const auto& b = sc.groups[j].schedule;
      if (a.start < b.end && b.start < a.end)
        throw ValidationError("", "stage windows '" + sc.groups[i].name + "' and '" + sc.groups[j].name + "' overlap");
    }
  return simulate_cohort(sc);
}

// ---------------------------------------------------------------------------
// Scenario files

namespace detail {

inline AbilityModel parse_ability(const nlohmann::json& j, const std::string& path) {
  check_keys(j, {"model", "success", "mean", "sd", "slope", "difficulties", "numeric_noise"}, path);
  AbilityModel m;
  auto model = required_field<std::string>(j, "model", path);
  auto numbers = [&](const char* key) {
    std::vector<double> v;
    const std::string p = join_path(path, key);
    if (!j.contains(key)) throw FieldError(p, "missing");
    if (!j[key].is_array()) throw FieldError(p, "expected an array of numbers");
    for (std::size_t i = 0; i < j[key].size(); ++i)
      v.push_back(field_as<double>(j[key][i], p + "[" + std::to_string(i) + "]"));
    return v;
  };
  if (model == "fixed") {
    m.kind = AbilityModel::Kind::fixed;
    m.success = numbers("success");
  } else if (model == "logistic") {
    m.kind = AbilityModel::Kind::logistic;
    m.mean = required_field<double>(j, "mean", path);
    m.sd = required_field<double>(j, "sd", path);
    m.slope = field_or<double>(j, "slope", path, 1.0);
    m.difficulties = numbers("difficulties");
  } else {
    throw FieldError(join_path(path, "model"), "expected 'fixed' or 'logistic'");
  }
  m.numeric_noise = field_or<double>(j, "numeric_noise", path, 0.5);
  return m;
}

inline TimePoint parse_date_field(const nlohmann::json& j, const char* key, const std::string& path) {
  auto s = required_field<std::string>(j, key, path);
  try {
    return parse_iso8601(s);
  } catch (const ParseError& e) {
    throw FieldError(join_path(path, key), e.what());
  }
}

inline ScheduleModel parse_schedule(const nlohmann::json& j, const std::string& path) {
  check_keys(j,
             {"start", "end", "shape", "cram_fraction", "cram_tau_days", "mean_active_days", "mean_attempts_per_day",
              "reward_response", "reward_uptake", "reward_min_days", "total_active_days", "total_attempts",
              "abort_rate"},
             path);
  ScheduleModel s;
  s.start = parse_date_field(j, "start", path);
  s.end = parse_date_field(j, "end", path);
  auto shape = field_or<std::string>(j, "shape", path, "uniform");
  try {
    s.shape = schedule_shape_from_string(shape);
  } catch (const ParseError&) {
    throw FieldError(join_path(path, "shape"), "expected 'cramming', 'uniform' or 'continuous'");
  }
  s.cram_fraction = field_or<double>(j, "cram_fraction", path, s.cram_fraction);
  s.cram_tau_days = field_or<double>(j, "cram_tau_days", path, s.cram_tau_days);
  s.mean_active_days = field_or<double>(j, "mean_active_days", path, s.mean_active_days);
  s.mean_attempts_per_day = field_or<double>(j, "mean_attempts_per_day", path, s.mean_attempts_per_day);
  s.reward_response = field_or<bool>(j, "reward_response", path, false);
  s.reward_uptake = field_or<double>(j, "reward_uptake", path, s.reward_uptake);
  s.reward_min_days = field_or<int>(j, "reward_min_days", path, s.reward_min_days);
  s.total_active_days = optional_field<int>(j, "total_active_days", path);
  s.total_attempts = optional_field<int>(j, "total_attempts", path);
  s.abort_rate = field_or<double>(j, "abort_rate", path, 0.0);
  try {
    s.validate();
  } catch (const ValidationError& e) {
    throw FieldError(path, e.what());
  }
  return s;
}

}  // namespace detail

/// Parses a scenario document. `bank_loader` resolves the "bank" reference.
template <class BankLoader>
ScenarioConfig parse_scenario(const nlohmann::json& j, BankLoader&& bank_loader) {
  check_keys(j, {"name", "seed", "bank", "note", "session", "population", "staged", "groups"}, "");
  ScenarioConfig sc;
  sc.name = required_field<std::string>(j, "name", "");
  sc.seed = required_field<std::uint64_t>(j, "seed", "");
  auto bank_ref = required_field<std::string>(j, "bank", "");
  try {
    sc.bank = bank_loader(bank_ref);
  } catch (const FieldError&) {
    throw;
  } catch (const Error& e) {
    throw FieldError("bank", e.what());
  }
  sc.session = SessionConfig::make(6, sc.bank->num_levels);
  if (j.contains("session")) sc.session = apply_session_overrides(j["session"], sc.session, "session");
  sc.staged = field_or<bool>(j, "staged", "", false);

  if (j.contains("population")) {
    const auto& p = j["population"];
    check_keys(p, {"size", "id_prefix", "ability"}, "population");
    sc.population.size = field_or<std::size_t>(p, "size", "population", 0);
    sc.population.id_prefix = field_or<std::string>(p, "id_prefix", "population", "s");
    if (!p.contains("ability")) throw FieldError("population.ability", "missing");
    sc.population.ability = detail::parse_ability(p["ability"], "population.ability");
  } else if (sc.staged) {
    throw FieldError("population", "missing (required when staged)");
  }

  if (!j.contains("groups") || !j["groups"].is_array() || j["groups"].empty())
    throw FieldError("groups", "expected a non-empty array");
  for (std::size_t i = 0; i < j["groups"].size(); ++i) {
    const auto& gj = j["groups"][i];
    const std::string path = "groups[" + std::to_string(i) + "]";
    check_keys(gj, {"name", "cohort_id", "test_id", "participants", "size", "id_prefix", "ability", "session", "schedule"},
               path);
    GroupSpec g;
    g.name = required_field<std::string>(gj, "name", path);
    g.cohort_id = field_or<std::string>(gj, "cohort_id", path, g.name);
    g.test_id = field_or<std::string>(gj, "test_id", path, sc.bank->bank_id);
    g.participants = optional_field<std::size_t>(gj, "participants", path);
    g.size = optional_field<std::size_t>(gj, "size", path);
    g.id_prefix = field_or<std::string>(gj, "id_prefix", path, "");
    if (gj.contains("ability")) g.ability = detail::parse_ability(gj["ability"], join_path(path, "ability"));
    if (gj.contains("session")) {
      g.session_overrides = gj["session"];
      apply_session_overrides(g.session_overrides, sc.session, join_path(path, "session"));
    }
    if (!gj.contains("schedule")) throw FieldError(join_path(path, "schedule"), "missing");
    g.schedule = detail::parse_schedule(gj["schedule"], join_path(path, "schedule"));
    if (sc.staged && !g.participants) throw FieldError(join_path(path, "participants"), "missing (required when staged)");
    if (!sc.staged && !g.size) throw FieldError(join_path(path, "size"), "missing");
    if (!sc.staged && !g.ability && !j.contains("population")) throw FieldError(join_path(path, "ability"), "missing");
    sc.groups.push_back(std::move(g));
  }
  sc.validate();
  return sc;
}

/// Loads a scenario file; a relative bank path is resolved against the
/// scenario's directory.
inline ScenarioConfig load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open scenario '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("scenario '" + path.string() + "': " + e.what());
  }
  auto dir = path.parent_path();
  return parse_scenario(j, [&](const std::string& ref) {
    std::filesystem::path p(ref);
    if (p.is_relative()) p = dir / p;
    std::ifstream bin(p);
    if (!bin) throw Error("cannot open bank '" + p.string() + "'");
    return std::make_shared<const ItemBank>(load_bank(bin));
  });
}

}  // namespace adaptest
