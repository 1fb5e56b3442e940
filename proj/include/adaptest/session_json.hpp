#pragma once

// Session configuration as a JSON object, shared by scenario files and the
// HTTP start-session request.
//
//   n_questions, n_levels, time_limit_s, scoring ("binary" | "corrected"),
//   rescale_factor, weights[], seed, mode ("adaptive" | "linear"),
//   fixed_order[], feedback, pool_policy ("strict" | "permissive")

#include <adaptest/engine.hpp>
#include <adaptest/json_fields.hpp>

namespace adaptest {

inline const std::initializer_list<std::string_view> kSessionConfigKeys = {
    "n_questions", "n_levels", "time_limit_s", "scoring",     "rescale_factor", "weights",
    "seed",        "mode",     "fixed_order",  "feedback",    "pool_policy"};

/// Applies the fields present in `j` on top of `base`. The scoring config is
/// rebuilt whenever N_Q, mode, K or weights change. Throws FieldError.
inline SessionConfig apply_session_overrides(const nlohmann::json& j, SessionConfig base, const std::string& path) {
  if (j.is_null()) return base;
  check_keys(j, kSessionConfigKeys, path);
  SessionConfig c = std::move(base);

  c.n_questions = field_or<int>(j, "n_questions", path, c.n_questions);
  c.n_levels = field_or<int>(j, "n_levels", path, c.n_levels);
  if (auto t = optional_field<std::int64_t>(j, "time_limit_s", path)) c.time_limit = std::chrono::seconds{*t};
  if (auto s = optional_field<std::uint64_t>(j, "seed", path)) c.rng_seed = *s;
  c.feedback_enabled = field_or<bool>(j, "feedback", path, c.feedback_enabled);

  if (auto m = optional_field<std::string>(j, "mode", path)) {
    if (*m == "adaptive") c.mode = SessionMode::adaptive;
    else if (*m == "linear") c.mode = SessionMode::linear;
    else throw FieldError(join_path(path, "mode"), "expected 'adaptive' or 'linear'");
  }
  if (auto p = optional_field<std::string>(j, "pool_policy", path)) {
    if (*p == "strict") c.pool_policy = PoolPolicy::strict;
    else if (*p == "permissive") c.pool_policy = PoolPolicy::permissive;
    else throw FieldError(join_path(path, "pool_policy"), "expected 'strict' or 'permissive'");
  }
  if (j.contains("fixed_order")) {
    c.fixed_order.clear();
    const auto& arr = j["fixed_order"];
    if (!arr.is_array()) throw FieldError(join_path(path, "fixed_order"), "expected an array of item ids");
    for (std::size_t i = 0; i < arr.size(); ++i)
      c.fixed_order.push_back(field_as<std::string>(arr[i], join_path(path, "fixed_order[" + std::to_string(i) + "]")));
  }

  ScoringMode mode = c.scoring.mode;
  if (auto s = optional_field<std::string>(j, "scoring", path)) {
    try {
      mode = scoring_mode_from_string(*s);
    } catch (const Error&) {
      throw FieldError(join_path(path, "scoring"), "expected 'binary' or 'corrected'");
    }
  }
  double k = field_or<double>(j, "rescale_factor", path, c.scoring.rescale_factor);
  std::vector<double> weights;
  if (j.contains("weights")) {
    const auto& arr = j["weights"];
    if (!arr.is_array()) throw FieldError(join_path(path, "weights"), "expected an array of numbers");
    for (std::size_t i = 0; i < arr.size(); ++i)
      weights.push_back(field_as<double>(arr[i], join_path(path, "weights[" + std::to_string(i) + "]")));
  } else if (c.scoring.weights.size() == static_cast<std::size_t>(c.n_questions)) {
    weights = c.scoring.weights;
  } else {
    if (c.n_questions < 1) throw FieldError(join_path(path, "n_questions"), "must be >= 1");
    weights = default_weights(c.n_questions);
  }
  c.scoring = ScoringConfig{std::move(weights), c.n_questions, k, k, mode};

  try {
    c.validate();
  } catch (const FieldError&) {
    throw;
  } catch (const Error& e) {
    throw FieldError(path.empty() ? "<session>" : path, e.what());
  }
  return c;
}

inline nlohmann::json to_json(const SessionConfig& c) {
  nlohmann::json j = {{"n_questions", c.n_questions},
                      {"n_levels", c.n_levels},
                      {"time_limit_s", c.time_limit.count()},
                      {"scoring", to_string(c.scoring.mode)},
                      {"rescale_factor", c.scoring.rescale_factor},
                      {"weights", c.scoring.weights},
                      {"seed", c.rng_seed},
                      {"mode", c.mode == SessionMode::adaptive ? "adaptive" : "linear"},
                      {"feedback", c.feedback_enabled},
                      {"pool_policy", c.pool_policy == PoolPolicy::strict ? "strict" : "permissive"}};
  if (c.mode == SessionMode::linear) j["fixed_order"] = c.fixed_order;
  return j;
}

}  // namespace adaptest
