#pragma once

// Session score algebra: per-item scores (binary or guess-corrected), the
// weighted normalized score S, and rescaling to a final grade FG = K * S.

#include <adaptest/common.hpp>

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace adaptest {

enum class ScoringMode { binary, corrected };

inline std::string to_string(ScoringMode m) { return m == ScoringMode::binary ? "binary" : "corrected"; }

inline ScoringMode scoring_mode_from_string(const std::string& s) {
  if (s == "binary") return ScoringMode::binary;
  if (s == "corrected") return ScoringMode::corrected;
  throw ParseError("unknown scoring mode '" + s + "'");
}

inline constexpr double kWeightSumTolerance = 1e-12;

inline double phi_binary(bool correct) noexcept { return correct ? 1.0 : 0.0; }

/// Guess-corrected score: uniform guessing over n_options has expectation 0.
inline double phi_corrected(bool correct, int n_options) {
  if (n_options < 2) throw Error("phi_corrected: n_options must be >= 2");
  return correct ? 1.0 : -1.0 / static_cast<double>(n_options - 1);
}

inline std::vector<double> default_weights(int n_questions) {
  if (n_questions < 1) throw Error("default_weights: n_questions must be >= 1");
  return std::vector<double>(static_cast<std::size_t>(n_questions), 1.0 / n_questions);
}

struct ScoringConfig {
  std::vector<double> weights;
  int n_questions = 1;
  double rescale_factor = 10.0;  // K
  double max_grade = 10.0;       // M
  ScoringMode mode = ScoringMode::binary;

  static ScoringConfig uniform(int n_questions, double k = 10.0, ScoringMode mode = ScoringMode::binary) {
    return ScoringConfig{default_weights(n_questions), n_questions, k, k, mode};
  }

  void validate() const {
    if (n_questions < 1) throw Error("scoring: n_questions must be >= 1");
    if (weights.size() != static_cast<std::size_t>(n_questions))
      throw Error("scoring: expected " + std::to_string(n_questions) + " weights, got " +
                  std::to_string(weights.size()));
    double sum = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0)) throw Error("scoring: weights must be non-negative");
      sum += w;
    }
    if (std::fabs(sum - 1.0) > kWeightSumTolerance) throw Error("scoring: weights must sum to 1");
    if (!(rescale_factor > 0.0)) throw Error("scoring: rescale factor must be > 0");
  }
};

struct ItemOutcome {
  double phi = 0.0;
  bool correct = false;
  std::optional<int> n_options;  // absent for open-answer items

  /// Outcome under `mode`. Open-answer items always score binary.
  static ItemOutcome judge(bool correct, std::optional<int> n_options, ScoringMode mode) {
    double phi = (mode == ScoringMode::corrected && n_options) ? phi_corrected(correct, *n_options)
                                                                : phi_binary(correct);
    return {phi, correct, n_options};
  }
};

/// Weighted sum over answered items; outcome i pairs with weight i.
inline double session_score(std::span<const ItemOutcome> outcomes, const ScoringConfig& config) {
  config.validate();
  if (outcomes.size() > config.weights.size())
    throw Error("session_score: " + std::to_string(outcomes.size()) + " outcomes exceed " +
                std::to_string(config.weights.size()) + " weights");
  double s = 0.0;
  for (std::size_t i = 0; i < outcomes.size(); ++i) s += config.weights[i] * outcomes[i].phi;
  return s;
}

inline double final_grade(double score, const ScoringConfig& config) {
  config.validate();
  return config.rescale_factor * score;
}

}  // namespace adaptest
