#pragma once

#include <adaptest/common.hpp>
#include <adaptest/expression.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <istream>
#include <iterator>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

namespace adaptest {

inline constexpr double kDefaultAnswerTolerance = 1e-3;

enum class ItemKind { multiple_answer, open_answer };

inline std::string to_string(ItemKind k) {
  return k == ItemKind::multiple_answer ? "multiple-answer" : "open-answer";
}

struct ChoiceSpec {
  std::vector<std::string> options;
  std::size_t correct_index = 0;

  std::size_t n_options() const noexcept { return options.size(); }
  bool operator==(const ChoiceSpec&) const = default;
};

struct ParameterSpec {
  std::string name;
  double min = 0.0;
  double max = 0.0;
  std::optional<double> granularity;

  bool operator==(const ParameterSpec&) const = default;
};

struct SolutionProgram {
  std::string expression;
  double tolerance = kDefaultAnswerTolerance;  // relative

  bool operator==(const SolutionProgram&) const = default;
};

struct NumericSpec {
  std::vector<ParameterSpec> parameters;
  SolutionProgram solution;

  bool operator==(const NumericSpec&) const = default;
};

struct Item {
  std::string item_id;
  int level = 1;
  std::string statement;
  std::optional<std::string> attachment_ref;
  std::variant<ChoiceSpec, NumericSpec> body;

  ItemKind kind() const noexcept {
    return std::holds_alternative<ChoiceSpec>(body) ? ItemKind::multiple_answer : ItemKind::open_answer;
  }
  const ChoiceSpec& choice() const { return std::get<ChoiceSpec>(body); }
  const NumericSpec& numeric() const { return std::get<NumericSpec>(body); }

  bool operator==(const Item&) const = default;
};

struct ItemBank {
  std::string bank_id;
  int num_levels = 1;
  std::vector<Item> items;
  std::string title;
  std::string version;

  /// Items at `level`, in bank order.
  std::vector<const Item*> items_at(int level) const {
    std::vector<const Item*> out;
    for (const auto& it : items)
      if (it.level == level) out.push_back(&it);
    return out;
  }

  const Item* find(std::string_view id) const {
    auto it = std::find_if(items.begin(), items.end(), [&](const Item& x) { return x.item_id == id; });
    return it == items.end() ? nullptr : &*it;
  }

  bool operator==(const ItemBank&) const = default;
};

// ---------------------------------------------------------------------------
// Validation

struct BankIssue {
  enum class Code {
    empty_level,
    duplicate_id,
    level_out_of_range,
    invalid_choice,
    invalid_parameter,
    unparseable_solution,
    undeclared_variable,
    invalid_tolerance,
  };
  Code code;
  std::string item_id;  // empty for bank-level issues
  int level = 0;
  std::string message;
};

namespace detail {

inline void check_item(const Item& item, int num_levels, std::vector<BankIssue>& out) {
  using C = BankIssue::Code;
  auto issue = [&](C code, std::string msg) { out.push_back({code, item.item_id, item.level, std::move(msg)}); };

  if (item.level < 1 || item.level > num_levels)
    issue(C::level_out_of_range,
          "level " + std::to_string(item.level) + " outside [1, " + std::to_string(num_levels) + "]");

  if (const auto* c = std::get_if<ChoiceSpec>(&item.body)) {
    if (c->n_options() < 2) issue(C::invalid_choice, "multiple-answer item needs at least 2 options");
    else if (c->correct_index >= c->n_options())
      issue(C::invalid_choice, "correct_index " + std::to_string(c->correct_index) + " out of range");
    return;
  }

  const auto& n = std::get<NumericSpec>(item.body);
  if (n.parameters.empty()) issue(C::invalid_parameter, "open-answer item needs at least 1 parameter");
  std::set<std::string> declared;
  for (const auto& p : n.parameters) {
    if (!declared.insert(p.name).second) issue(C::invalid_parameter, "parameter '" + p.name + "' declared twice");
    if (!(p.min <= p.max)) issue(C::invalid_parameter, "parameter '" + p.name + "' has min > max");
    if (p.granularity && !(*p.granularity > 0.0))
      issue(C::invalid_parameter, "parameter '" + p.name + "' granularity must be > 0");
  }
  if (!(n.solution.tolerance > 0.0)) issue(C::invalid_tolerance, "tolerance must be > 0");
  try {
    auto expr = Expression::parse(n.solution.expression);
    for (const auto& v : expr.free_variables())
      if (!declared.count(v)) issue(C::undeclared_variable, "solution references undeclared variable '" + v + "'");
  } catch (const ParseError& e) {
    issue(C::unparseable_solution, e.what());
  }
}

}  // namespace detail

/// Lists every reason the bank cannot back sessions with `required_levels` levels.
/// An empty result means the bank is usable.
inline std::vector<BankIssue> validate_bank(const ItemBank& bank, int required_levels) {
  std::vector<BankIssue> out;
  std::set<std::string> seen;
  for (const auto& item : bank.items) {
    if (!seen.insert(item.item_id).second)
      out.push_back({BankIssue::Code::duplicate_id, item.item_id, item.level, "duplicate item_id"});
    detail::check_item(item, bank.num_levels, out);
  }
  std::vector<int> per_level(static_cast<std::size_t>(std::max(required_levels, 0)) + 1, 0);
  for (const auto& item : bank.items)
    if (item.level >= 1 && item.level <= required_levels) ++per_level[static_cast<std::size_t>(item.level)];
  for (int l = 1; l <= required_levels; ++l)
    if (per_level[static_cast<std::size_t>(l)] == 0)
      out.push_back({BankIssue::Code::empty_level, "", l, "level " + std::to_string(l) + " has no items"});
  return out;
}

// ---------------------------------------------------------------------------
// Document format

namespace detail {

template <class T>
T require(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw ParseError(where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ParseError(where + ": field '" + std::string(key) + "' has the wrong type");
  }
}

inline Item item_from_json(const nlohmann::json& j, std::size_t index) {
  std::string where = "items[" + std::to_string(index) + "]";
  Item item;
  item.item_id = require<std::string>(j, "item_id", where);
  where += " ('" + item.item_id + "')";
  item.level = require<int>(j, "level", where);
  item.statement = require<std::string>(j, "statement", where);
  if (j.contains("attachment_ref") && !j["attachment_ref"].is_null())
    item.attachment_ref = require<std::string>(j, "attachment_ref", where);

  auto kind = require<std::string>(j, "kind", where);
  if (kind == "multiple-answer") {
    auto c = require<nlohmann::json>(j, "choice", where);
    ChoiceSpec spec;
    spec.options = require<std::vector<std::string>>(c, "options", where + ".choice");
    spec.correct_index = require<std::size_t>(c, "correct_index", where + ".choice");
    item.body = std::move(spec);
  } else if (kind == "open-answer") {
    NumericSpec spec;
    auto params = require<nlohmann::json>(j, "parameters", where);
    if (!params.is_array()) throw ParseError(where + ": 'parameters' must be an array");
    for (const auto& p : params) {
      ParameterSpec ps;
      ps.name = require<std::string>(p, "name", where + ".parameters");
      ps.min = require<double>(p, "min", where + ".parameters");
      ps.max = require<double>(p, "max", where + ".parameters");
      if (p.contains("granularity") && !p["granularity"].is_null())
        ps.granularity = require<double>(p, "granularity", where + ".parameters");
      spec.parameters.push_back(std::move(ps));
    }
    auto sol = require<nlohmann::json>(j, "solution", where);
    spec.solution.expression = require<std::string>(sol, "expression", where + ".solution");
    if (sol.contains("tolerance")) spec.solution.tolerance = require<double>(sol, "tolerance", where + ".solution");
    item.body = std::move(spec);
  } else {
    throw ParseError(where + ": unknown kind '" + kind + "'");
  }
  return item;
}

}  // namespace detail

/// Structural parse only; invariants are left to validate_bank / load_bank.
inline ItemBank parse_bank(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ParseError("bank document must be a JSON object");
  ItemBank bank;
  bank.bank_id = detail::require<std::string>(doc, "bank_id", "bank");
  bank.num_levels = detail::require<int>(doc, "num_levels", "bank");
  bank.title = doc.value("title", "");
  bank.version = doc.value("version", "");
  auto items = detail::require<nlohmann::json>(doc, "items", "bank");
  if (!items.is_array()) throw ParseError("bank: 'items' must be an array");
  for (std::size_t i = 0; i < items.size(); ++i) bank.items.push_back(detail::item_from_json(items[i], i));
  return bank;
}

inline ItemBank parse_bank(std::istream& source) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(source);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed bank document: ") + e.what());
  }
  return parse_bank(doc);
}

/// Parses and enforces every per-item invariant plus id uniqueness. Empty
/// levels are allowed here; sessions check level coverage at start.
inline ItemBank load_bank(std::istream& source) {
  ItemBank bank = parse_bank(source);
  if (bank.num_levels < 1) throw ValidationError("", "num_levels must be >= 1");
  for (const auto& issue : validate_bank(bank, bank.num_levels))
    if (issue.code != BankIssue::Code::empty_level) throw ValidationError(issue.item_id, issue.message);
  return bank;
}

inline nlohmann::json to_json(const ItemBank& bank) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& it : bank.items) {
    nlohmann::json j = {{"item_id", it.item_id},
                        {"level", it.level},
                        {"kind", to_string(it.kind())},
                        {"statement", it.statement}};
    if (it.attachment_ref) j["attachment_ref"] = *it.attachment_ref;
    if (const auto* c = std::get_if<ChoiceSpec>(&it.body)) {
      j["choice"] = {{"options", c->options}, {"correct_index", c->correct_index}};
    } else {
      const auto& n = it.numeric();
      nlohmann::json params = nlohmann::json::array();
      for (const auto& p : n.parameters) {
        nlohmann::json pj = {{"name", p.name}, {"min", p.min}, {"max", p.max}};
        if (p.granularity) pj["granularity"] = *p.granularity;
        params.push_back(std::move(pj));
      }
      j["parameters"] = std::move(params);
      j["solution"] = {{"expression", n.solution.expression}, {"tolerance", n.solution.tolerance}};
    }
    items.push_back(std::move(j));
  }
  nlohmann::json doc = {{"bank_id", bank.bank_id}, {"num_levels", bank.num_levels}};
  if (!bank.title.empty()) doc["title"] = bank.title;
  if (!bank.version.empty()) doc["version"] = bank.version;
  doc["items"] = std::move(items);
  return doc;
}

// ---------------------------------------------------------------------------
// Open-answer instantiation

inline double eval_solution(const SolutionProgram& program, const Bindings& bindings) {
  return Expression::parse(program.expression).evaluate(bindings);
}

struct InstantiatedItem {
  std::string item_id;
  Bindings values;
  double expected = 0.0;
  std::string statement;  // placeholders {name} replaced by the drawn values
};

/// Replaces each `{name}` with the bound value; unknown placeholders are left alone.
inline std::string render_statement(const std::string& statement, const Bindings& values) {
  std::string out;
  out.reserve(statement.size());
  for (std::size_t i = 0; i < statement.size();) {
    if (statement[i] == '{') {
      auto close = statement.find('}', i + 1);
      if (close != std::string::npos) {
        auto it = values.find(std::string_view(statement).substr(i + 1, close - i - 1));
        if (it != values.end()) {
          out += format_double(it->second);
          i = close + 1;
          continue;
        }
      }
    }
    out += statement[i++];
  }
  return out;
}

inline double draw_parameter(const ParameterSpec& p, Rng& rng) {
  double v = p.min + (p.max - p.min) * uniform01(rng);
  if (p.granularity && p.max > p.min) {
    double g = *p.granularity;
    double steps = std::floor((p.max - p.min) / g + 1e-9);
    double k = std::min(std::round((v - p.min) / g), steps);
    v = p.min + k * g;
  }
  return v;
}

inline InstantiatedItem instantiate_numeric_item(const Item& item, std::uint64_t seed) {
  if (item.kind() != ItemKind::open_answer)
    throw Error("item '" + item.item_id + "' is not an open-answer item");
  const auto& spec = item.numeric();
  Rng rng(seed);
  InstantiatedItem out;
  out.item_id = item.item_id;
  for (const auto& p : spec.parameters) out.values[p.name] = draw_parameter(p, rng);
  try {
    out.expected = eval_solution(spec.solution, out.values);
  } catch (const EvaluationError& e) {
    std::string vals;
    for (const auto& [k, v] : out.values) vals += (vals.empty() ? "" : ", ") + k + "=" + format_double(v);
    throw EvaluationError("item '" + item.item_id + "' with {" + vals + "}: " + e.what());
  }
  out.statement = render_statement(item.statement, out.values);
  return out;
}

}  // namespace adaptest
