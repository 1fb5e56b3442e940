#pragma once

// Typed field access for configuration documents. Every failure names the
// dotted path of the offending field.

#include <adaptest/common.hpp>

#include <nlohmann/json.hpp>

#include <optional>
#include <string>

namespace adaptest {

struct FieldError : ParseError {
  FieldError(std::string field_path, const std::string& why)
      : ParseError("field '" + field_path + "': " + why), field(std::move(field_path)) {}
  std::string field;
};

inline std::string join_path(const std::string& base, const std::string& key) {
  return base.empty() ? key : base + "." + key;
}

template <class T>
T field_as(const nlohmann::json& v, const std::string& path) {
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) throw FieldError(path, "expected a boolean");
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) throw FieldError(path, "expected an integer");
    if constexpr (std::is_unsigned_v<T>)
      if (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)
        throw FieldError(path, "expected a non-negative integer");
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) throw FieldError(path, "expected a number");
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) throw FieldError(path, "expected a string");
  }
  return v.get<T>();
}

template <class T>
std::optional<T> optional_field(const nlohmann::json& obj, const std::string& key, const std::string& base) {
  if (!obj.is_object()) throw FieldError(base.empty() ? "<root>" : base, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  return field_as<T>(*it, join_path(base, key));
}

template <class T>
T required_field(const nlohmann::json& obj, const std::string& key, const std::string& base) {
  auto v = optional_field<T>(obj, key, base);
  if (!v) throw FieldError(join_path(base, key), "missing");
  return *v;
}

template <class T>
T field_or(const nlohmann::json& obj, const std::string& key, const std::string& base, T fallback) {
  return optional_field<T>(obj, key, base).value_or(std::move(fallback));
}

/// Rejects keys outside `allowed`, so typos do not pass silently.
inline void check_keys(const nlohmann::json& obj, std::initializer_list<std::string_view> allowed,
                       const std::string& base) {
  if (!obj.is_object()) throw FieldError(base.empty() ? "<root>" : base, "expected an object");
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || a == key;
    if (!ok) throw FieldError(join_path(base, key), "unknown field");
  }
}

}  // namespace adaptest
