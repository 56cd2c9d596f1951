#pragma once

#include <algorithm>
#include <initializer_list>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "emoser/error.hpp"

namespace emoser::detail {

/// Strict object check used by every config reader: unknown keys are errors.
inline void require_known_keys(const nlohmann::json& j, std::initializer_list<std::string_view> known,
                               std::string_view context) {
  if (!j.is_object()) fail(Errc::ConfigParseError, std::string(context) + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      fail(Errc::ConfigParseError, "unknown key \"" + key + "\" in " + std::string(context));
    }
  }
}

template <typename T>
void read_optional(const nlohmann::json& j, const char* key, T& out, std::string_view context) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::ConfigParseError, std::string(context) + "." + key + ": " + e.what());
  }
}

}  // namespace emoser::detail
