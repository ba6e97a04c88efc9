#pragma once

#include <json.hpp>

#include <cstdint>
#include <string>

namespace posafe {

/// Recursively overlays `overrides` on `defaults`. Every key in `overrides`
/// must already exist in `defaults`; unknown keys throw std::invalid_argument
/// naming the dotted path.
nlohmann::json merge_config(const nlohmann::json& defaults, const nlohmann::json& overrides);

/// Turns "a.b.c=value" into {"a":{"b":{"c":value}}}. The value is parsed as
/// JSON when possible and kept as a string otherwise.
nlohmann::json parse_assignment(const std::string& assignment);

/// FNV-1a 64-bit.
std::uint64_t fnv1a(const std::string& bytes);
std::string hex64(std::uint64_t v);

}  // namespace posafe
