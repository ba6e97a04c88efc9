#include "posafe/config.hpp"

#include <cstdio>
#include <stdexcept>

namespace posafe {

using nlohmann::json;

namespace {

void merge_into(json& dst, const json& src, const std::string& path) {
  if (!src.is_object()) {
    const bool both_numbers = dst.is_number() && src.is_number();
    if (!dst.is_null() && !both_numbers && dst.type() != src.type())
      throw std::invalid_argument("config key '" + path + "' expects " + dst.type_name() + ", got " +
                                  src.type_name());
    dst = src;
    return;
  }
  if (!dst.is_object()) throw std::invalid_argument("config key '" + path + "' is not a section");
  for (const auto& [key, value] : src.items()) {
    const std::string sub = path.empty() ? key : path + "." + key;
    if (!dst.contains(key)) throw std::invalid_argument("unknown config key '" + sub + "'");
    merge_into(dst[key], value, sub);
  }
}

}  // namespace

json merge_config(const json& defaults, const json& overrides) {
  json out = defaults;
  if (overrides.is_null()) return out;
  if (!overrides.is_object()) throw std::invalid_argument("config overrides must be a JSON object");
  merge_into(out, overrides, "");
  return out;
}

json parse_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw std::invalid_argument("expected key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;

  json root = json::object();
  json* cur = &root;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw std::invalid_argument("empty path segment in '" + key + "'");
    if (dot == std::string::npos) {
      (*cur)[part] = value;
      break;
    }
    cur = &(*cur)[part];
    start = dot + 1;
  }
  return root;
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace posafe
