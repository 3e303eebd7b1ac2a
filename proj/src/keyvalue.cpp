#include "fghv/keyvalue.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>

#include "fghv/errors.hpp"

namespace fghv {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

KeyValues KeyValues::parse(std::istream& in, const std::string& source) {
  KeyValues kv;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ParseError(source + ":" + std::to_string(lineno) + ": expected key=value");
    }
    std::string key = trim(t.substr(0, eq));
    if (key.empty()) {
      throw ParseError(source + ":" + std::to_string(lineno) + ": empty key");
    }
    kv.entries_.emplace_back(std::move(key), trim(t.substr(eq + 1)));
  }
  return kv;
}

KeyValues KeyValues::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse(in, path.string());
}

void KeyValues::set(std::string key, std::string value) {
  entries_.emplace_back(std::move(key), std::move(value));
}

const std::string* KeyValues::find(const std::string& key) const {
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->first == key) return &it->second;
  }
  return nullptr;
}

void KeyValues::require_known(const std::vector<std::string>& known) const {
  for (const auto& [k, v] : entries_) {
    if (std::find(known.begin(), known.end(), k) == known.end()) {
      throw ConfigError("unknown config key '" + k + "'");
    }
  }
}

double KeyValues::get_double(const std::string& key, double fallback) const {
  const std::string* v = find(key);
  if (!v) return fallback;
  double out = 0;
  const auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || p != v->data() + v->size()) {
    throw ConfigError("config key '" + key + "': '" + *v + "' is not a number");
  }
  return out;
}

long long KeyValues::get_int(const std::string& key, long long fallback) const {
  const std::string* v = find(key);
  if (!v) return fallback;
  long long out = 0;
  const auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || p != v->data() + v->size()) {
    throw ConfigError("config key '" + key + "': '" + *v + "' is not an integer");
  }
  return out;
}

bool KeyValues::get_bool(const std::string& key, bool fallback) const {
  const std::string* v = find(key);
  if (!v) return fallback;
  if (*v == "1" || *v == "true" || *v == "yes" || *v == "on") return true;
  if (*v == "0" || *v == "false" || *v == "no" || *v == "off") return false;
  throw ConfigError("config key '" + key + "': '" + *v + "' is not a boolean");
}

std::string KeyValues::get_string(const std::string& key, std::string fallback) const {
  const std::string* v = find(key);
  return v ? *v : std::move(fallback);
}

std::string format_double(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

}  // namespace fghv
