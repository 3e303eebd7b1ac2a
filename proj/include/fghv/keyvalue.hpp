#pragma once

#include <filesystem>
#include <istream>
#include <string>
#include <utility>
#include <vector>

namespace fghv {

/// Ordered key=value entries. Later entries override earlier ones on lookup.
class KeyValues {
 public:
  using Entry = std::pair<std::string, std::string>;

  KeyValues() = default;
  explicit KeyValues(std::vector<Entry> entries) : entries_(std::move(entries)) {}

  /// Parses `key = value` lines. Blank lines and lines starting with '#' are
  /// skipped; surrounding whitespace is trimmed. Throws ParseError with the
  /// line number on a line without '='.
  static KeyValues parse(std::istream& in, const std::string& source = "<input>");
  static KeyValues load(const std::filesystem::path& path);

  void set(std::string key, std::string value);
  const std::string* find(const std::string& key) const;
  bool contains(const std::string& key) const { return find(key) != nullptr; }

  const std::vector<Entry>& entries() const { return entries_; }

  /// Throws ConfigError naming the first key not in `known`.
  void require_known(const std::vector<std::string>& known) const;

  // Typed getters; each throws ConfigError when the value does not parse.
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::string get_string(const std::string& key, std::string fallback) const;

 private:
  std::vector<Entry> entries_;
};

/// Shortest text that parses back to the identical double.
std::string format_double(double v);

}  // namespace fghv
