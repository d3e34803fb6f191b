#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace lingua::util {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Flat `key = value` text with `[section]` headers. Keys are addressed as
// "section.key"; keys before any header live in the empty section. `#` starts
// a comment line.
class ConfigFile {
 public:
  static ConfigFile parse(const std::string& text, const std::string& origin = "<string>");
  static ConfigFile load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::string get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  long get_int(const std::string& key) const;
  long get_int_or(const std::string& key, long fallback) const;
  double get_double(const std::string& key) const;
  double get_double_or(const std::string& key, double fallback) const;
  std::vector<long> get_ints(const std::string& key) const;
  std::vector<std::string> get_words(const std::string& key) const;

  void set(const std::string& key, const std::string& value);
  // Sections in first-appearance order (without the empty section).
  std::vector<std::string> sections() const;

  // Canonical text: sections in first-appearance order, keys in insertion order.
  std::string serialize() const;
  void save(const std::filesystem::path& path) const;

  bool operator==(const ConfigFile& other) const { return serialize() == other.serialize(); }

 private:
  std::string where(const std::string& key) const;

  std::string origin_ = "<string>";
  std::map<std::string, std::string> values_;
  std::vector<std::string> order_;
};

std::string format_double(double v);

}  // namespace lingua::util
