#include "lingua/util/config_file.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace lingua::util {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string section_of(const std::string& key) {
  const auto dot = key.rfind('.');
  return dot == std::string::npos ? std::string{} : key.substr(0, dot);
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

ConfigFile ConfigFile::parse(const std::string& text, const std::string& origin) {
  ConfigFile cfg;
  cfg.origin_ = origin;
  std::istringstream is(text);
  std::string line, section;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3) {
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": malformed section header");
      }
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const auto k = trim(t.substr(0, eq));
    if (k.empty()) throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
    const auto full = section.empty() ? k : section + "." + k;
    if (cfg.has(full)) throw ConfigError(origin + ":" + std::to_string(line_no) + ": duplicate key " + full);
    cfg.set(full, trim(t.substr(eq + 1)));
  }
  return cfg;
}

ConfigFile ConfigFile::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse(ss.str(), path.string());
}

std::string ConfigFile::where(const std::string& key) const { return origin_ + ": key '" + key + "'"; }

std::string ConfigFile::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError(where(key) + " is missing");
  return it->second;
}

std::string ConfigFile::get_or(const std::string& key, const std::string& fallback) const {
  return has(key) ? get(key) : fallback;
}

long ConfigFile::get_int(const std::string& key) const {
  const auto s = get(key);
  long v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) throw ConfigError(where(key) + " is not an integer: " + s);
  return v;
}

long ConfigFile::get_int_or(const std::string& key, long fallback) const {
  return has(key) ? get_int(key) : fallback;
}

double ConfigFile::get_double(const std::string& key) const {
  const auto s = get(key);
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) throw ConfigError(where(key) + " is not a number: " + s);
  return v;
}

double ConfigFile::get_double_or(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

std::vector<std::string> ConfigFile::get_words(const std::string& key) const {
  std::istringstream is(get(key));
  std::vector<std::string> out;
  for (std::string w; is >> w;) out.push_back(w);
  return out;
}

std::vector<long> ConfigFile::get_ints(const std::string& key) const {
  std::vector<long> out;
  for (const auto& w : get_words(key)) {
    long v = 0;
    auto [p, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
    if (ec != std::errc{} || p != w.data() + w.size()) throw ConfigError(where(key) + " has non-integer " + w);
    out.push_back(v);
  }
  return out;
}

void ConfigFile::set(const std::string& key, const std::string& value) {
  if (!has(key)) order_.push_back(key);
  values_[key] = value;
}

std::vector<std::string> ConfigFile::sections() const {
  std::vector<std::string> out;
  for (const auto& k : order_) {
    auto s = section_of(k);
    if (!s.empty() && std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
  }
  return out;
}

std::string ConfigFile::serialize() const {
  std::ostringstream os;
  std::vector<std::string> secs{""};
  for (const auto& s : sections()) secs.push_back(s);
  bool first = true;
  for (const auto& s : secs) {
    bool header_done = s.empty();
    for (const auto& k : order_) {
      if (section_of(k) != s) continue;
      if (!header_done) {
        if (!first) os << '\n';
        os << '[' << s << "]\n";
        header_done = true;
      }
      os << (s.empty() ? k : k.substr(s.size() + 1)) << " = " << values_.at(k) << '\n';
      first = false;
    }
  }
  return os.str();
}

void ConfigFile::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw ConfigError("cannot write " + path.string());
  os << serialize();
}

}  // namespace lingua::util
