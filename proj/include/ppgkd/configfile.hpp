#pragma once

// key=value config files: one pair per line, '#' starts a comment, unknown
// keys are rejected in a single error message naming all of them.

#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>

namespace ppgkd {

class KvConfig {
 public:
  KvConfig() = default;

  static KvConfig parse_string(const std::string& text) {
    KvConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const std::string trimmed = trim(line);
      if (trimmed.empty()) continue;
      const auto eq = trimmed.find('=');
      if (eq == std::string::npos)
        throw std::invalid_argument("config line " + std::to_string(lineno) +
                                    ": expected key=value");
      const std::string key = trim(trimmed.substr(0, eq));
      const std::string value = trim(trimmed.substr(eq + 1));
      if (key.empty())
        throw std::invalid_argument("config line " + std::to_string(lineno) +
                                    ": empty key");
      if (cfg.values_.count(key))
        throw std::invalid_argument("config: duplicate key '" + key + "'");
      cfg.values_[key] = value;
    }
    return cfg;
  }

  static KvConfig parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str());
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& def) {
    consumed_.insert(key);
    auto it = values_.find(key);
    return it == values_.end() ? def : it->second;
  }

  double get_double(const std::string& key, double def) {
    consumed_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    std::size_t pos = 0;
    double v = 0;
    try {
      v = std::stod(it->second, &pos);
    } catch (const std::exception&) {
      throw std::invalid_argument("config: key '" + key + "' is not a number");
    }
    if (pos != it->second.size())
      throw std::invalid_argument("config: key '" + key + "' is not a number");
    return v;
  }

  long get_int(const std::string& key, long def) {
    consumed_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    std::size_t pos = 0;
    long v = 0;
    try {
      v = std::stol(it->second, &pos);
    } catch (const std::exception&) {
      throw std::invalid_argument("config: key '" + key + "' is not an integer");
    }
    if (pos != it->second.size())
      throw std::invalid_argument("config: key '" + key + "' is not an integer");
    return v;
  }

  // Rejects every key that no get_* call claimed, all in one message.
  void reject_unknown() const {
    std::string unknown;
    for (const auto& [key, value] : values_)
      if (!consumed_.count(key)) unknown += (unknown.empty() ? "" : ", ") + key;
    if (!unknown.empty())
      throw std::invalid_argument("config: unknown keys: " + unknown);
  }

 private:
  static std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
  }

  std::map<std::string, std::string> values_;
  std::set<std::string> consumed_;
};

}  // namespace ppgkd
