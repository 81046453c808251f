#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "madgan/errors.hpp"

namespace madgan {

// Declarative `key = value` config files. Keys are dotted (train.lr); '#'
// starts a comment. Values keep their raw text; typed access parses on demand.
// Insertion order is preserved on save so written configs diff cleanly.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);
    KeyValueConfig cfg;
    cfg.parse(in, path);
    return cfg;
  }

  static KeyValueConfig from_string(const std::string& text) {
    std::istringstream in(text);
    KeyValueConfig cfg;
    cfg.parse(in, "<string>");
    return cfg;
  }

  bool has(const std::string& key) const { return index_.count(key) > 0; }

  void set(const std::string& key, const std::string& value) {
    auto it = index_.find(key);
    if (it == index_.end()) {
      index_[key] = entries_.size();
      entries_.push_back({key, value});
    } else {
      entries_[it->second].second = value;
    }
  }

  void set_int(const std::string& key, int64_t v) { set(key, std::to_string(v)); }
  void set_double(const std::string& key, double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    set(key, os.str());
  }
  void set_bool(const std::string& key, bool v) { set(key, v ? "true" : "false"); }

  std::string get_str(const std::string& key) const {
    auto it = index_.find(key);
    if (it == index_.end()) throw ConfigError("missing key '" + key + "'");
    return entries_[it->second].second;
  }

  std::string get_str(const std::string& key, const std::string& fallback) const {
    return has(key) ? get_str(key) : fallback;
  }

  int64_t get_int(const std::string& key) const { return parse_int(key, get_str(key)); }
  int64_t get_int(const std::string& key, int64_t fallback) const {
    return has(key) ? get_int(key) : fallback;
  }

  double get_double(const std::string& key) const {
    try {
      size_t pos = 0;
      double v = std::stod(get_str(key), &pos);
      if (pos != get_str(key).size()) throw std::invalid_argument("");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "' is not a number: '" + get_str(key) + "'");
    }
  }
  double get_double(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
  }

  bool get_bool(const std::string& key) const {
    std::string v = get_str(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("key '" + key + "' is not a bool: '" + v + "'");
  }
  bool get_bool(const std::string& key, bool fallback) const {
    return has(key) ? get_bool(key) : fallback;
  }

  // Comma-separated integer list, e.g. "150000,300000,600000".
  std::vector<int64_t> get_int_list(const std::string& key) const {
    std::vector<int64_t> out;
    std::string v = get_str(key);
    std::istringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item.empty()) continue;
      out.push_back(parse_int(key, trim(item)));
    }
    return out;
  }

  // Merge other's entries over this one's.
  void overlay(const KeyValueConfig& other) {
    for (const auto& [k, v] : other.entries_) set(k, v);
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write config " + path);
    for (const auto& [k, v] : entries_) out << k << " = " << v << "\n";
    if (!out) throw IoError("short write on config " + path);
  }

  std::string to_string() const {
    std::ostringstream os;
    for (const auto& [k, v] : entries_) os << k << " = " << v << "\n";
    return os.str();
  }

  const std::vector<std::pair<std::string, std::string>>& entries() const {
    return entries_;
  }

 private:
  void parse(std::istream& in, const std::string& origin) {
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      std::string t = trim(line);
      if (t.empty()) continue;
      auto eq = t.find('=');
      if (eq == std::string::npos)
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
      std::string key = trim(t.substr(0, eq));
      std::string value = trim(t.substr(eq + 1));
      if (key.empty())
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
      set(key, value);
    }
  }

  static int64_t parse_int(const std::string& key, const std::string& v) {
    try {
      size_t pos = 0;
      int64_t r = std::stoll(v, &pos);
      if (pos != v.size()) throw std::invalid_argument("");
      return r;
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "' is not an integer: '" + v + "'");
    }
  }

  static std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  std::vector<std::pair<std::string, std::string>> entries_;
  std::map<std::string, size_t> index_;
};

}  // namespace madgan
