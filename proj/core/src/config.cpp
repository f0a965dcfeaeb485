#include "dcvq/config.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace dcvq {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_string(buf.str(), path);
}

KeyValueConfig KeyValueConfig::parse_string(const std::string& text, const std::string& origin) {
  KeyValueConfig cfg;
  cfg.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ": expected key=value, got '" + line + "'", line_no);
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(origin + ": empty key", line_no);
    cfg.values_[key] = value;
  }
  return cfg;
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  values_[key] = value;
}

bool KeyValueConfig::has(const std::string& key) const { return values_.count(key) != 0; }

std::string KeyValueConfig::get_string(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError(origin_ + ": missing required key '" + key + "'");
  return it->second;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t pos = 0;
    double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(origin_ + ": key '" + key + "' is not a number: '" + it->second + "'");
  }
}

std::int64_t KeyValueConfig::get_int(const std::string& key, std::int64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t pos = 0;
    long long v = std::stoll(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(origin_ + ": key '" + key + "' is not an integer: '" + it->second + "'");
  }
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t pos = 0;
    unsigned long long v = std::stoull(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(origin_ + ": key '" + key + "' is not an unsigned integer: '" +
                      it->second + "'");
  }
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(origin_ + ": key '" + key + "' is not a boolean: '" + v + "'");
}

std::vector<std::size_t> KeyValueConfig::get_size_list(
    const std::string& key, const std::vector<std::size_t>& fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<std::size_t> out;
  std::istringstream in(it->second);
  std::string part;
  while (std::getline(in, part, ',')) {
    part = trim(part);
    if (part.empty()) continue;
    try {
      std::size_t pos = 0;
      unsigned long long v = std::stoull(part, &pos);
      if (pos != part.size()) throw std::invalid_argument("");
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw ConfigError(origin_ + ": key '" + key + "' has a non-integer element '" + part + "'");
    }
  }
  if (out.empty()) {
    throw ConfigError(origin_ + ": key '" + key + "' is an empty list");
  }
  return out;
}

std::vector<std::string> KeyValueConfig::unknown_keys(
    const std::vector<std::string>& known) const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_) {
    if (std::find(known.begin(), known.end(), k) == known.end()) out.push_back(k);
  }
  return out;
}

std::string KeyValueConfig::to_text() const {
  std::ostringstream os;
  for (const auto& [k, v] : values_) os << k << '=' << v << '\n';
  return os.str();
}

}  // namespace dcvq
