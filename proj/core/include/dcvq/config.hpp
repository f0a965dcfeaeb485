#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dcvq/errors.hpp"

namespace dcvq {

// Flat `key = value` configuration with `#` comments. Later assignments to
// the same key override earlier ones, which is also how CLI flags layer on
// top of file values.
class KeyValueConfig {
 public:
  static KeyValueConfig parse_file(const std::string& path);
  static KeyValueConfig parse_string(const std::string& text, const std::string& origin = "<string>");

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::size_t> get_size_list(const std::string& key,
                                         const std::vector<std::size_t>& fallback) const;

  const std::map<std::string, std::string>& items() const { return values_; }

  // Keys that were never read through a getter; used to reject typos.
  std::vector<std::string> unknown_keys(const std::vector<std::string>& known) const;

  // Serializes as sorted `key=value` lines (the checkpoint config block).
  std::string to_text() const;

 private:
  std::map<std::string, std::string> values_;
  std::string origin_;
};

}  // namespace dcvq
