#pragma once

#include <istream>
#include <map>
#include <string>
#include <vector>

namespace propguard::harness {

// Flat `key = value` text config with `#` comments.
class Config {
 public:
  static Config parse(std::istream& in);
  static Config parse_file(const std::string& path);

  bool has(const std::string& key) const { return kv_.count(key) != 0; }
  std::string get_string(const std::string& key, const std::string& fallback = "") const;
  int get_int(const std::string& key, int fallback) const;
  double get_double(const std::string& key, double fallback) const;
  uint64_t get_u64(const std::string& key, uint64_t fallback) const;
  std::vector<std::string> get_list(const std::string& key) const;  // comma-separated

  void set(const std::string& key, const std::string& value) { kv_[key] = value; }

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace propguard::harness
