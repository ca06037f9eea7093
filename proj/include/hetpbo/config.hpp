#pragma once

// Flat key/value configuration files.
//
//   # comment
//   [benchmark]          keys below are prefixed with "benchmark."
//   name = sine1d
//   acquisition.kinds = ei, anpei    dotted keys work anywhere
//
// Lists are comma separated. Every key must be consumed by the reader;
// `unused_keys()` reports the rest so typos fail loudly.

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace hetpbo {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Config {
 public:
  static Config parse(std::istream& in, const std::string& source = "<config>");
  static Config load(const std::filesystem::path& path);

  bool has(const std::string& key) const;
  void set(const std::string& key, const std::string& value);

  std::optional<std::string> raw(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::string> get_list(const std::string& key, const std::vector<std::string>& fallback) const;
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;

  std::vector<std::string> unused_keys() const;
  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
  mutable std::set<std::string> used_;
};

std::string trim(const std::string& s);
std::vector<std::string> split_list(const std::string& s);
double parse_double(const std::string& s, const std::string& what);
long long parse_int(const std::string& s, const std::string& what);

/// "1,2,5" or "1-30" or a mix such as "1-3,7".
std::vector<unsigned long long> parse_seed_list(const std::string& s);

}  // namespace hetpbo
