#include "hetpbo/config.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <sstream>

namespace hetpbo {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double parse_double(const std::string& s, const std::string& what) {
  const std::string t = trim(s);
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(t, &pos);
  } catch (const std::exception&) {
    throw ConfigError(what + ": expected a number, got '" + s + "'");
  }
  if (pos != t.size()) throw ConfigError(what + ": expected a number, got '" + s + "'");
  return v;
}

long long parse_int(const std::string& s, const std::string& what) {
  const std::string t = trim(s);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
    throw ConfigError(what + ": expected an integer, got '" + s + "'");
  }
  return v;
}

std::vector<unsigned long long> parse_seed_list(const std::string& s) {
  std::vector<unsigned long long> out;
  for (const std::string& item : split_list(s)) {
    const auto dash = item.find('-', 1);
    if (dash == std::string::npos) {
      const long long v = parse_int(item, "seeds");
      if (v < 0) throw ConfigError("seeds: negative seed " + item);
      out.push_back(static_cast<unsigned long long>(v));
      continue;
    }
    const long long lo = parse_int(item.substr(0, dash), "seeds");
    const long long hi = parse_int(item.substr(dash + 1), "seeds");
    if (lo < 0 || hi < lo) throw ConfigError("seeds: bad range '" + item + "'");
    for (long long v = lo; v <= hi; ++v) out.push_back(static_cast<unsigned long long>(v));
  }
  return out;
}

Config Config::parse(std::istream& in, const std::string& source) {
  Config cfg;
  std::string line;
  std::string section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(where + ": empty key");
    if (!section.empty()) key = section + "." + key;
    if (cfg.entries_.count(key)) throw ConfigError(where + ": duplicate key '" + key + "'");
    cfg.entries_[key] = trim(line.substr(eq + 1));
  }
  return cfg;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse(in, path.string());
}

bool Config::has(const std::string& key) const { return entries_.count(key) != 0; }

void Config::set(const std::string& key, const std::string& value) { entries_[key] = value; }

std::optional<std::string> Config::raw(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  used_.insert(key);
  return it->second;
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  return raw(key).value_or(fallback);
}

double Config::get_double(const std::string& key, double fallback) const {
  const auto v = raw(key);
  return v ? parse_double(*v, key) : fallback;
}

long long Config::get_int(const std::string& key, long long fallback) const {
  const auto v = raw(key);
  return v ? parse_int(*v, key) : fallback;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const auto v = raw(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
  if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
  throw ConfigError(key + ": expected a boolean, got '" + *v + "'");
}

std::vector<std::string> Config::get_list(const std::string& key, const std::vector<std::string>& fallback) const {
  const auto v = raw(key);
  return v ? split_list(*v) : fallback;
}

std::vector<double> Config::get_doubles(const std::string& key, const std::vector<double>& fallback) const {
  const auto v = raw(key);
  if (!v) return fallback;
  std::vector<double> out;
  for (const std::string& item : split_list(*v)) out.push_back(parse_double(item, key));
  return out;
}

std::vector<std::string> Config::unused_keys() const {
  std::vector<std::string> out;
  for (const auto& [key, value] : entries_) {
    if (!used_.count(key)) out.push_back(key);
  }
  return out;
}

}  // namespace hetpbo
