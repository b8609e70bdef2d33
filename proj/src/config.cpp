#include <charconv>
#include <fstream>
#include <istream>
#include <stdexcept>

#include "mr3/experiment.hpp"

namespace mr3 {

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  double x = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), x);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw std::invalid_argument("config key '" + key + "': '" + v + "' is not a number");
  return x;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::istream& in, const std::string& source) {
  KeyValueConfig cfg;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(source + ":" + std::to_string(n) + ": expected key = value");
    auto key = trim(line.substr(0, eq));
    if (key.empty()) throw std::invalid_argument(source + ":" + std::to_string(n) + ": empty key");
    cfg.values_[key] = trim(line.substr(eq + 1));
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return parse(in, path);
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  used_[key] = true;
  return it->second;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  return has(key) ? to_double(key, get_string(key, "")) : fallback;
}

std::size_t KeyValueConfig::get_size(const std::string& key, std::size_t fallback) const {
  if (!has(key)) return fallback;
  const auto v = get_string(key, "");
  std::size_t x = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), x);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw std::invalid_argument("config key '" + key + "': '" + v + "' is not a count");
  return x;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const auto v = get_string(key, "");
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument("config key '" + key + "': '" + v + "' is not a boolean");
}

std::vector<std::string> KeyValueConfig::get_list(const std::string& key) const {
  std::vector<std::string> out;
  if (!has(key)) return out;
  const auto v = get_string(key, "");
  std::size_t start = 0;
  while (start <= v.size()) {
    auto end = v.find(',', start);
    if (end == std::string::npos) end = v.size();
    if (auto item = trim(v.substr(start, end - start)); !item.empty()) out.push_back(item);
    start = end + 1;
  }
  return out;
}

std::vector<double> KeyValueConfig::get_double_list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : get_list(key)) out.push_back(to_double(key, item));
  return out;
}

std::vector<std::string> KeyValueConfig::unused_keys() const {
  std::vector<std::string> out;
  for (const auto& [key, value] : values_)
    if (!used_.contains(key)) out.push_back(key);
  return out;
}

}  // namespace mr3
