#include "mtpp/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mtpp/errors.hpp"

namespace mtpp {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string qualify(const std::string& section, const std::string& key) {
  return section + "." + key;
}

}  // namespace

std::string format_real(double v) {
  // round-trip exact: try increasing precision until parsing returns v
  for (int prec = 15; prec <= 17; ++prec) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    double back = 0.0;
    std::sscanf(buf, "%lf", &back);
    if (back == v) return buf;
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

ConfigMap ConfigMap::parse_ini(const std::string& text, const std::string& origin) {
  ConfigMap cfg;
  std::istringstream is(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw config_error(origin + ":" + std::to_string(lineno) + ": unterminated section");
      section = trim(t.substr(1, t.size() - 2));
      if (section.empty())
        throw config_error(origin + ":" + std::to_string(lineno) + ": empty section name");
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw config_error(origin + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty())
      throw config_error(origin + ":" + std::to_string(lineno) + ": empty key");
    if (section.empty())
      throw config_error(origin + ":" + std::to_string(lineno) + ": key outside a section");
    if (cfg.values_[section].count(key) != 0)
      throw config_error(origin + ":" + std::to_string(lineno) + ": duplicate key " +
                         qualify(section, key));
    cfg.values_[section][key] = value;
  }
  return cfg;
}

ConfigMap ConfigMap::parse_ini_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw config_error("config: cannot open: " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_ini(buf.str(), path);
}

ConfigMap ConfigMap::from_manifest_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw config_error("manifest: cannot open: " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("manifest: ") + e.what());
  }
  if (!j.is_object() || !j.contains("config") || !j["config"].is_object())
    throw config_error("manifest: missing config object: " + path);
  ConfigMap cfg;
  for (const auto& [section, keys] : j["config"].items()) {
    if (!keys.is_object()) throw config_error("manifest: bad section " + section);
    for (const auto& [key, value] : keys.items()) {
      if (!value.is_string()) throw config_error("manifest: non-string value at " + key);
      cfg.values_[section][key] = value.get<std::string>();
    }
  }
  return cfg;
}

bool ConfigMap::has(const std::string& section, const std::string& key) const {
  auto s = values_.find(section);
  return s != values_.end() && s->second.count(key) != 0;
}

void ConfigMap::set(const std::string& section, const std::string& key,
                    const std::string& value) {
  values_[section][key] = value;
}

void ConfigMap::apply_override(const std::string& spec) {
  const auto eq = spec.find('=');
  const auto dot = spec.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq)
    throw config_error("override must look like section.key=value: " + spec);
  const std::string section = trim(spec.substr(0, dot));
  const std::string key = trim(spec.substr(dot + 1, eq - dot - 1));
  const std::string value = trim(spec.substr(eq + 1));
  if (section.empty() || key.empty())
    throw config_error("override must look like section.key=value: " + spec);
  values_[section][key] = value;
}

std::string ConfigMap::require(const std::string& section, const std::string& key) {
  if (!has(section, key))
    throw config_error("config: missing required key " + qualify(section, key));
  consumed_.insert(qualify(section, key));
  return values_[section][key];
}

std::string ConfigMap::get_string(const std::string& section, const std::string& key) {
  return require(section, key);
}

std::string ConfigMap::get_string(const std::string& section, const std::string& key,
                                  const std::string& fallback) {
  if (!has(section, key)) set(section, key, fallback);
  return require(section, key);
}

double ConfigMap::get_real(const std::string& section, const std::string& key) {
  const std::string raw = require(section, key);
  try {
    std::size_t used = 0;
    const double v = std::stod(raw, &used);
    if (used != raw.size()) throw std::invalid_argument(raw);
    return v;
  } catch (const std::exception&) {
    throw config_error("config: " + qualify(section, key) + " is not a real: " + raw);
  }
}

double ConfigMap::get_real(const std::string& section, const std::string& key,
                           double fallback) {
  if (!has(section, key)) set(section, key, format_real(fallback));
  return get_real(section, key);
}

std::int64_t ConfigMap::get_int(const std::string& section, const std::string& key) {
  const std::string raw = require(section, key);
  std::int64_t v = 0;
  const auto res = std::from_chars(raw.data(), raw.data() + raw.size(), v);
  if (res.ec != std::errc{} || res.ptr != raw.data() + raw.size())
    throw config_error("config: " + qualify(section, key) + " is not an integer: " + raw);
  return v;
}

std::int64_t ConfigMap::get_int(const std::string& section, const std::string& key,
                                std::int64_t fallback) {
  if (!has(section, key)) set(section, key, std::to_string(fallback));
  return get_int(section, key);
}

bool ConfigMap::get_bool(const std::string& section, const std::string& key, bool fallback) {
  if (!has(section, key)) set(section, key, fallback ? "true" : "false");
  const std::string raw = require(section, key);
  std::string low = raw;
  std::transform(low.begin(), low.end(), low.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (low == "true" || low == "1" || low == "yes") return true;
  if (low == "false" || low == "0" || low == "no") return false;
  throw config_error("config: " + qualify(section, key) + " is not a boolean: " + raw);
}

void ConfigMap::finish() const {
  std::string unknown;
  for (const auto& [section, keys] : values_)
    for (const auto& [key, value] : keys)
      if (consumed_.count(qualify(section, key)) == 0) {
        if (!unknown.empty()) unknown += ", ";
        unknown += qualify(section, key);
      }
  if (!unknown.empty()) throw config_error("config: unknown keys: " + unknown);
}

void ConfigMap::validate_known(
    const std::map<std::string, std::set<std::string>>& schema) const {
  std::string unknown;
  for (const auto& [section, keys] : values_) {
    const auto s = schema.find(section);
    for (const auto& [key, value] : keys) {
      if (s != schema.end() && s->second.count(key) != 0) continue;
      if (!unknown.empty()) unknown += ", ";
      unknown += qualify(section, key);
    }
  }
  if (!unknown.empty()) throw config_error("config: unknown keys: " + unknown);
}

std::string ConfigMap::manifest_json(std::uint64_t seed) const {
  nlohmann::json j;
  j["format"] = "mtpp-run-manifest-v1";
  j["seed"] = seed;
  nlohmann::json cfg = nlohmann::json::object();
  for (const auto& [section, keys] : values_) {
    nlohmann::json sec = nlohmann::json::object();
    for (const auto& [key, value] : keys) sec[key] = value;
    cfg[section] = sec;
  }
  j["config"] = cfg;
  return j.dump(2) + "\n";
}

}  // namespace mtpp
