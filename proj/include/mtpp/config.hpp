#ifndef MTPP_CONFIG_HPP
#define MTPP_CONFIG_HPP

#include <cstdint>
#include <map>
#include <set>
#include <string>

namespace mtpp {

// Sectioned key/value configuration with strict consumption: every key
// present in the input must be read by the resolver, otherwise finish()
// reports it as unknown. Defaults applied during resolution are written back
// so the fully resolved map can be serialized into a run manifest and fed
// back verbatim.
class ConfigMap {
 public:
  static ConfigMap parse_ini_file(const std::string& path);
  static ConfigMap parse_ini(const std::string& text, const std::string& origin = "<string>");
  static ConfigMap from_manifest_file(const std::string& path);

  bool has(const std::string& section, const std::string& key) const;
  void set(const std::string& section, const std::string& key, const std::string& value);
  // "section.key=value"
  void apply_override(const std::string& spec);

  // Typed getters consume the key. The default-taking forms write the default
  // back into the map when the key is absent.
  std::string get_string(const std::string& section, const std::string& key);
  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback);
  double get_real(const std::string& section, const std::string& key);
  double get_real(const std::string& section, const std::string& key, double fallback);
  std::int64_t get_int(const std::string& section, const std::string& key);
  std::int64_t get_int(const std::string& section, const std::string& key,
                       std::int64_t fallback);
  bool get_bool(const std::string& section, const std::string& key, bool fallback);

  // Throws config_error listing any key never consumed (misspellings are
  // errors, never silently ignored).
  void finish() const;

  // Schema strictness: every present key must appear in the schema, whether
  // or not this command consumed it (so one file can serve train and eval
  // while typos still fail loudly).
  void validate_known(
      const std::map<std::string, std::set<std::string>>& schema) const;

  std::string manifest_json(std::uint64_t seed) const;

 private:
  std::string require(const std::string& section, const std::string& key);
  std::map<std::string, std::map<std::string, std::string>> values_;
  mutable std::set<std::string> consumed_;
};

std::string format_real(double v);  // shortest round-trip decimal

}  // namespace mtpp

#endif
