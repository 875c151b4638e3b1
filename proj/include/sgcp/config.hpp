#pragma once

#include <iosfwd>
#include <map>
#include <string>

namespace sgcp {

/// Flat `key = value` document. Blank lines and lines starting with '#' are
/// ignored. Later assignments win, so command-line overrides are applied with
/// `set` after loading.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& in, const std::string& origin = "config");
  static KeyValueConfig load(const std::string& path);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const { return values_; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;

  /// Sorted `key = value` lines; this is what config.echo contains.
  void write(std::ostream& out) const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace sgcp
