#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ffseg {

/// Flat `key = value` configuration. Lines starting with '#' are comments;
/// later keys override earlier ones.
class KeyValueConfig {
 public:
  static KeyValueConfig Parse(const std::string& text);
  static KeyValueConfig Load(const std::filesystem::path& path);

  bool Has(const std::string& key) const { return values_.count(key) != 0; }
  std::optional<std::string> Get(const std::string& key) const;
  std::string GetString(const std::string& key, const std::string& fallback) const;
  double GetDouble(const std::string& key, double fallback) const;
  long long GetInt(const std::string& key, long long fallback) const;
  bool GetBool(const std::string& key, bool fallback) const;
  /// Whitespace- or comma-separated numbers.
  std::vector<double> GetDoubles(const std::string& key) const;

  void Set(const std::string& key, const std::string& value) { values_[key] = value; }
  const std::map<std::string, std::string>& values() const { return values_; }

  /// Throws InputError naming the first key not in `known` (prefix match when
  /// an entry ends in '*').
  void RejectUnknown(const std::vector<std::string>& known) const;

  std::string ToString() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace ffseg
