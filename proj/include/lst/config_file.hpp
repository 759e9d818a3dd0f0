#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace lst {

/// Flat key=value settings with namespaced keys (model.layers, side.r, ...).
/// Blank lines and lines starting with '#' are ignored.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text, const std::string& origin = "<string>");
  static KeyValueConfig load(const std::filesystem::path& path);

  /// Later values win.
  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  void merge(const KeyValueConfig& other);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::string get(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  /// Comma-separated integers; empty value gives an empty list.
  std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback) const;

  /// Keys never read through a getter.
  std::vector<std::string> unused() const;
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> read_;
};

}  // namespace lst
