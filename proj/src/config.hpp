#pragma once

#include <string>
#include <vector>

namespace gwpoct {

/// Ordered key-value store backing every structured text file in the toolkit:
/// experiment configs, model parameter files, and solve reports. The format is
/// one `key = value` pair per line, `#` starts a comment, numbers are plain
/// decimal text, lists are comma separated.
class KeyValues {
 public:
  static KeyValues load(const std::string& path);
  static KeyValues parse(const std::string& text, const std::string& origin = "<string>");

  void save(const std::string& path) const;
  std::string serialize() const;

  bool has(const std::string& key) const;
  std::vector<std::string> keys() const;

  void set(const std::string& key, const std::string& value);
  void set_double(const std::string& key, double value);
  void set_int(const std::string& key, long long value);
  void set_bool(const std::string& key, bool value);
  void set_list(const std::string& key, const std::vector<double>& values);

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_list(const std::string& key) const;
  std::vector<double> get_list(const std::string& key, const std::vector<double>& fallback) const;

 private:
  struct Entry {
    std::string key;
    std::string value;
  };
  const Entry* find(const std::string& key) const;
  std::vector<Entry> entries_;
};

/// Deterministic text form of a double: shortest representation that round-trips.
std::string format_double(double value);

}  // namespace gwpoct
