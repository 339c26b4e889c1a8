#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace gped {

// Small TOML subset for run configs: [section] and [a.b] headers, bare keys,
// strings, booleans, integers, floats, and (possibly multi-line) arrays,
// with # comments. Keys flatten to dotted paths.
struct TomlValue {
  enum class Kind { String, Integer, Float, Boolean, Array };
  Kind kind = Kind::Integer;
  std::string str;
  std::int64_t integer = 0;
  double real = 0.0;
  bool boolean = false;
  std::vector<TomlValue> items;

  // numeric accessor: integers freely widen to double
  double number() const;
};

struct TomlTable {
  std::map<std::string, TomlValue> values;

  bool has(const std::string& dotted_key) const { return values.count(dotted_key) != 0; }
  const TomlValue* find(const std::string& dotted_key) const;
};

// Format errors carry 1-based line numbers. Duplicate keys are rejected;
// reopening a table is allowed.
TomlTable parse_toml(const std::string& text);
TomlTable parse_toml_file(const std::string& path);

}  // namespace gped
