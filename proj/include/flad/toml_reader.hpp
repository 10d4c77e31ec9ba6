#pragma once

#include "flad/errors.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace flad {

/// Parse failure carrying the 1-based location of the offending character.
class TomlError : public ConfigError {
 public:
  TomlError(const std::string& origin, int line, int column, const std::string& what)
      : ConfigError(origin + ":" + std::to_string(line) + ":" + std::to_string(column) + ": " + what),
        line_(line),
        column_(column) {}
  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }

 private:
  int line_;
  int column_;
};

struct TomlValue {
  using Array = std::vector<TomlValue>;
  std::variant<bool, std::int64_t, double, std::string, Array> data;
  int line = 0;
  int column = 0;

  bool is_bool() const { return std::holds_alternative<bool>(data); }
  bool is_int() const { return std::holds_alternative<std::int64_t>(data); }
  bool is_float() const { return std::holds_alternative<double>(data); }
  bool is_string() const { return std::holds_alternative<std::string>(data); }
  bool is_array() const { return std::holds_alternative<Array>(data); }
};

struct TomlTable {
  std::map<std::string, TomlValue> entries;
  int line = 0;
};

/// Sections keyed by header name; keys before the first header land in "".
struct TomlDocument {
  std::map<std::string, TomlTable> sections;
};

/// Subset of TOML: [section] headers, bare keys, booleans, integers, floats
/// (incl. inf/nan), basic and literal strings, single-line arrays, comments.
TomlDocument parse_toml(std::string_view text, const std::string& origin = "<config>");
TomlDocument parse_toml_file(const std::string& path);

/// Parses one value as it would appear right of '='.
TomlValue parse_toml_value(std::string_view text, const std::string& origin = "<value>");

/// Literal that parses back to the same value.
std::string to_toml_literal(const TomlValue& v);

}  // namespace flad
