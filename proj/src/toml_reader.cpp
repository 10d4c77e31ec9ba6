#include "flad/toml_reader.hpp"

#include "flad/format.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace flad {
namespace {

class Parser {
 public:
  Parser(std::string_view text, std::string origin) : text_(text), origin_(std::move(origin)) {}

  TomlDocument document() {
    TomlDocument doc;
    std::string section;
    doc.sections[section].line = 1;
    while (true) {
      skip_blank_lines();
      if (eof()) break;
      if (peek() == '[') {
        const int line = line_;
        get();
        skip_spaces();
        section = bare_key("section name");
        while (peek() == '.') {
          get();
          section += "." + bare_key("section name");
        }
        skip_spaces();
        expect(']');
        end_of_line();
        if (doc.sections.count(section)) fail_at(line, 1, "duplicate section [" + section + "]");
        doc.sections[section].line = line;
        continue;
      }
      const int kl = line_, kc = col_;
      const std::string key = bare_key("key");
      skip_spaces();
      expect('=');
      skip_spaces();
      TomlValue v = value();
      end_of_line();
      auto& table = doc.sections[section].entries;
      if (table.count(key)) fail_at(kl, kc, "duplicate key '" + key + "'");
      table.emplace(key, std::move(v));
    }
    if (doc.sections[""].entries.empty()) doc.sections.erase("");
    return doc;
  }

  TomlValue single_value() {
    skip_spaces();
    TomlValue v = value();
    skip_spaces();
    if (!eof()) fail("trailing characters after value");
    return v;
  }

 private:
  bool eof() const { return pos_ >= text_.size(); }
  char peek() const { return eof() ? '\0' : text_[pos_]; }

  char get() {
    const char ch = text_[pos_++];
    if (ch == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    return ch;
  }

  [[noreturn]] void fail(const std::string& what) const { throw TomlError(origin_, line_, col_, what); }
  [[noreturn]] void fail_at(int line, int col, const std::string& what) const {
    throw TomlError(origin_, line, col, what);
  }

  void expect(char ch) {
    if (peek() != ch) fail(std::string("expected '") + ch + "'");
    get();
  }

  void skip_spaces() {
    while (!eof() && (peek() == ' ' || peek() == '\t')) get();
  }

  void skip_comment() {
    if (peek() == '#') {
      while (!eof() && peek() != '\n') get();
    }
  }

  void skip_blank_lines() {
    while (!eof()) {
      skip_spaces();
      skip_comment();
      if (peek() == '\r') get();
      if (peek() == '\n') {
        get();
      } else {
        break;
      }
    }
  }

  void end_of_line() {
    skip_spaces();
    skip_comment();
    if (peek() == '\r') get();
    if (eof()) return;
    if (peek() != '\n') fail("expected end of line");
    get();
  }

  // Skips whitespace, newlines and comments inside arrays.
  void skip_array_space() {
    while (!eof()) {
      skip_spaces();
      skip_comment();
      if (peek() == '\n' || peek() == '\r') {
        get();
      } else {
        break;
      }
    }
  }

  static bool key_char(char ch) { return std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-'; }

  std::string bare_key(const char* what) {
    std::string out;
    while (!eof() && key_char(peek())) out += get();
    if (out.empty()) fail(std::string("expected ") + what);
    return out;
  }

  TomlValue value() {
    TomlValue v;
    v.line = line_;
    v.column = col_;
    const char ch = peek();
    if (ch == '"') {
      v.data = basic_string();
    } else if (ch == '\'') {
      v.data = literal_string();
    } else if (ch == '[') {
      v.data = array();
    } else if (text_.substr(pos_, 4) == "true" && !key_char(text_.size() > pos_ + 4 ? text_[pos_ + 4] : ' ')) {
      for (int i = 0; i < 4; ++i) get();
      v.data = true;
    } else if (text_.substr(pos_, 5) == "false" && !key_char(text_.size() > pos_ + 5 ? text_[pos_ + 5] : ' ')) {
      for (int i = 0; i < 5; ++i) get();
      v.data = false;
    } else if (ch == '+' || ch == '-' || ch == 'i' || ch == 'n' || std::isdigit(static_cast<unsigned char>(ch))) {
      number(v);
    } else {
      fail("expected a value");
    }
    return v;
  }

  std::string basic_string() {
    get();
    std::string out;
    while (true) {
      if (eof() || peek() == '\n') fail("unterminated string");
      const char ch = get();
      if (ch == '"') break;
      if (ch != '\\') {
        out += ch;
        continue;
      }
      if (eof()) fail("unterminated escape");
      const char e = get();
      switch (e) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        default: fail(std::string("unsupported escape \\") + e);
      }
    }
    return out;
  }

  std::string literal_string() {
    get();
    std::string out;
    while (true) {
      if (eof() || peek() == '\n') fail("unterminated string");
      const char ch = get();
      if (ch == '\'') break;
      out += ch;
    }
    return out;
  }

  TomlValue::Array array() {
    get();
    TomlValue::Array out;
    skip_array_space();
    while (peek() != ']') {
      if (eof()) fail("unterminated array");
      out.push_back(value());
      skip_array_space();
      if (peek() == ',') {
        get();
        skip_array_space();
      } else if (peek() != ']') {
        fail("expected ',' or ']'");
      }
    }
    get();
    return out;
  }

  void number(TomlValue& v) {
    const int line = line_, col = col_;
    std::string tok;
    while (!eof() && (key_char(peek()) || peek() == '.' || peek() == '+')) tok += get();
    std::string digits;
    for (char ch : tok) {
      if (ch != '_') digits += ch;
    }
    std::string_view body = digits;
    bool neg = false;
    if (!body.empty() && (body[0] == '+' || body[0] == '-')) {
      neg = body[0] == '-';
      body.remove_prefix(1);
    }
    if (body == "inf") {
      v.data = neg ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
      return;
    }
    if (body == "nan") {
      v.data = std::numeric_limits<double>::quiet_NaN();
      return;
    }
    const bool is_float = body.find_first_of(".eE") != std::string_view::npos;
    const char* first = digits.data() + (digits[0] == '+' ? 1 : 0);
    const char* last = digits.data() + digits.size();
    if (is_float) {
      double x = 0;
      auto [ptr, ec] = std::from_chars(first, last, x);
      if (ec != std::errc{} || ptr != last) fail_at(line, col, "invalid number '" + tok + "'");
      v.data = x;
    } else {
      std::int64_t x = 0;
      auto [ptr, ec] = std::from_chars(first, last, x);
      if (ec != std::errc{} || ptr != last) fail_at(line, col, "invalid number '" + tok + "'");
      v.data = x;
    }
  }

  std::string_view text_;
  std::string origin_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char ch : s) {
    switch (ch) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default: out += ch;
    }
  }
  return out + "\"";
}

}  // namespace

TomlDocument parse_toml(std::string_view text, const std::string& origin) { return Parser(text, origin).document(); }

TomlDocument parse_toml_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config", path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_toml(ss.str(), path);
}

TomlValue parse_toml_value(std::string_view text, const std::string& origin) {
  return Parser(text, origin).single_value();
}

std::string to_toml_literal(const TomlValue& v) {
  struct Visitor {
    std::string operator()(bool b) const { return b ? "true" : "false"; }
    std::string operator()(std::int64_t i) const { return std::to_string(i); }
    std::string operator()(double x) const {
      if (std::isnan(x)) return "nan";
      if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
      std::string s = format_double(x);
      if (s.find_first_of(".eE") == std::string::npos) s += ".0";
      return s;
    }
    std::string operator()(const std::string& s) const { return quote(s); }
    std::string operator()(const TomlValue::Array& a) const {
      std::string out = "[";
      for (std::size_t i = 0; i < a.size(); ++i) {
        if (i) out += ", ";
        out += to_toml_literal(a[i]);
      }
      return out + "]";
    }
  };
  return std::visit(Visitor{}, v.data);
}

}  // namespace flad
