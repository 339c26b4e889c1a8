#include "gped/toml.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "gped/errors.hpp"

namespace gped {

double TomlValue::number() const {
  if (kind == Kind::Integer) return static_cast<double>(integer);
  require(kind == Kind::Float, ErrorKind::Format, "value is not numeric");
  return real;
}

const TomlValue* TomlTable::find(const std::string& dotted_key) const {
  const auto it = values.find(dotted_key);
  return it == values.end() ? nullptr : &it->second;
}

namespace {

struct Cursor {
  const std::string& text;
  std::size_t pos = 0;
  std::size_t line = 1;

  bool done() const { return pos >= text.size(); }
  char peek() const { return text[pos]; }
  char take() {
    const char c = text[pos++];
    if (c == '\n') ++line;
    return c;
  }

  [[noreturn]] void fail(const std::string& what) const {
    std::ostringstream msg;
    msg << "line " << line << ": " << what;
    raise(ErrorKind::Format, msg.str());
  }

  // spaces and tabs only; newlines stay significant
  void skip_blanks() {
    while (!done() && (peek() == ' ' || peek() == '\t')) ++pos;
  }

  void skip_comment() {
    if (!done() && peek() == '#') {
      while (!done() && peek() != '\n') ++pos;
    }
  }

  // whitespace, comments, and newlines: used inside arrays and between lines
  void skip_filler() {
    while (!done()) {
      skip_blanks();
      skip_comment();
      if (!done() && peek() == '\n') {
        take();
        continue;
      }
      break;
    }
  }

  void end_of_line(const char* context) {
    skip_blanks();
    skip_comment();
    if (done()) return;
    if (peek() != '\n') fail(std::string("unexpected text after ") + context);
    take();
  }
};

bool key_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
}

std::string parse_key(Cursor& cur) {
  std::string key;
  while (!cur.done() && key_char(cur.peek())) key.push_back(cur.take());
  if (key.empty()) cur.fail("expected a key");
  return key;
}

std::string parse_dotted_key(Cursor& cur) {
  std::string key = parse_key(cur);
  while (!cur.done() && cur.peek() == '.') {
    cur.take();
    key += '.';
    key += parse_key(cur);
  }
  return key;
}

TomlValue parse_string(Cursor& cur) {
  cur.take();  // opening quote
  TomlValue v;
  v.kind = TomlValue::Kind::String;
  while (true) {
    if (cur.done() || cur.peek() == '\n') cur.fail("unterminated string");
    const char c = cur.take();
    if (c == '"') break;
    if (c == '\\') {
      if (cur.done()) cur.fail("unterminated escape");
      const char e = cur.take();
      switch (e) {
        case '"': v.str.push_back('"'); break;
        case '\\': v.str.push_back('\\'); break;
        case 'n': v.str.push_back('\n'); break;
        case 't': v.str.push_back('\t'); break;
        default: cur.fail("unsupported escape sequence");
      }
      continue;
    }
    v.str.push_back(c);
  }
  return v;
}

TomlValue parse_number(Cursor& cur) {
  std::string tok;
  while (!cur.done()) {
    const char c = cur.peek();
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '+' || c == '-' || c == '.' ||
        c == 'e' || c == 'E' || c == '_') {
      if (c != '_') tok.push_back(c);
      cur.take();
      continue;
    }
    break;
  }
  if (tok.empty()) cur.fail("expected a value");

  TomlValue v;
  const bool is_float = tok.find_first_of(".eE") != std::string::npos;
  const char* begin = tok.c_str();
  char* end = nullptr;
  if (is_float) {
    v.kind = TomlValue::Kind::Float;
    v.real = std::strtod(begin, &end);
  } else {
    v.kind = TomlValue::Kind::Integer;
    v.integer = std::strtoll(begin, &end, 10);
  }
  if (end != begin + tok.size()) cur.fail("malformed number '" + tok + "'");
  return v;
}

TomlValue parse_value(Cursor& cur);

TomlValue parse_array(Cursor& cur) {
  cur.take();  // '['
  TomlValue v;
  v.kind = TomlValue::Kind::Array;
  cur.skip_filler();
  while (true) {
    if (cur.done()) cur.fail("unterminated array");
    if (cur.peek() == ']') {
      cur.take();
      break;
    }
    v.items.push_back(parse_value(cur));
    cur.skip_filler();
    if (!cur.done() && cur.peek() == ',') {
      cur.take();
      cur.skip_filler();
      continue;
    }
    if (cur.done() || cur.peek() != ']') cur.fail("expected ',' or ']' in array");
  }
  return v;
}

TomlValue parse_value(Cursor& cur) {
  if (cur.done()) cur.fail("expected a value");
  const char c = cur.peek();
  if (c == '"') return parse_string(cur);
  if (c == '[') return parse_array(cur);
  if (std::isalpha(static_cast<unsigned char>(c))) {
    std::string word;
    while (!cur.done() && key_char(cur.peek())) word.push_back(cur.take());
    TomlValue v;
    v.kind = TomlValue::Kind::Boolean;
    if (word == "true") {
      v.boolean = true;
      return v;
    }
    if (word == "false") {
      v.boolean = false;
      return v;
    }
    cur.fail("unrecognized value '" + word + "'");
  }
  return parse_number(cur);
}

}  // namespace

TomlTable parse_toml(const std::string& text) {
  TomlTable table;
  Cursor cur{text};
  std::string prefix;

  while (true) {
    cur.skip_filler();
    if (cur.done()) break;

    if (cur.peek() == '[') {
      cur.take();
      cur.skip_blanks();
      prefix = parse_dotted_key(cur);
      cur.skip_blanks();
      if (cur.done() || cur.peek() != ']') cur.fail("expected ']' after table name");
      cur.take();
      cur.end_of_line("table header");
      continue;
    }

    const std::size_t at_line = cur.line;
    std::string key = parse_dotted_key(cur);
    if (!prefix.empty()) key = prefix + "." + key;
    cur.skip_blanks();
    if (cur.done() || cur.peek() != '=') cur.fail("expected '=' after key '" + key + "'");
    cur.take();
    cur.skip_blanks();
    const TomlValue value = parse_value(cur);
    cur.end_of_line("value");

    if (table.values.count(key)) {
      std::ostringstream msg;
      msg << "line " << at_line << ": duplicate key '" << key << "'";
      raise(ErrorKind::Format, msg.str());
    }
    table.values.emplace(std::move(key), value);
  }
  return table;
}

TomlTable parse_toml_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::Format, "cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_toml(buf.str());
}

}  // namespace gped
