#pragma once

// Reader for the subset of TOML used by experiment configs: comments, bare
// and quoted keys, dotted keys, [tables], [[arrays of tables]], basic and
// literal strings, integers, floats (incl. inf/nan), booleans, arrays
// (multi-line) and inline tables. Dates and multi-line strings are not
// supported. The result is an nlohmann::json object; errors carry
// line:column positions.

#include "hmc_lab/core.hpp"

#include "json.hpp"

#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace hmc_lab::toml {

class ParseError : public ConfigError {
public:
  ParseError(const std::string& msg, int line, int column)
      : ConfigError("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " +
                    msg),
        line_(line), column_(column) {}

  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }

private:
  int line_, column_;
};

namespace detail {

class Parser {
public:
  explicit Parser(std::string text) : s_(std::move(text)) {}

  nlohmann::json parse() {
    nlohmann::json root = nlohmann::json::object();
    nlohmann::json* current = &root;
    std::string current_path;
    for (;;) {
      skip_ws_comments_newlines();
      if (eof()) break;
      if (peek() == '[') {
        const bool array_table = peek(1) == '[';
        advance(array_table ? 2 : 1);
        skip_ws();
        const auto path = parse_key_path();
        skip_ws();
        expect(']');
        if (array_table) expect(']');
        end_of_line();
        current = open_table(root, path, array_table);
        current_path = join(path);
        continue;
      }
      parse_key_value(*current, current_path);
      end_of_line();
    }
    return root;
  }

private:
  // ---- cursor
  bool eof() const { return pos_ >= s_.size(); }
  char peek(std::size_t k = 0) const { return pos_ + k < s_.size() ? s_[pos_ + k] : '\0'; }

  void advance(std::size_t k = 1) {
    for (std::size_t i = 0; i < k && !eof(); ++i) {
      if (s_[pos_] == '\n') {
        ++line_;
        col_ = 1;
      } else {
        ++col_;
      }
      ++pos_;
    }
  }

  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, line_, col_); }

  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'");
    advance();
  }

  void skip_ws() {
    while (peek() == ' ' || peek() == '\t') advance();
  }

  void skip_comment() {
    if (peek() == '#')
      while (!eof() && peek() != '\n') advance();
  }

  void skip_ws_comments_newlines() {
    for (;;) {
      skip_ws();
      skip_comment();
      if (peek() == '\r' && peek(1) == '\n') advance(2);
      else if (peek() == '\n') advance();
      else return;
    }
  }

  void end_of_line() {
    skip_ws();
    skip_comment();
    if (eof()) return;
    if (peek() == '\r' && peek(1) == '\n') return advance(2);
    if (peek() != '\n') fail("unexpected text after value");
    advance();
  }

  // ---- keys
  static bool bare_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
  }

  std::string parse_simple_key() {
    if (peek() == '"') return parse_basic_string();
    if (peek() == '\'') return parse_literal_string();
    std::string k;
    while (bare_char(peek())) {
      k += peek();
      advance();
    }
    if (k.empty()) fail("expected a key");
    return k;
  }

  std::vector<std::string> parse_key_path() {
    std::vector<std::string> path{parse_simple_key()};
    skip_ws();
    while (peek() == '.') {
      advance();
      skip_ws();
      path.push_back(parse_simple_key());
      skip_ws();
    }
    return path;
  }

  static std::string join(const std::vector<std::string>& path) {
    std::string out;
    for (const auto& p : path) out += (out.empty() ? "" : ".") + p;
    return out;
  }

  nlohmann::json* open_table(nlohmann::json& root, const std::vector<std::string>& path,
                             bool array_table) {
    nlohmann::json* node = &root;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) node = descend(*node, path[i]);
    const std::string& last = path.back();
    const std::string full = join(path);
    if (array_table) {
      if (!node->contains(last)) {
        (*node)[last] = nlohmann::json::array();
        array_tables_.insert(full);
      } else if (!array_tables_.count(full)) {
        fail("key '" + full + "' is not an array of tables");
      }
      auto& arr = (*node)[last];
      arr.push_back(nlohmann::json::object());
      return &arr.back();
    }
    if (defined_tables_.count(full)) fail("table [" + full + "] defined twice");
    defined_tables_.insert(full);
    if (!node->contains(last)) (*node)[last] = nlohmann::json::object();
    auto& t = (*node)[last];
    if (!t.is_object()) fail("key '" + full + "' is not a table");
    return &t;
  }

  nlohmann::json* descend(nlohmann::json& node, const std::string& key) {
    if (!node.contains(key)) node[key] = nlohmann::json::object();
    nlohmann::json* child = &node[key];
    if (child->is_array() && !child->empty() && child->back().is_object()) return &child->back();
    if (!child->is_object()) fail("key '" + key + "' is not a table");
    return child;
  }

  void parse_key_value(nlohmann::json& table, const std::string& table_path) {
    const auto path = parse_key_path();
    skip_ws();
    expect('=');
    skip_ws();
    nlohmann::json* node = &table;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) node = descend(*node, path[i]);
    const std::string& last = path.back();
    if (node->contains(last)) {
      const std::string full = (table_path.empty() ? "" : table_path + ".") + join(path);
      fail("duplicate key '" + full + "'");
    }
    (*node)[last] = parse_value();
  }

  // ---- values
  nlohmann::json parse_value() {
    const char c = peek();
    if (c == '"') return parse_basic_string();
    if (c == '\'') return parse_literal_string();
    if (c == '[') return parse_array();
    if (c == '{') return parse_inline_table();
    if (s_.compare(pos_, 4, "true") == 0 && !bare_char(peek(4))) {
      advance(4);
      return true;
    }
    if (s_.compare(pos_, 5, "false") == 0 && !bare_char(peek(5))) {
      advance(5);
      return false;
    }
    return parse_number();
  }

  std::string parse_basic_string() {
    expect('"');
    std::string out;
    for (;;) {
      if (eof() || peek() == '\n') fail("unterminated string");
      const char c = peek();
      advance();
      if (c == '"') return out;
      if (c != '\\') {
        out += c;
        continue;
      }
      const char e = peek();
      advance();
      switch (e) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        default: fail(std::string("unsupported escape '\\") + e + "'");
      }
    }
  }

  std::string parse_literal_string() {
    expect('\'');
    std::string out;
    while (peek() != '\'') {
      if (eof() || peek() == '\n') fail("unterminated string");
      out += peek();
      advance();
    }
    advance();
    return out;
  }

  nlohmann::json parse_array() {
    expect('[');
    nlohmann::json arr = nlohmann::json::array();
    for (;;) {
      skip_ws_comments_newlines();
      if (peek() == ']') {
        advance();
        return arr;
      }
      arr.push_back(parse_value());
      skip_ws_comments_newlines();
      if (peek() == ',') {
        advance();
        continue;
      }
      if (peek() != ']') fail("expected ',' or ']' in array");
    }
  }

  nlohmann::json parse_inline_table() {
    expect('{');
    nlohmann::json t = nlohmann::json::object();
    skip_ws();
    if (peek() == '}') {
      advance();
      return t;
    }
    for (;;) {
      skip_ws();
      parse_key_value(t, "");
      skip_ws();
      if (peek() == ',') {
        advance();
        continue;
      }
      expect('}');
      return t;
    }
  }

  nlohmann::json parse_number() {
    const int line = line_, col = col_;
    std::string tok;
    while (!eof() && (bare_char(peek()) || peek() == '+' || peek() == '.')) {
      if (peek() != '_') tok += peek();
      advance();
    }
    if (tok.empty()) throw ParseError("expected a value", line, col);
    const std::string body = (tok[0] == '+' || tok[0] == '-') ? tok.substr(1) : tok;
    if (body == "inf" || body == "nan") {
      const double v = body == "inf" ? std::numeric_limits<double>::infinity()
                                     : std::numeric_limits<double>::quiet_NaN();
      return tok[0] == '-' ? -v : v;
    }
    const bool is_float = tok.find_first_of(".eE") != std::string::npos;
    errno = 0;
    char* end = nullptr;
    if (!is_float) {
      if (tok[0] == '-') {
        const long long v = std::strtoll(tok.c_str(), &end, 10);
        if (*end == '\0' && errno == 0) return v;
      } else {
        const unsigned long long v = std::strtoull(tok.c_str(), &end, 10);
        if (*end == '\0' && errno == 0) return static_cast<std::uint64_t>(v);
      }
      if (errno == ERANGE) throw ParseError("integer out of range: " + tok, line, col);
      throw ParseError("invalid value: " + tok, line, col);
    }
    const double v = std::strtod(tok.c_str(), &end);
    if (*end != '\0' || !std::isdigit(static_cast<unsigned char>(body.empty() ? 'x' : body[0])))
      throw ParseError("invalid value: " + tok, line, col);
    return v;
  }

  std::string s_;
  std::size_t pos_ = 0;
  int line_ = 1, col_ = 1;
  std::set<std::string> defined_tables_;
  std::set<std::string> array_tables_;
};

}  // namespace detail

inline nlohmann::json parse(const std::string& text) { return detail::Parser(text).parse(); }

inline nlohmann::json parse_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

}  // namespace hmc_lab::toml
