#pragma once

#include <cctype>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "iacforge/decimal.hpp"
#include "iacforge/errors.hpp"

namespace iacforge::hcl {

// ---------------------------------------------------------------------------
// AST
// ---------------------------------------------------------------------------

/// Expression in the frozen HCL subset: literals, lists, maps, and dotted
/// reference addresses. `hole` only appears in skeleton programs produced by
/// the structural compiler; the printer refuses to render it.
struct HclExpr {
  enum class Kind { string, number, boolean, list, map, reference, hole };

  Kind kind = Kind::string;
  std::string str;
  Decimal num;
  bool decimal_form = false;  // number carried a fraction; kept for exact lifting
  bool b = false;
  std::vector<HclExpr> items;
  std::vector<std::pair<std::string, HclExpr>> entries;
  std::vector<std::string> ref_path;
  int hole_id = -1;

  static HclExpr string_lit(std::string s) {
    HclExpr e;
    e.kind = Kind::string;
    e.str = std::move(s);
    return e;
  }
  static HclExpr number_lit(Decimal d, bool decimal_form) {
    HclExpr e;
    e.kind = Kind::number;
    e.num = d;
    e.decimal_form = decimal_form;
    return e;
  }
  static HclExpr bool_lit(bool v) {
    HclExpr e;
    e.kind = Kind::boolean;
    e.b = v;
    return e;
  }
  static HclExpr list(std::vector<HclExpr> items) {
    HclExpr e;
    e.kind = Kind::list;
    e.items = std::move(items);
    return e;
  }
  static HclExpr map(std::vector<std::pair<std::string, HclExpr>> entries) {
    HclExpr e;
    e.kind = Kind::map;
    e.entries = std::move(entries);
    return e;
  }
  static HclExpr reference(std::vector<std::string> path) {
    HclExpr e;
    e.kind = Kind::reference;
    e.ref_path = std::move(path);
    return e;
  }
  static HclExpr hole(int id) {
    HclExpr e;
    e.kind = Kind::hole;
    e.hole_id = id;
    return e;
  }

  friend bool operator==(const HclExpr& a, const HclExpr& b) {
    if (a.kind != b.kind) return false;
    switch (a.kind) {
      case Kind::string: return a.str == b.str;
      case Kind::number: return a.num == b.num && a.decimal_form == b.decimal_form;
      case Kind::boolean: return a.b == b.b;
      case Kind::list: return a.items == b.items;
      case Kind::map: return a.entries == b.entries;
      case Kind::reference: return a.ref_path == b.ref_path;
      case Kind::hole: return a.hole_id == b.hole_id;
    }
    return false;
  }
};

struct Block {
  std::string type;  // resource | variable | output | module | provider, or a nested rule type
  std::vector<std::string> labels;
  std::vector<std::pair<std::string, HclExpr>> attributes;
  std::vector<Block> nested;

  [[nodiscard]] const HclExpr* attribute(std::string_view name) const {
    for (const auto& [n, v] : attributes)
      if (n == name) return &v;
    return nullptr;
  }
  [[nodiscard]] HclExpr* attribute(std::string_view name) {
    for (auto& [n, v] : attributes)
      if (n == name) return &v;
    return nullptr;
  }

  /// "kind.name" for resource blocks, "type.label" otherwise.
  [[nodiscard]] std::string address() const {
    std::string a = type == "resource" ? "" : type;
    for (const auto& l : labels) {
      if (!a.empty()) a += ".";
      a += l;
    }
    return a;
  }

  friend bool operator==(const Block&, const Block&) = default;
};

struct HclProgram {
  std::vector<Block> blocks;

  [[nodiscard]] const Block* resource(std::string_view kind, std::string_view name) const {
    for (const auto& b : blocks)
      if (b.type == "resource" && b.labels.size() == 2 && b.labels[0] == kind &&
          b.labels[1] == name)
        return &b;
    return nullptr;
  }
  [[nodiscard]] Block* resource(std::string_view kind, std::string_view name) {
    for (auto& b : blocks)
      if (b.type == "resource" && b.labels.size() == 2 && b.labels[0] == kind &&
          b.labels[1] == name)
        return &b;
    return nullptr;
  }

  friend bool operator==(const HclProgram&, const HclProgram&) = default;
};

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

enum class TokKind {
  ident,
  string_lit,
  number_lit,
  bool_lit,
  lbrace,
  rbrace,
  lbracket,
  rbracket,
  equals,
  comma,
  dot,
  end,
};

inline const char* tok_kind_name(TokKind k) {
  switch (k) {
    case TokKind::ident: return "identifier";
    case TokKind::string_lit: return "string literal";
    case TokKind::number_lit: return "number";
    case TokKind::bool_lit: return "boolean";
    case TokKind::lbrace: return "'{'";
    case TokKind::rbrace: return "'}'";
    case TokKind::lbracket: return "'['";
    case TokKind::rbracket: return "']'";
    case TokKind::equals: return "'='";
    case TokKind::comma: return "','";
    case TokKind::dot: return "'.'";
    case TokKind::end: return "end of input";
  }
  return "?";
}

struct Token {
  TokKind kind = TokKind::end;
  std::string text;     // ident name / decoded string / number spelling
  int line = 0, col = 0;
};

inline bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
inline bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

inline std::vector<Token> lex(std::string_view text) {
  std::vector<Token> toks;
  int line = 1, col = 1;
  std::size_t i = 0;
  auto advance = [&](std::size_t n = 1) {
    for (std::size_t k = 0; k < n; ++k) {
      if (i < text.size() && text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
      ++i;
    }
  };
  auto fail = [&](const std::string& msg) {
    throw Error(ErrorCode::parse_error,
                std::to_string(line) + ":" + std::to_string(col) + ": " + msg);
  };
  while (i < text.size()) {
    char c = text[i];
    if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
      advance();
      continue;
    }
    if (c == '#' || (c == '/' && i + 1 < text.size() && text[i + 1] == '/')) {
      while (i < text.size() && text[i] != '\n') advance();
      continue;
    }
    Token t;
    t.line = line;
    t.col = col;
    switch (c) {
      case '{': t.kind = TokKind::lbrace; advance(); break;
      case '}': t.kind = TokKind::rbrace; advance(); break;
      case '[': t.kind = TokKind::lbracket; advance(); break;
      case ']': t.kind = TokKind::rbracket; advance(); break;
      case '=': t.kind = TokKind::equals; advance(); break;
      case ',': t.kind = TokKind::comma; advance(); break;
      case '.': t.kind = TokKind::dot; advance(); break;
      case '"': {
        advance();
        std::string s;
        while (i < text.size() && text[i] != '"') {
          if (text[i] == '\\') {
            advance();
            if (i >= text.size()) fail("unterminated escape");
            switch (text[i]) {
              case '"': s += '"'; break;
              case '\\': s += '\\'; break;
              case 'n': s += '\n'; break;
              case 't': s += '\t'; break;
              case 'r': s += '\r'; break;
              default: fail(std::string("unknown escape '\\") + text[i] + "'");
            }
            advance();
          } else if (text[i] == '\n') {
            fail("newline in string literal");
          } else {
            s += text[i];
            advance();
          }
        }
        if (i >= text.size()) fail("unterminated string literal");
        advance();  // closing quote
        t.kind = TokKind::string_lit;
        t.text = std::move(s);
        break;
      }
      default: {
        if (std::isdigit(static_cast<unsigned char>(c)) ||
            (c == '-' && i + 1 < text.size() &&
             std::isdigit(static_cast<unsigned char>(text[i + 1])))) {
          std::string num;
          if (c == '-') {
            num += '-';
            advance();
          }
          while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) {
            num += text[i];
            advance();
          }
          if (i < text.size() && text[i] == '.' && i + 1 < text.size() &&
              std::isdigit(static_cast<unsigned char>(text[i + 1]))) {
            num += '.';
            advance();
            while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) {
              num += text[i];
              advance();
            }
          }
          t.kind = TokKind::number_lit;
          t.text = std::move(num);
        } else if (is_ident_start(c)) {
          std::string id;
          while (i < text.size() && is_ident_char(text[i])) {
            id += text[i];
            advance();
          }
          if (id == "true" || id == "false") {
            t.kind = TokKind::bool_lit;
          } else {
            t.kind = TokKind::ident;
          }
          t.text = std::move(id);
        } else {
          fail(std::string("unexpected character '") + c + "'");
        }
      }
    }
    toks.push_back(std::move(t));
  }
  Token eof;
  eof.kind = TokKind::end;
  eof.line = line;
  eof.col = col;
  toks.push_back(eof);
  return toks;
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

inline constexpr const char* kTopBlockTypes[] = {"resource", "variable", "output", "module",
                                                 "provider"};

inline bool is_top_block_type(std::string_view t) {
  for (const char* k : kTopBlockTypes)
    if (t == k) return true;
  return false;
}

/// Labels each top-level block type must carry. resource: (kind, name).
inline int label_count(std::string_view block_type) {
  return block_type == "resource" ? 2 : 1;
}

namespace detail {

class Parser {
 public:
  explicit Parser(std::vector<Token> toks) : toks_(std::move(toks)) {}

  HclProgram parse_program() {
    HclProgram prog;
    while (peek().kind != TokKind::end) prog.blocks.push_back(parse_top_block());
    return prog;
  }

 private:
  [[nodiscard]] const Token& peek(std::size_t ahead = 0) const {
    std::size_t i = pos_ + ahead;
    return i < toks_.size() ? toks_[i] : toks_.back();
  }
  const Token& take() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }

  [[noreturn]] void fail(const Token& t, const std::string& expected) const {
    throw Error(ErrorCode::parse_error, std::to_string(t.line) + ":" + std::to_string(t.col) +
                                            ": expected " + expected + ", got " +
                                            tok_kind_name(t.kind) +
                                            (t.text.empty() ? "" : " '" + t.text + "'"));
  }

  Token expect(TokKind k, const std::string& expected) {
    if (peek().kind != k) fail(peek(), expected);
    return take();
  }

  Block parse_top_block() {
    const Token& t = peek();
    if (t.kind != TokKind::ident) fail(t, "block type (resource, variable, output, module, provider)");
    if (!is_top_block_type(t.text)) fail(t, "one of resource, variable, output, module, provider");
    Block b;
    b.type = take().text;
    int want = label_count(b.type);
    for (int k = 0; k < want; ++k) {
      if (peek().kind != TokKind::string_lit)
        fail(peek(), b.type == "resource" && k == 1
                         ? "second label (resource name) for resource block"
                         : "string literal (block label)");
      b.labels.push_back(take().text);
    }
    expect(TokKind::lbrace, "'{'");
    parse_body(b);
    return b;
  }

  void parse_body(Block& b) {
    while (true) {
      const Token& t = peek();
      if (t.kind == TokKind::rbrace) {
        take();
        return;
      }
      if (t.kind != TokKind::ident) fail(t, "attribute name, nested block, or '}'");
      std::string name = take().text;
      if (peek().kind == TokKind::equals) {
        take();
        if (b.attribute(name))
          throw Error(ErrorCode::parse_error, std::to_string(t.line) + ":" +
                                                  std::to_string(t.col) +
                                                  ": duplicate attribute '" + name + "'");
        b.attributes.emplace_back(std::move(name), parse_expr());
      } else if (peek().kind == TokKind::lbrace) {
        take();
        Block nested;
        nested.type = std::move(name);
        parse_body(nested);
        b.nested.push_back(std::move(nested));
      } else {
        fail(peek(), "'=' (attribute) or '{' (nested block)");
      }
    }
  }

  HclExpr parse_expr() {
    const Token& t = peek();
    switch (t.kind) {
      case TokKind::string_lit: return HclExpr::string_lit(take().text);
      case TokKind::number_lit: {
        std::string spelling = take().text;
        bool dec = spelling.find('.') != std::string::npos;
        return HclExpr::number_lit(Decimal::parse(spelling), dec);
      }
      case TokKind::bool_lit: return HclExpr::bool_lit(take().text == "true");
      case TokKind::lbracket: {
        take();
        std::vector<HclExpr> items;
        if (peek().kind != TokKind::rbracket) {
          items.push_back(parse_expr());
          while (peek().kind == TokKind::comma) {
            take();
            if (peek().kind == TokKind::rbracket) break;  // trailing comma
            items.push_back(parse_expr());
          }
        }
        expect(TokKind::rbracket, "']' or ','");
        return HclExpr::list(std::move(items));
      }
      case TokKind::lbrace: {
        take();
        std::vector<std::pair<std::string, HclExpr>> entries;
        while (peek().kind != TokKind::rbrace) {
          std::string key;
          if (peek().kind == TokKind::ident || peek().kind == TokKind::bool_lit ||
              peek().kind == TokKind::string_lit) {
            key = take().text;
          } else {
            fail(peek(), "map key (identifier or string)");
          }
          expect(TokKind::equals, "'='");
          entries.emplace_back(std::move(key), parse_expr());
          if (peek().kind == TokKind::comma) take();
        }
        take();  // rbrace
        return HclExpr::map(std::move(entries));
      }
      case TokKind::ident: {
        std::vector<std::string> path;
        path.push_back(take().text);
        while (peek().kind == TokKind::dot) {
          take();
          if (peek().kind != TokKind::ident) fail(peek(), "identifier after '.'");
          path.push_back(take().text);
        }
        if (path.size() < 2)
          fail(t, "reference address with at least two segments (e.g. vpc.main or var.name)");
        return HclExpr::reference(std::move(path));
      }
      default:
        fail(t, "expression (string, number, boolean, list, map, or reference)");
    }
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Text -> AST for the frozen subset. Diagnostics cite line:column and the
/// expected-token set.
inline HclProgram parse(std::string_view text) {
  return detail::Parser(lex(text)).parse_program();
}

// ---------------------------------------------------------------------------
// Canonical printer
// ---------------------------------------------------------------------------

namespace detail {

inline bool plain_map_key(std::string_view k) {
  if (k.empty() || !is_ident_start(k[0])) return false;
  for (char c : k)
    if (!is_ident_char(c)) return false;
  return k != "true" && k != "false";
}

inline void print_expr(std::string& out, const HclExpr& e) {
  switch (e.kind) {
    case HclExpr::Kind::string: {
      out += '"';
      for (char c : e.str) {
        switch (c) {
          case '"': out += "\\\""; break;
          case '\\': out += "\\\\"; break;
          case '\n': out += "\\n"; break;
          case '\t': out += "\\t"; break;
          case '\r': out += "\\r"; break;
          default: out += c;
        }
      }
      out += '"';
      break;
    }
    case HclExpr::Kind::number: {
      std::string t = e.num.to_string();
      if (e.decimal_form && t.find('.') == std::string::npos) t += ".0";
      out += t;
      break;
    }
    case HclExpr::Kind::boolean: out += e.b ? "true" : "false"; break;
    case HclExpr::Kind::list: {
      out += '[';
      for (std::size_t i = 0; i < e.items.size(); ++i) {
        if (i) out += ", ";
        print_expr(out, e.items[i]);
      }
      out += ']';
      break;
    }
    case HclExpr::Kind::map: {
      if (e.entries.empty()) {
        out += "{}";
        break;
      }
      out += "{ ";
      for (std::size_t i = 0; i < e.entries.size(); ++i) {
        if (i) out += ", ";
        if (plain_map_key(e.entries[i].first)) {
          out += e.entries[i].first;
        } else {
          print_expr(out, HclExpr::string_lit(e.entries[i].first));
        }
        out += " = ";
        print_expr(out, e.entries[i].second);
      }
      out += " }";
      break;
    }
    case HclExpr::Kind::reference: {
      for (std::size_t i = 0; i < e.ref_path.size(); ++i) {
        if (i) out += '.';
        out += e.ref_path[i];
      }
      break;
    }
    case HclExpr::Kind::hole:
      throw Error(ErrorCode::contract_violation,
                  "cannot print a skeleton hole (id " + std::to_string(e.hole_id) + ")");
  }
}

inline void print_block(std::string& out, const Block& b, int depth) {
  std::string indent(static_cast<std::size_t>(depth) * 2, ' ');
  out += indent;
  out += b.type;
  for (const auto& l : b.labels) {
    out += " \"";
    out += l;
    out += '"';
  }
  out += " {\n";
  std::string inner(static_cast<std::size_t>(depth + 1) * 2, ' ');
  for (const auto& [name, value] : b.attributes) {
    out += inner;
    out += name;
    out += " = ";
    print_expr(out, value);
    out += '\n';
  }
  for (const auto& nested : b.nested) print_block(out, nested, depth + 1);
  out += indent;
  out += "}\n";
}

}  // namespace detail

/// Canonical text: two-space indent, one attribute per line in stored order,
/// nested blocks after attributes, one blank line between top-level blocks.
/// parse(print(p)) == p; printing already-canonical text is byte-stable.
inline std::string print(const HclProgram& prog) {
  std::string out;
  for (std::size_t i = 0; i < prog.blocks.size(); ++i) {
    if (i) out += '\n';
    detail::print_block(out, prog.blocks[i], 0);
  }
  return out;
}

}  // namespace iacforge::hcl
