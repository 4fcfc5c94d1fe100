#pragma once

// Tolerant tokenizer and recursive-descent parser for the Python 3 subset the
// detectors need. Dataset snippets are often single functions or truncated
// fragments, so statements that fail to parse become Opaque nodes instead of
// aborting the whole tree (unless strict mode is requested).

#include <symreview/error.hpp>

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <cstring>
#include <initializer_list>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace symreview::syntax {

/// line is 1-based, col is a 0-based byte offset within the line.
struct Position {
  std::size_t line = 1;
  std::size_t col = 0;

  auto operator<=>(const Position&) const = default;
};

/// Half-open source range [begin, end).
struct Span {
  Position begin;
  Position end;

  bool contains(const Span& other) const { return begin <= other.begin && other.end <= end; }
  bool operator==(const Span&) const = default;
};

enum class TokenKind { Name, Number, String, Op, Newline, Indent, Dedent, EndOfFile, Error };

struct Token {
  TokenKind kind = TokenKind::Error;
  std::string text;
  Span span;
};

namespace detail {

inline bool is_name_start(unsigned char c) { return c == '_' || std::isalpha(c) || c >= 0x80; }
inline bool is_name_char(unsigned char c) { return is_name_start(c) || std::isdigit(c); }

inline bool is_string_prefix(std::string_view word) {
  if (word.size() > 2) return false;
  std::string lower;
  for (char c : word) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  return lower == "r" || lower == "u" || lower == "b" || lower == "f" || lower == "br" || lower == "rb" ||
         lower == "fr" || lower == "rf";
}

/// Rejects input that is not plausibly source text: invalid UTF-8, NUL bytes,
/// or C0 control characters other than tab, newline, carriage return, form feed
/// and vertical tab.
inline bool looks_like_text(std::string_view text) {
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (c < 0x80) {
      if (c < 0x20 && c != '\t' && c != '\n' && c != '\r' && c != '\f' && c != '\v') return false;
      if (c == 0x7F) return false;
      ++i;
      continue;
    }
    std::size_t extra = 0;
    if ((c & 0xE0) == 0xC0 && c >= 0xC2) extra = 1;
    else if ((c & 0xF0) == 0xE0) extra = 2;
    else if ((c & 0xF8) == 0xF0 && c <= 0xF4) extra = 3;
    else return false;
    if (i + extra >= text.size()) return false;
    for (std::size_t k = 1; k <= extra; ++k) {
      if ((static_cast<unsigned char>(text[i + k]) & 0xC0) != 0x80) return false;
    }
    i += extra + 1;
  }
  return true;
}

}  // namespace detail

class Lexer {
 public:
  explicit Lexer(std::string_view source) : src_(source) {}

  std::vector<Token> run() {
    if (!detail::looks_like_text(src_)) throw ParseError("input is not source text (binary or invalid UTF-8)");
    indents_.assign(1, 0);
    while (true) {
      if (at_line_start_ && depth_ == 0) {
        if (!handle_indentation()) continue;
      }
      if (pos_ >= src_.size()) break;
      const char c = src_[pos_];
      if (c == ' ' || c == '\t' || c == '\f' || c == '\v') {
        advance();
      } else if (c == '#') {
        while (pos_ < src_.size() && src_[pos_] != '\n' && src_[pos_] != '\r') advance();
      } else if (c == '\\' && is_newline_at(pos_ + 1)) {
        advance();
        consume_newline();
      } else if (c == '\n' || c == '\r') {
        if (depth_ == 0) emit_at(TokenKind::Newline, "\n", here(), here());
        consume_newline();
        at_line_start_ = depth_ == 0;
      } else if (detail::is_name_start(static_cast<unsigned char>(c))) {
        lex_name_or_prefixed_string();
      } else if (std::isdigit(static_cast<unsigned char>(c)) ||
                 (c == '.' && pos_ + 1 < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
        lex_number();
      } else if (c == '"' || c == '\'') {
        lex_string(pos_, here());
      } else {
        lex_operator();
      }
    }
    const Position end = here();
    if (!tokens_.empty() && tokens_.back().kind != TokenKind::Newline && tokens_.back().kind != TokenKind::Dedent &&
        tokens_.back().kind != TokenKind::Indent) {
      emit_at(TokenKind::Newline, "\n", end, end);
    }
    while (indents_.size() > 1) {
      indents_.pop_back();
      emit_at(TokenKind::Dedent, "", end, end);
    }
    emit_at(TokenKind::EndOfFile, "", end, end);
    return std::move(tokens_);
  }

 private:
  Position here() const { return {line_, col_}; }

  void advance() {
    ++pos_;
    ++col_;
  }

  bool is_newline_at(std::size_t p) const { return p < src_.size() && (src_[p] == '\n' || src_[p] == '\r'); }

  void consume_newline() {
    if (src_[pos_] == '\r' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '\n') ++pos_;
    ++pos_;
    ++line_;
    col_ = 0;
  }

  void emit_at(TokenKind kind, std::string text, Position begin, Position end) {
    tokens_.push_back(Token{kind, std::move(text), Span{begin, end}});
  }

  void emit_from(TokenKind kind, std::size_t start, Position begin) {
    emit_at(kind, std::string(src_.substr(start, pos_ - start)), begin, here());
  }

  // Returns false when the line was blank or comment-only and has been skipped.
  bool handle_indentation() {
    std::size_t width = 0;
    while (pos_ < src_.size()) {
      const char c = src_[pos_];
      if (c == ' ') width += 1;
      else if (c == '\t') width = (width / 8 + 1) * 8;
      else if (c == '\f') width = 0;
      else break;
      advance();
    }
    if (pos_ >= src_.size()) {
      at_line_start_ = false;
      return true;
    }
    const char c = src_[pos_];
    if (c == '#' || c == '\n' || c == '\r' || (c == '\\' && is_newline_at(pos_ + 1))) {
      while (pos_ < src_.size() && src_[pos_] != '\n' && src_[pos_] != '\r') advance();
      if (pos_ < src_.size()) consume_newline();
      return false;
    }
    at_line_start_ = false;
    const Position p = here();
    if (width > indents_.back()) {
      indents_.push_back(width);
      emit_at(TokenKind::Indent, "", p, p);
    } else {
      while (indents_.size() > 1 && width < indents_.back()) {
        indents_.pop_back();
        emit_at(TokenKind::Dedent, "", p, p);
      }
      // An inconsistent dedent keeps the enclosing level; the parser sees the
      // line as part of that block.
    }
    return true;
  }

  void lex_name_or_prefixed_string() {
    const std::size_t start = pos_;
    const Position begin = here();
    while (pos_ < src_.size() && detail::is_name_char(static_cast<unsigned char>(src_[pos_]))) advance();
    const auto word = src_.substr(start, pos_ - start);
    if (pos_ < src_.size() && (src_[pos_] == '"' || src_[pos_] == '\'') && detail::is_string_prefix(word)) {
      lex_string(start, begin);
      return;
    }
    emit_from(TokenKind::Name, start, begin);
  }

  void lex_number() {
    const std::size_t start = pos_;
    const Position begin = here();
    auto digits = [&](auto pred) {
      while (pos_ < src_.size() && (pred(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) advance();
    };
    auto is_dec = [](unsigned char ch) { return std::isdigit(ch) != 0; };
    if (src_[pos_] == '0' && pos_ + 1 < src_.size() && src_[pos_ + 1] != '\0' &&
        std::strchr("xXoObB", src_[pos_ + 1]) != nullptr) {
      advance();
      advance();
      digits([](unsigned char ch) { return std::isxdigit(ch) != 0; });
    } else {
      digits(is_dec);
      if (pos_ < src_.size() && src_[pos_] == '.') {
        advance();
        digits(is_dec);
      }
      if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
        const std::size_t save = pos_;
        const std::size_t save_col = col_;
        advance();
        if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) advance();
        if (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
          digits(is_dec);
        } else {
          pos_ = save;
          col_ = save_col;
        }
      }
    }
    if (pos_ < src_.size() && (src_[pos_] == 'j' || src_[pos_] == 'J' || src_[pos_] == 'l' || src_[pos_] == 'L')) {
      advance();
    }
    emit_from(TokenKind::Number, start, begin);
  }

  // pos_ is at the opening quote; start/begin cover any prefix already read.
  void lex_string(std::size_t start, Position begin) {
    const char quote = src_[pos_];
    const bool triple = pos_ + 2 < src_.size() && src_[pos_ + 1] == quote && src_[pos_ + 2] == quote;
    const std::size_t delim = triple ? 3 : 1;
    for (std::size_t k = 0; k < delim; ++k) advance();
    while (pos_ < src_.size()) {
      const char c = src_[pos_];
      if (c == '\\') {
        advance();
        if (pos_ < src_.size()) {
          if (is_newline_at(pos_)) consume_newline();
          else advance();
        }
        continue;
      }
      if (c == '\n' || c == '\r') {
        if (!triple) {
          // Unterminated single-line string.
          emit_from(TokenKind::Error, start, begin);
          return;
        }
        consume_newline();
        continue;
      }
      if (c == quote) {
        if (!triple) {
          advance();
          emit_from(TokenKind::String, start, begin);
          return;
        }
        if (pos_ + 2 < src_.size() && src_[pos_ + 1] == quote && src_[pos_ + 2] == quote) {
          advance();
          advance();
          advance();
          emit_from(TokenKind::String, start, begin);
          return;
        }
      }
      advance();
    }
    emit_from(TokenKind::Error, start, begin);
  }

  void lex_operator() {
    static constexpr std::string_view kThree[] = {"**=", "//=", ">>=", "<<=", "..."};
    static constexpr std::string_view kTwo[] = {"**", "//", "==", "!=", "<=", ">=", "->", "+=", "-=", "*=", "/=",
                                                "%=", "&=", "|=", "^=", "@=", ":=", "<<", ">>", "<>"};
    static constexpr std::string_view kOne = "+-*/%@&|^~<>()[]{},:;.=";
    const std::size_t start = pos_;
    const Position begin = here();
    const auto rest = src_.substr(pos_);
    for (auto op : kThree) {
      if (rest.starts_with(op)) {
        for (std::size_t k = 0; k < op.size(); ++k) advance();
        emit_from(TokenKind::Op, start, begin);
        return;
      }
    }
    for (auto op : kTwo) {
      if (rest.starts_with(op)) {
        advance();
        advance();
        emit_from(TokenKind::Op, start, begin);
        return;
      }
    }
    const char c = src_[pos_];
    if (kOne.find(c) != std::string_view::npos) {
      advance();
      if (c == '(' || c == '[' || c == '{') ++depth_;
      if ((c == ')' || c == ']' || c == '}') && depth_ > 0) --depth_;
      emit_from(TokenKind::Op, start, begin);
      return;
    }
    // Unknown character (e.g. '$', '?', '!'): one UTF-8 sequence as an error token.
    advance();
    while (pos_ < src_.size() && (static_cast<unsigned char>(src_[pos_]) & 0xC0) == 0x80) advance();
    emit_from(TokenKind::Error, start, begin);
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::size_t col_ = 0;
  int depth_ = 0;
  bool at_line_start_ = true;
  std::vector<std::size_t> indents_;
  std::vector<Token> tokens_;
};

inline std::vector<Token> tokenize(std::string_view source) { return Lexer(source).run(); }

// ---------------------------------------------------------------------------
// Tree
// ---------------------------------------------------------------------------

enum class NodeKind {
  Module,
  Block,
  FunctionDef,
  ClassDef,
  Decorator,
  Parameter,
  If,
  For,
  While,
  Try,
  ExceptHandler,
  With,
  WithItem,
  Return,
  Raise,
  Break,
  Continue,
  Pass,
  Assign,
  AugAssign,
  AnnAssign,
  ExprStmt,
  Import,
  Global,
  Nonlocal,
  Delete,
  Assert,
  Opaque,
  // expressions
  Name,
  Constant,
  Call,
  Keyword,
  Attribute,
  Subscript,
  Slice,
  List,
  Tuple,
  Dict,
  Set,
  DictEntry,
  Comprehension,
  ComprehensionFor,
  Operation,
  Conditional,
  Lambda,
  Starred,
  Yield,
  Await,
  NamedExpr,
};

/// Position of a child relative to its parent.
enum class Role {
  None,
  Body,
  OrElse,
  Finally,
  Handler,
  Test,
  Target,
  Value,
  Default,
  Annotation,
  Returns,
  Callee,
  Argument,
  Operand,
  Index,
  Type,
  Element,
  Key,
  Iterable,
  Condition,
  Base,
  Decorator,
  Item,
  Cause,
  Message,
  Parameter,
};

enum class ConstantKind : std::uint8_t { None, String, Number, Keyword, Ellipsis };
enum class ParameterKind : std::uint8_t { Plain, VarArgs, KwArgs };

struct Node {
  NodeKind kind = NodeKind::Opaque;
  Role role = Role::None;
  Span span;
  // Identifier for Name/FunctionDef/ClassDef/Parameter/Attribute/Keyword,
  // operator for Operation/AugAssign, literal text for Constant, handler
  // binding for ExceptHandler, comprehension flavour for Comprehension.
  std::string text;
  ConstantKind constant = ConstantKind::None;
  ParameterKind parameter = ParameterKind::Plain;
  bool is_async = false;
  std::vector<Node> children;

  const Node* child(Role r) const {
    for (const auto& c : children)
      if (c.role == r) return &c;
    return nullptr;
  }

  std::vector<const Node*> children_with(Role r) const {
    std::vector<const Node*> out;
    for (const auto& c : children)
      if (c.role == r) out.push_back(&c);
    return out;
  }

  bool has_default() const { return kind == NodeKind::Parameter && child(Role::Default) != nullptr; }
};

inline bool is_statement(NodeKind kind) {
  return kind >= NodeKind::FunctionDef && kind <= NodeKind::Opaque && kind != NodeKind::Decorator &&
         kind != NodeKind::Parameter && kind != NodeKind::ExceptHandler && kind != NodeKind::WithItem;
}

/// Pre-order traversal. The visitor returns false to skip a node's children.
inline void walk(const Node& node, const std::function<bool(const Node&)>& visit) {
  if (!visit(node)) return;
  for (const auto& c : node.children) walk(c, visit);
}

struct SyntaxTree {
  Node root;
  std::vector<std::string> lines;
  std::vector<Span> opaque_regions;

  /// Source text of a 1-based line, or empty when out of range.
  std::string_view line_text(std::size_t line) const {
    return line >= 1 && line <= lines.size() ? std::string_view(lines[line - 1]) : std::string_view();
  }
};

enum class ParseMode { Tolerant, Strict };

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

namespace detail {

inline bool is_keyword(std::string_view word) {
  static constexpr std::string_view kKeywords[] = {
      "False", "None",   "True",    "and",      "as",   "assert", "async", "await",  "break",
      "class", "continue", "def",   "del",      "elif", "else",   "except", "finally", "for",
      "from",  "global", "if",      "import",   "in",   "is",     "lambda", "nonlocal", "not",
      "or",    "pass",   "raise",   "return",   "try",  "while",  "with",  "yield"};
  return std::find(std::begin(kKeywords), std::end(kKeywords), word) != std::end(kKeywords);
}

inline std::vector<std::string> split_lines(std::string_view source) {
  std::vector<std::string> lines;
  std::string current;
  for (std::size_t i = 0; i < source.size(); ++i) {
    const char c = source[i];
    if (c == '\r' || c == '\n') {
      if (c == '\r' && i + 1 < source.size() && source[i + 1] == '\n') ++i;
      lines.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  if (!current.empty() || lines.empty()) lines.push_back(std::move(current));
  if (source.empty()) lines.clear();
  return lines;
}

struct SyntaxFailure {
  std::size_t line;
  std::string message;
};

}  // namespace detail

class Parser {
 public:
  Parser(std::vector<Token> tokens, ParseMode mode) : tokens_(std::move(tokens)), mode_(mode) {}

  Node parse_module(std::vector<Span>& opaque_regions) {
    opaque_ = &opaque_regions;
    Node module;
    module.kind = NodeKind::Module;
    while (!at(TokenKind::EndOfFile)) {
      if (at(TokenKind::Newline)) {
        ++pos_;
        continue;
      }
      parse_statement_into(module.children, Role::None);
    }
    if (!module.children.empty()) {
      module.span = {module.children.front().span.begin, module.children.back().span.end};
    }
    return module;
  }

 private:
  using Failure = detail::SyntaxFailure;

  // -- token helpers -------------------------------------------------------

  const Token& peek(std::size_t ahead = 0) const {
    const std::size_t i = std::min(pos_ + ahead, tokens_.size() - 1);
    return tokens_[i];
  }

  bool at(TokenKind kind) const { return peek().kind == kind; }
  bool at_op(std::string_view op, std::size_t ahead = 0) const {
    return peek(ahead).kind == TokenKind::Op && peek(ahead).text == op;
  }
  bool at_kw(std::string_view kw, std::size_t ahead = 0) const {
    return peek(ahead).kind == TokenKind::Name && peek(ahead).text == kw;
  }

  const Token& take() {
    const Token& t = tokens_[pos_];
    if (t.kind != TokenKind::EndOfFile) ++pos_;
    if (t.kind != TokenKind::Newline && t.kind != TokenKind::Indent && t.kind != TokenKind::Dedent &&
        t.kind != TokenKind::EndOfFile) {
      last_end_ = t.span.end;
    }
    return t;
  }

  [[noreturn]] void fail(const std::string& message) const { throw Failure{peek().span.begin.line, message}; }

  const Token& expect_op(std::string_view op) {
    if (!at_op(op)) fail("expected '" + std::string(op) + "'");
    return take();
  }

  const Token& expect_kw(std::string_view kw) {
    if (!at_kw(kw)) fail("expected '" + std::string(kw) + "'");
    return take();
  }

  const Token& expect_name() {
    if (!at(TokenKind::Name) || detail::is_keyword(peek().text)) fail("expected identifier");
    return take();
  }

  Node start(NodeKind kind, Role role = Role::None) const {
    Node n;
    n.kind = kind;
    n.role = role;
    n.span.begin = peek().span.begin;
    return n;
  }

  Node finish(Node n) const {
    n.span.end = last_end_;
    return n;
  }

  static Node with_role(Node n, Role role) {
    n.role = role;
    return n;
  }

  // -- statements ----------------------------------------------------------

  void parse_statement_into(std::vector<Node>& out, Role role) {
    const std::size_t save = pos_;
    const Position save_end = last_end_;
    const std::size_t size_before = out.size();
    try {
      parse_statement(out, role);
    } catch (const Failure& f) {
      if (mode_ == ParseMode::Strict) throw ParseError(f.message, f.line);
      out.resize(size_before);
      pos_ = save;
      last_end_ = save_end;
      out.push_back(recover(role));
    }
  }

  // Skips the rest of the logical line plus any indented block that follows.
  Node recover(Role role) {
    Node n = start(NodeKind::Opaque, role);
    const std::size_t first = pos_;
    auto skip_block = [&] {
      int level = 0;
      do {
        if (at(TokenKind::Indent)) ++level;
        else if (at(TokenKind::Dedent)) --level;
        else if (at(TokenKind::EndOfFile)) break;
        take();
      } while (level > 0);
    };
    if (at(TokenKind::Indent)) {
      skip_block();
    } else {
      while (!at(TokenKind::Newline) && !at(TokenKind::EndOfFile) && !at(TokenKind::Dedent)) take();
      if (at(TokenKind::Newline)) take();
      if (at(TokenKind::Indent)) skip_block();
    }
    if (pos_ == first && !at(TokenKind::EndOfFile)) take();
    n = finish(std::move(n));
    if (n.span.end < n.span.begin) n.span.end = n.span.begin;
    opaque_->push_back(n.span);
    return n;
  }

  void parse_statement(std::vector<Node>& out, Role role) {
    if (at(TokenKind::Indent)) fail("unexpected indent");
    if (at(TokenKind::Dedent)) fail("unexpected dedent");
    if (at_op("@")) {
      out.push_back(with_role(parse_decorated(), role));
      return;
    }
    if (at(TokenKind::Name)) {
      const auto& word = peek().text;
      if (word == "def") return out.push_back(with_role(parse_function({}, start(NodeKind::FunctionDef)), role));
      if (word == "class") return out.push_back(with_role(parse_class({}, start(NodeKind::ClassDef)), role));
      if (word == "if") return out.push_back(with_role(parse_if(), role));
      if (word == "while") return out.push_back(with_role(parse_while(), role));
      if (word == "for") return out.push_back(with_role(parse_for(false), role));
      if (word == "try") return out.push_back(with_role(parse_try(), role));
      if (word == "with") return out.push_back(with_role(parse_with(false), role));
      if (word == "async") {
        if (at_kw("def", 1)) {
          Node n = start(NodeKind::FunctionDef);
          take();
          return out.push_back(with_role(parse_function({}, std::move(n), true), role));
        }
        if (at_kw("for", 1)) {
          const Position begin = peek().span.begin;
          take();
          Node n = parse_for(true);
          n.span.begin = begin;
          return out.push_back(with_role(std::move(n), role));
        }
        if (at_kw("with", 1)) {
          const Position begin = peek().span.begin;
          take();
          Node n = parse_with(true);
          n.span.begin = begin;
          return out.push_back(with_role(std::move(n), role));
        }
      }
    }
    parse_simple_statements(out, role);
  }

  void parse_simple_statements(std::vector<Node>& out, Role role) {
    out.push_back(with_role(parse_small_statement(), role));
    while (at_op(";")) {
      take();
      if (at(TokenKind::Newline) || at(TokenKind::EndOfFile)) break;
      out.push_back(with_role(parse_small_statement(), role));
    }
    if (at(TokenKind::Newline)) take();
    else if (!at(TokenKind::EndOfFile)) fail("expected end of statement");
  }

  Node parse_small_statement() {
    if (at(TokenKind::Name)) {
      const std::string word = peek().text;
      if (word == "pass" || word == "break" || word == "continue") {
        Node n = start(word == "pass" ? NodeKind::Pass : word == "break" ? NodeKind::Break : NodeKind::Continue);
        take();
        return finish(std::move(n));
      }
      if (word == "return") {
        Node n = start(NodeKind::Return);
        take();
        if (!at_statement_end()) n.children.push_back(with_role(parse_star_expressions(), Role::Value));
        return finish(std::move(n));
      }
      if (word == "raise") {
        Node n = start(NodeKind::Raise);
        take();
        if (!at_statement_end()) {
          n.children.push_back(with_role(parse_test(), Role::Value));
          if (at_kw("from")) {
            take();
            n.children.push_back(with_role(parse_test(), Role::Cause));
          }
        }
        return finish(std::move(n));
      }
      if (word == "global" || word == "nonlocal") {
        Node n = start(word == "global" ? NodeKind::Global : NodeKind::Nonlocal);
        take();
        n.children.push_back(parse_name(Role::Target));
        while (at_op(",")) {
          take();
          n.children.push_back(parse_name(Role::Target));
        }
        return finish(std::move(n));
      }
      if (word == "del") {
        Node n = start(NodeKind::Delete);
        take();
        n.children.push_back(with_role(parse_expression_list(), Role::Target));
        return finish(std::move(n));
      }
      if (word == "assert") {
        Node n = start(NodeKind::Assert);
        take();
        n.children.push_back(with_role(parse_test(), Role::Test));
        if (at_op(",")) {
          take();
          n.children.push_back(with_role(parse_test(), Role::Message));
        }
        return finish(std::move(n));
      }
      if (word == "import" || word == "from") return parse_import();
    }
    return parse_expression_statement();
  }

  bool at_statement_end() const {
    return at(TokenKind::Newline) || at(TokenKind::EndOfFile) || at_op(";") || at(TokenKind::Dedent);
  }

  Node parse_import() {
    Node n = start(NodeKind::Import);
    std::string text;
    while (!at_statement_end()) {
      if (at(TokenKind::Error) || at(TokenKind::String) || at(TokenKind::Number)) fail("malformed import");
      if (!text.empty() && peek().kind == TokenKind::Name && (std::isalnum(static_cast<unsigned char>(text.back())) ||
                                                              text.back() == '_')) {
        text += ' ';
      }
      text += take().text;
    }
    n.text = std::move(text);
    return finish(std::move(n));
  }

  Node parse_expression_statement() {
    const Position begin = peek().span.begin;
    Node first = at_kw("yield") ? parse_yield() : parse_star_expressions();

    if (at_op("=")) {
      Node n;
      n.kind = NodeKind::Assign;
      n.span.begin = begin;
      std::vector<Node> parts;
      parts.push_back(std::move(first));
      while (at_op("=")) {
        take();
        parts.push_back(at_kw("yield") ? parse_yield() : parse_star_expressions());
      }
      for (std::size_t i = 0; i + 1 < parts.size(); ++i) n.children.push_back(with_role(std::move(parts[i]), Role::Target));
      n.children.push_back(with_role(std::move(parts.back()), Role::Value));
      return finish(std::move(n));
    }
    if (peek().kind == TokenKind::Op && peek().text.size() >= 2 && peek().text.back() == '=' &&
        peek().text != "==" && peek().text != "!=" && peek().text != "<=" && peek().text != ">=") {
      Node n;
      n.kind = NodeKind::AugAssign;
      n.span.begin = begin;
      n.text = take().text;
      n.children.push_back(with_role(std::move(first), Role::Target));
      n.children.push_back(with_role(at_kw("yield") ? parse_yield() : parse_star_expressions(), Role::Value));
      return finish(std::move(n));
    }
    if (at_op(":")) {
      Node n;
      n.kind = NodeKind::AnnAssign;
      n.span.begin = begin;
      take();
      n.children.push_back(with_role(std::move(first), Role::Target));
      n.children.push_back(with_role(parse_test(), Role::Annotation));
      if (at_op("=")) {
        take();
        n.children.push_back(with_role(at_kw("yield") ? parse_yield() : parse_star_expressions(), Role::Value));
      }
      return finish(std::move(n));
    }
    Node n;
    n.kind = NodeKind::ExprStmt;
    n.span.begin = begin;
    n.children.push_back(with_role(std::move(first), Role::Value));
    return finish(std::move(n));
  }

  // Suite after ':' - either an indented block or simple statements on the same line.
  Node parse_suite(Role role) {
    Node block;
    block.kind = NodeKind::Block;
    block.role = role;
    if (at(TokenKind::Newline)) {
      take();
      if (!at(TokenKind::Indent)) fail("expected an indented block");
      take();
      while (!at(TokenKind::Dedent) && !at(TokenKind::EndOfFile)) {
        if (at(TokenKind::Newline)) {
          take();
          continue;
        }
        parse_statement_into(block.children, Role::None);
      }
      if (at(TokenKind::Dedent)) take();
    } else {
      parse_simple_statements(block.children, Role::None);
    }
    if (block.children.empty()) fail("empty block");
    block.span = {block.children.front().span.begin, block.children.back().span.end};
    return block;
  }

  Node parse_decorated() {
    Node first = start(NodeKind::Decorator);
    std::vector<Node> decorators;
    while (at_op("@")) {
      Node d = start(NodeKind::Decorator, Role::Decorator);
      take();
      d.children.push_back(with_role(parse_named_test(), Role::Value));
      d = finish(std::move(d));
      if (!at(TokenKind::Newline)) fail("expected newline after decorator");
      take();
      decorators.push_back(std::move(d));
    }
    Node target;
    target.span.begin = first.span.begin;
    if (at_kw("def")) return parse_function(std::move(decorators), std::move(target));
    if (at_kw("class")) {
      target.kind = NodeKind::ClassDef;
      return parse_class(std::move(decorators), std::move(target));
    }
    if (at_kw("async") && at_kw("def", 1)) {
      take();
      return parse_function(std::move(decorators), std::move(target), true);
    }
    fail("decorator must precede def or class");
  }

  Node parse_function(std::vector<Node> decorators, Node n, bool is_async = false) {
    n.kind = NodeKind::FunctionDef;
    n.is_async = is_async;
    expect_kw("def");
    n.text = expect_name().text;
    for (auto& d : decorators) n.children.push_back(std::move(d));
    expect_op("(");
    parse_parameters(n.children, ")");
    expect_op(")");
    if (at_op("->")) {
      take();
      n.children.push_back(with_role(parse_test(), Role::Returns));
    }
    expect_op(":");
    n.children.push_back(parse_suite(Role::Body));
    return finish(std::move(n));
  }

  void parse_parameters(std::vector<Node>& out, std::string_view closer) {
    const bool annotations = closer == ")";
    while (!at_op(closer)) {
      if (at_op("/")) {
        take();
      } else if (at_op("*") && (at_op(",", 1) || at_op(closer, 1))) {
        take();  // keyword-only marker
      } else {
        Node p = start(NodeKind::Parameter, Role::Parameter);
        if (at_op("*")) {
          take();
          p.parameter = ParameterKind::VarArgs;
        } else if (at_op("**")) {
          take();
          p.parameter = ParameterKind::KwArgs;
        }
        p.text = expect_name().text;
        if (annotations && at_op(":")) {
          take();
          p.children.push_back(with_role(parse_test(), Role::Annotation));
        }
        if (at_op("=")) {
          take();
          p.children.push_back(with_role(parse_test(), Role::Default));
        }
        out.push_back(finish(std::move(p)));
      }
      if (!at_op(",")) break;
      take();
    }
  }

  Node parse_class(std::vector<Node> decorators, Node n) {
    n.kind = NodeKind::ClassDef;
    expect_kw("class");
    n.text = expect_name().text;
    for (auto& d : decorators) n.children.push_back(std::move(d));
    if (at_op("(")) {
      take();
      parse_arguments(n.children, Role::Base);
      expect_op(")");
    }
    expect_op(":");
    n.children.push_back(parse_suite(Role::Body));
    return finish(std::move(n));
  }

  Node parse_if() {
    Node n = start(NodeKind::If);
    take();  // 'if' or 'elif'
    n.children.push_back(with_role(parse_named_test(), Role::Test));
    expect_op(":");
    n.children.push_back(parse_suite(Role::Body));
    if (at_kw("elif")) {
      Node orelse;
      orelse.kind = NodeKind::Block;
      orelse.role = Role::OrElse;
      orelse.children.push_back(parse_if());
      orelse.span = orelse.children.front().span;
      n.children.push_back(std::move(orelse));
    } else if (at_kw("else")) {
      take();
      expect_op(":");
      n.children.push_back(parse_suite(Role::OrElse));
    }
    return finish(std::move(n));
  }

  Node parse_while() {
    Node n = start(NodeKind::While);
    take();
    n.children.push_back(with_role(parse_named_test(), Role::Test));
    expect_op(":");
    n.children.push_back(parse_suite(Role::Body));
    if (at_kw("else")) {
      take();
      expect_op(":");
      n.children.push_back(parse_suite(Role::OrElse));
    }
    return finish(std::move(n));
  }

  Node parse_for(bool is_async) {
    Node n = start(NodeKind::For);
    n.is_async = is_async;
    expect_kw("for");
    n.children.push_back(with_role(parse_target_list(), Role::Target));
    expect_kw("in");
    n.children.push_back(with_role(parse_star_expressions(), Role::Iterable));
    expect_op(":");
    n.children.push_back(parse_suite(Role::Body));
    if (at_kw("else")) {
      take();
      expect_op(":");
      n.children.push_back(parse_suite(Role::OrElse));
    }
    return finish(std::move(n));
  }

  Node parse_try() {
    Node n = start(NodeKind::Try);
    take();
    expect_op(":");
    n.children.push_back(parse_suite(Role::Body));
    bool any_clause = false;
    while (at_kw("except")) {
      any_clause = true;
      Node h = start(NodeKind::ExceptHandler, Role::Handler);
      take();
      if (at_op("*")) take();
      if (!at_op(":")) {
        h.children.push_back(with_role(parse_test(), Role::Type));
        if (at_kw("as")) {
          take();
          h.text = expect_name().text;
        } else if (at_op(",")) {
          // Python 2 form: except Type, name
          take();
          h.text = expect_name().text;
        }
      }
      expect_op(":");
      h.children.push_back(parse_suite(Role::Body));
      n.children.push_back(finish(std::move(h)));
    }
    if (at_kw("else")) {
      take();
      expect_op(":");
      n.children.push_back(parse_suite(Role::OrElse));
    }
    if (at_kw("finally")) {
      any_clause = true;
      take();
      expect_op(":");
      n.children.push_back(parse_suite(Role::Finally));
    }
    if (!any_clause) fail("try without except or finally");
    return finish(std::move(n));
  }

  Node parse_with(bool is_async) {
    Node n = start(NodeKind::With);
    n.is_async = is_async;
    expect_kw("with");
    bool parsed = false;
    if (at_op("(")) {
      // Parenthesized item list; fall back to a plain expression if it is not one.
      const std::size_t save = pos_;
      const Position save_end = last_end_;
      try {
        take();
        std::vector<Node> items;
        while (!at_op(")")) {
          items.push_back(parse_with_item());
          if (!at_op(",")) break;
          take();
        }
        expect_op(")");
        if (!at_op(":")) fail("not an item list");
        for (auto& item : items) n.children.push_back(std::move(item));
        parsed = true;
      } catch (const Failure&) {
        pos_ = save;
        last_end_ = save_end;
      }
    }
    if (!parsed) {
      n.children.push_back(parse_with_item());
      while (at_op(",")) {
        take();
        n.children.push_back(parse_with_item());
      }
    }
    expect_op(":");
    n.children.push_back(parse_suite(Role::Body));
    return finish(std::move(n));
  }

  Node parse_with_item() {
    Node item = start(NodeKind::WithItem, Role::Item);
    item.children.push_back(with_role(parse_test(), Role::Value));
    if (at_kw("as")) {
      take();
      item.children.push_back(with_role(parse_target(), Role::Target));
    }
    return finish(std::move(item));
  }

  // -- expressions ---------------------------------------------------------

  Node parse_name(Role role) {
    Node n = start(NodeKind::Name, role);
    n.text = expect_name().text;
    return finish(std::move(n));
  }

  Node make_tuple(std::vector<Node> elements, Position begin) {
    Node t;
    t.kind = NodeKind::Tuple;
    t.span.begin = begin;
    for (auto& e : elements) t.children.push_back(with_role(std::move(e), Role::Element));
    return finish(std::move(t));
  }

  bool at_expression_start() const {
    const Token& t = peek();
    switch (t.kind) {
      case TokenKind::Name:
        return !detail::is_keyword(t.text) || t.text == "None" || t.text == "True" || t.text == "False" ||
               t.text == "not" || t.text == "lambda" || t.text == "await" || t.text == "yield";
      case TokenKind::Number:
      case TokenKind::String:
        return true;
      case TokenKind::Op:
        return t.text == "(" || t.text == "[" || t.text == "{" || t.text == "-" || t.text == "+" ||
               t.text == "~" || t.text == "*" || t.text == "..." || t.text == "**";
      default:
        return false;
    }
  }

  // star_expressions: comma-separated list forming a tuple when a comma appears.
  Node parse_star_expressions() {
    const Position begin = peek().span.begin;
    Node first = parse_star_or_named();
    if (!at_op(",")) return first;
    std::vector<Node> elements;
    elements.push_back(std::move(first));
    while (at_op(",")) {
      take();
      if (!at_expression_start()) break;
      elements.push_back(parse_star_or_named());
    }
    return make_tuple(std::move(elements), begin);
  }

  Node parse_star_or_named() {
    if (at_op("*")) {
      Node n = start(NodeKind::Starred);
      take();
      n.children.push_back(with_role(parse_bitor(), Role::Value));
      return finish(std::move(n));
    }
    return parse_named_test();
  }

  // Targets of for-loops and with-items: bitwise-or expressions, possibly a tuple.
  Node parse_target_list() {
    const Position begin = peek().span.begin;
    Node first = parse_target();
    if (!at_op(",")) return first;
    std::vector<Node> elements;
    elements.push_back(std::move(first));
    while (at_op(",")) {
      take();
      if (at_kw("in") || at_op("=") || at_op(":")) break;
      elements.push_back(parse_target());
    }
    return make_tuple(std::move(elements), begin);
  }

  Node parse_target() {
    if (at_op("*")) {
      Node n = start(NodeKind::Starred);
      take();
      n.children.push_back(with_role(parse_bitor(), Role::Value));
      return finish(std::move(n));
    }
    return parse_bitor();
  }

  Node parse_expression_list() {
    const Position begin = peek().span.begin;
    Node first = parse_target();
    if (!at_op(",")) return first;
    std::vector<Node> elements;
    elements.push_back(std::move(first));
    while (at_op(",")) {
      take();
      if (!at_expression_start()) break;
      elements.push_back(parse_target());
    }
    return make_tuple(std::move(elements), begin);
  }

  Node parse_yield() {
    Node n = start(NodeKind::Yield);
    expect_kw("yield");
    if (at_kw("from")) {
      take();
      n.text = "from";
      n.children.push_back(with_role(parse_test(), Role::Value));
    } else if (at_expression_start()) {
      n.children.push_back(with_role(parse_star_expressions(), Role::Value));
    }
    return finish(std::move(n));
  }

  Node parse_named_test() {
    if (at(TokenKind::Name) && at_op(":=", 1)) {
      Node n = start(NodeKind::NamedExpr);
      n.children.push_back(parse_name(Role::Target));
      take();
      n.children.push_back(with_role(parse_test(), Role::Value));
      return finish(std::move(n));
    }
    return parse_test();
  }

  Node parse_test() {
    if (at_kw("lambda")) return parse_lambda();
    const Position begin = peek().span.begin;
    Node body = parse_or();
    if (at_kw("if")) {
      // Ternary only when an 'else' follows; otherwise leave 'if' to the caller
      // (comprehension conditions).
      const std::size_t save = pos_;
      const Position save_end = last_end_;
      try {
        take();
        Node cond = parse_or();
        expect_kw("else");
        Node orelse = parse_test();
        Node n;
        n.kind = NodeKind::Conditional;
        n.span.begin = begin;
        n.children.push_back(with_role(std::move(body), Role::Value));
        n.children.push_back(with_role(std::move(cond), Role::Test));
        n.children.push_back(with_role(std::move(orelse), Role::OrElse));
        return finish(std::move(n));
      } catch (const Failure&) {
        pos_ = save;
        last_end_ = save_end;
      }
    }
    return body;
  }

  Node parse_test_no_cond() {
    if (at_kw("lambda")) return parse_lambda();
    return parse_or();
  }

  Node parse_lambda() {
    Node n = start(NodeKind::Lambda);
    expect_kw("lambda");
    parse_parameters(n.children, ":");
    expect_op(":");
    n.children.push_back(with_role(parse_test(), Role::Body));
    return finish(std::move(n));
  }

  Node binary(Node left, std::string op, Node right) {
    Node n;
    n.kind = NodeKind::Operation;
    n.text = std::move(op);
    n.span.begin = left.span.begin;
    n.children.push_back(with_role(std::move(left), Role::Operand));
    n.children.push_back(with_role(std::move(right), Role::Operand));
    return finish(std::move(n));
  }

  Node unary(std::string op, Node operand, Position begin) {
    Node n;
    n.kind = NodeKind::Operation;
    n.text = std::move(op);
    n.span.begin = begin;
    n.children.push_back(with_role(std::move(operand), Role::Operand));
    return finish(std::move(n));
  }

  Node parse_or() {
    Node left = parse_and();
    while (at_kw("or")) {
      take();
      left = binary(std::move(left), "or", parse_and());
    }
    return left;
  }

  Node parse_and() {
    Node left = parse_not();
    while (at_kw("and")) {
      take();
      left = binary(std::move(left), "and", parse_not());
    }
    return left;
  }

  Node parse_not() {
    if (at_kw("not")) {
      const Position begin = take().span.begin;
      return unary("not", parse_not(), begin);
    }
    return parse_comparison();
  }

  Node parse_comparison() {
    Node left = parse_bitor();
    while (true) {
      std::string op;
      if (peek().kind == TokenKind::Op &&
          (peek().text == "<" || peek().text == ">" || peek().text == "==" || peek().text == ">=" ||
           peek().text == "<=" || peek().text == "!=" || peek().text == "<>")) {
        op = take().text;
      } else if (at_kw("in")) {
        take();
        op = "in";
      } else if (at_kw("not") && at_kw("in", 1)) {
        take();
        take();
        op = "not in";
      } else if (at_kw("is")) {
        take();
        op = "is";
        if (at_kw("not")) {
          take();
          op = "is not";
        }
      } else {
        break;
      }
      left = binary(std::move(left), std::move(op), parse_bitor());
    }
    return left;
  }

  template <typename Next>
  Node parse_left_assoc(std::initializer_list<std::string_view> ops, Next next) {
    Node left = (this->*next)();
    while (peek().kind == TokenKind::Op &&
           std::find(ops.begin(), ops.end(), std::string_view(peek().text)) != ops.end()) {
      std::string op = take().text;
      left = binary(std::move(left), std::move(op), (this->*next)());
    }
    return left;
  }

  Node parse_bitor() { return parse_left_assoc({"|"}, &Parser::parse_xor); }
  Node parse_xor() { return parse_left_assoc({"^"}, &Parser::parse_bitand); }
  Node parse_bitand() { return parse_left_assoc({"&"}, &Parser::parse_shift); }
  Node parse_shift() { return parse_left_assoc({"<<", ">>"}, &Parser::parse_arith); }
  Node parse_arith() { return parse_left_assoc({"+", "-"}, &Parser::parse_term); }
  Node parse_term() { return parse_left_assoc({"*", "/", "//", "%", "@"}, &Parser::parse_factor); }

  Node parse_factor() {
    if (at_op("+") || at_op("-") || at_op("~")) {
      const Token& t = take();
      const Position begin = t.span.begin;
      std::string op = t.text;
      return unary(std::move(op), parse_factor(), begin);
    }
    return parse_power();
  }

  Node parse_power() {
    Node base;
    if (at_kw("await")) {
      Node n = start(NodeKind::Await);
      take();
      n.children.push_back(with_role(parse_primary(), Role::Value));
      base = finish(std::move(n));
    } else {
      base = parse_primary();
    }
    if (at_op("**")) {
      take();
      return binary(std::move(base), "**", parse_factor());
    }
    return base;
  }

  Node parse_primary() {
    Node node = parse_atom();
    while (true) {
      if (at_op("(")) {
        Node call;
        call.kind = NodeKind::Call;
        call.span.begin = node.span.begin;
        call.children.push_back(with_role(std::move(node), Role::Callee));
        take();
        parse_arguments(call.children, Role::Argument);
        expect_op(")");
        node = finish(std::move(call));
      } else if (at_op("[")) {
        Node sub;
        sub.kind = NodeKind::Subscript;
        sub.span.begin = node.span.begin;
        sub.children.push_back(with_role(std::move(node), Role::Value));
        take();
        while (!at_op("]")) {
          sub.children.push_back(with_role(parse_slice(), Role::Index));
          if (!at_op(",")) break;
          take();
        }
        expect_op("]");
        node = finish(std::move(sub));
      } else if (at_op(".")) {
        Node attr;
        attr.kind = NodeKind::Attribute;
        attr.span.begin = node.span.begin;
        attr.children.push_back(with_role(std::move(node), Role::Value));
        take();
        attr.text = expect_name().text;
        node = finish(std::move(attr));
      } else {
        break;
      }
    }
    return node;
  }

  Node parse_slice() {
    const Position begin = peek().span.begin;
    Node lower;
    bool has_lower = false;
    if (!at_op(":")) {
      lower = at_op("*") ? parse_star_or_named() : parse_named_test();
      has_lower = true;
      if (!at_op(":")) return lower;
    }
    Node s;
    s.kind = NodeKind::Slice;
    s.span.begin = begin;
    if (has_lower) s.children.push_back(with_role(std::move(lower), Role::Operand));
    while (at_op(":")) {
      take();
      if (!at_op(":") && !at_op("]") && !at_op(",")) s.children.push_back(with_role(parse_test(), Role::Operand));
    }
    return finish(std::move(s));
  }

  void parse_arguments(std::vector<Node>& out, Role role) {
    while (!at_op(")")) {
      if (at_op("*") || at_op("**")) {
        Node n = start(NodeKind::Starred, role);
        n.text = take().text;
        n.children.push_back(with_role(parse_test(), Role::Value));
        out.push_back(finish(std::move(n)));
      } else if (at(TokenKind::Name) && at_op("=", 1)) {
        Node n = start(NodeKind::Keyword, role);
        n.text = expect_name().text;
        take();
        n.children.push_back(with_role(parse_test(), Role::Value));
        out.push_back(finish(std::move(n)));
      } else {
        const Position begin = peek().span.begin;
        Node value = parse_named_test();
        if (at_kw("for") || (at_kw("async") && at_kw("for", 1))) {
          value = parse_comprehension("gen", std::move(value), begin);
        }
        out.push_back(with_role(std::move(value), role));
      }
      if (!at_op(",")) break;
      take();
    }
  }

  Node parse_comprehension(std::string flavour, Node element, Position begin) {
    Node n;
    n.kind = NodeKind::Comprehension;
    n.text = std::move(flavour);
    n.span.begin = begin;
    n.children.push_back(with_role(std::move(element), Role::Element));
    while (at_kw("for") || (at_kw("async") && at_kw("for", 1))) {
      Node clause = start(NodeKind::ComprehensionFor, Role::Iterable);
      if (at_kw("async")) {
        take();
        clause.is_async = true;
      }
      expect_kw("for");
      clause.children.push_back(with_role(parse_target_list(), Role::Target));
      expect_kw("in");
      clause.children.push_back(with_role(parse_or(), Role::Value));
      while (at_kw("if")) {
        take();
        clause.children.push_back(with_role(parse_test_no_cond(), Role::Condition));
      }
      n.children.push_back(finish(std::move(clause)));
    }
    return finish(std::move(n));
  }

  Node parse_atom() {
    const Token& t = peek();
    switch (t.kind) {
      case TokenKind::Name: {
        if (t.text == "None" || t.text == "True" || t.text == "False") {
          Node n = start(NodeKind::Constant);
          n.constant = ConstantKind::Keyword;
          n.text = take().text;
          return finish(std::move(n));
        }
        if (detail::is_keyword(t.text)) fail("unexpected keyword '" + t.text + "'");
        Node n = start(NodeKind::Name);
        n.text = take().text;
        return finish(std::move(n));
      }
      case TokenKind::Number: {
        Node n = start(NodeKind::Constant);
        n.constant = ConstantKind::Number;
        n.text = take().text;
        return finish(std::move(n));
      }
      case TokenKind::String: {
        Node n = start(NodeKind::Constant);
        n.constant = ConstantKind::String;
        n.text = take().text;
        while (at(TokenKind::String)) n.text += " " + take().text;
        return finish(std::move(n));
      }
      case TokenKind::Op:
        if (t.text == "(") return parse_parenthesized();
        if (t.text == "[") return parse_list();
        if (t.text == "{") return parse_brace();
        if (t.text == "...") {
          Node n = start(NodeKind::Constant);
          n.constant = ConstantKind::Ellipsis;
          n.text = take().text;
          return finish(std::move(n));
        }
        break;
      default:
        break;
    }
    fail("unexpected token '" + t.text + "'");
  }

  Node parse_parenthesized() {
    const Position begin = peek().span.begin;
    take();
    if (at_op(")")) {
      take();
      Node t;
      t.kind = NodeKind::Tuple;
      t.span.begin = begin;
      return finish(std::move(t));
    }
    if (at_kw("yield")) {
      Node y = parse_yield();
      expect_op(")");
      y.span.begin = begin;
      return finish(std::move(y));
    }
    Node first = parse_star_or_named();
    if (at_kw("for") || (at_kw("async") && at_kw("for", 1))) {
      Node gen = parse_comprehension("gen", std::move(first), begin);
      expect_op(")");
      return finish(std::move(gen));
    }
    if (!at_op(",")) {
      expect_op(")");
      // Parentheses widen the span of the inner expression.
      first.span.begin = begin;
      return finish(std::move(first));
    }
    std::vector<Node> elements;
    elements.push_back(std::move(first));
    while (at_op(",")) {
      take();
      if (at_op(")")) break;
      elements.push_back(parse_star_or_named());
    }
    expect_op(")");
    return make_tuple(std::move(elements), begin);
  }

  Node parse_list() {
    const Position begin = peek().span.begin;
    take();
    Node list;
    list.kind = NodeKind::List;
    list.span.begin = begin;
    if (at_op("]")) {
      take();
      return finish(std::move(list));
    }
    Node first = parse_star_or_named();
    if (at_kw("for") || (at_kw("async") && at_kw("for", 1))) {
      Node comp = parse_comprehension("list", std::move(first), begin);
      expect_op("]");
      return finish(std::move(comp));
    }
    list.children.push_back(with_role(std::move(first), Role::Element));
    while (at_op(",")) {
      take();
      if (at_op("]")) break;
      list.children.push_back(with_role(parse_star_or_named(), Role::Element));
    }
    expect_op("]");
    return finish(std::move(list));
  }

  Node parse_brace() {
    const Position begin = peek().span.begin;
    take();
    Node out;
    out.span.begin = begin;
    if (at_op("}")) {
      take();
      out.kind = NodeKind::Dict;
      return finish(std::move(out));
    }
    auto parse_entry = [&]() -> Node {
      Node e = start(NodeKind::DictEntry, Role::Element);
      if (at_op("**")) {
        take();
        e.children.push_back(with_role(parse_bitor(), Role::Value));
        return finish(std::move(e));
      }
      e.children.push_back(with_role(parse_test(), Role::Key));
      expect_op(":");
      e.children.push_back(with_role(parse_test(), Role::Value));
      return finish(std::move(e));
    };

    const bool dict = at_op("**") || [&] {
      const std::size_t save = pos_;
      const Position save_end = last_end_;
      bool is_dict = false;
      try {
        parse_test();
        is_dict = at_op(":");
      } catch (const Failure&) {
      }
      pos_ = save;
      last_end_ = save_end;
      return is_dict;
    }();

    if (dict) {
      out.kind = NodeKind::Dict;
      Node first = parse_entry();
      if (at_kw("for") || (at_kw("async") && at_kw("for", 1))) {
        Node comp = parse_comprehension("dict", std::move(first), begin);
        expect_op("}");
        return finish(std::move(comp));
      }
      out.children.push_back(std::move(first));
      while (at_op(",")) {
        take();
        if (at_op("}")) break;
        out.children.push_back(parse_entry());
      }
      expect_op("}");
      return finish(std::move(out));
    }

    out.kind = NodeKind::Set;
    Node first = parse_star_or_named();
    if (at_kw("for") || (at_kw("async") && at_kw("for", 1))) {
      Node comp = parse_comprehension("set", std::move(first), begin);
      expect_op("}");
      return finish(std::move(comp));
    }
    out.children.push_back(with_role(std::move(first), Role::Element));
    while (at_op(",")) {
      take();
      if (at_op("}")) break;
      out.children.push_back(with_role(parse_star_or_named(), Role::Element));
    }
    expect_op("}");
    return finish(std::move(out));
  }

  std::vector<Token> tokens_;
  ParseMode mode_;
  std::size_t pos_ = 0;
  Position last_end_;
  std::vector<Span>* opaque_ = nullptr;
};

/// Parses Python source. Tolerant mode (the default) turns unparseable
/// statements into Opaque nodes; strict mode raises ParseError instead.
/// Input that cannot be tokenized at all (binary data) always raises.
inline SyntaxTree parse(std::string_view source, ParseMode mode = ParseMode::Tolerant) {
  SyntaxTree tree;
  tree.lines = detail::split_lines(source);
  Parser parser(tokenize(source), mode);
  tree.root = parser.parse_module(tree.opaque_regions);
  return tree;
}

}  // namespace symreview::syntax
