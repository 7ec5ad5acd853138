#include "staircase/frontend/ast.hpp"

#include "staircase/error.hpp"

#include <charconv>
#include <cstring>
#include <set>

namespace staircase::host {

namespace {

enum class Tok { Name, Number, String, Op, Newline, Indent, Dedent, End };

struct Token {
  Tok kind;
  std::string text;
  int line;
  int col;
};

class Lexer {
public:
  Lexer(std::string_view src, std::string file)
      : src_(src), file_(std::move(file)) {}

  std::vector<Token> run() {
    indents_.push_back(0);
    while (pos_ < src_.size()) {
      if (at_line_start_) {
        if (!handle_indent())
          continue;
      }
      char c = src_[pos_];
      if (c == '#') {
        while (pos_ < src_.size() && src_[pos_] != '\n')
          ++pos_;
        continue;
      }
      if (c == '\n') {
        if (depth_ == 0 && !out_.empty() && out_.back().kind != Tok::Newline)
          push(Tok::Newline, "");
        advance_newline();
        continue;
      }
      if (c == ' ' || c == '\t' || c == '\r') {
        ++pos_;
        ++col_;
        continue;
      }
      if (c == '\\' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '\n') {
        pos_ += 1;
        advance_newline();
        at_line_start_ = false;
        continue;
      }
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        std::size_t start = pos_;
        while (pos_ < src_.size() &&
               (std::isalnum(static_cast<unsigned char>(src_[pos_])) ||
                src_[pos_] == '_'))
          ++pos_;
        push_span(Tok::Name, start);
        continue;
      }
      if (std::isdigit(static_cast<unsigned char>(c)) ||
          (c == '.' && pos_ + 1 < src_.size() &&
           std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
        lex_number();
        continue;
      }
      if (c == '"' || c == '\'') {
        lex_string();
        continue;
      }
      lex_op();
    }
    if (!out_.empty() && out_.back().kind != Tok::Newline)
      push(Tok::Newline, "");
    while (indents_.size() > 1) {
      indents_.pop_back();
      push(Tok::Dedent, "");
    }
    push(Tok::End, "");
    return out_;
  }

private:
  [[noreturn]] void fail(const std::string &msg) {
    throw Error(ErrorCode::SyntaxError, msg, Location{file_, line_, col_});
  }

  void push(Tok k, std::string text) {
    out_.push_back(Token{k, std::move(text), line_, col_});
  }

  void push_span(Tok k, std::size_t start) {
    out_.push_back(Token{k, std::string(src_.substr(start, pos_ - start)), line_,
                         col_});
    col_ += static_cast<int>(pos_ - start);
  }

  void advance_newline() {
    ++pos_;
    ++line_;
    col_ = 0;
    at_line_start_ = depth_ == 0;
  }

  // Returns false if the line was blank or a comment (already consumed).
  bool handle_indent() {
    int width = 0;
    std::size_t p = pos_;
    while (p < src_.size() && (src_[p] == ' ' || src_[p] == '\t')) {
      width = src_[p] == '\t' ? (width / 8 + 1) * 8 : width + 1;
      ++p;
    }
    if (p >= src_.size() || src_[p] == '\n' || src_[p] == '#' ||
        src_[p] == '\r') {
      pos_ = p;
      col_ = width;
      while (pos_ < src_.size() && src_[pos_] != '\n')
        ++pos_;
      if (pos_ < src_.size())
        advance_newline();
      else
        at_line_start_ = false;
      return false;
    }
    pos_ = p;
    col_ = width;
    at_line_start_ = false;
    if (width > indents_.back()) {
      indents_.push_back(width);
      push(Tok::Indent, "");
    } else {
      while (width < indents_.back()) {
        indents_.pop_back();
        push(Tok::Dedent, "");
      }
      if (width != indents_.back())
        fail("unindent does not match any outer indentation level");
    }
    return true;
  }

  void lex_number() {
    std::size_t start = pos_;
    bool is_float = false;
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '_') {
        ++pos_;
      } else if (c == '.') {
        is_float = true;
        ++pos_;
      } else if ((c == 'e' || c == 'E')) {
        is_float = true;
        ++pos_;
        if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-'))
          ++pos_;
      } else {
        break;
      }
    }
    (void)is_float;
    push_span(Tok::Number, start);
  }

  void lex_string() {
    char quote = src_[pos_];
    std::size_t start = pos_;
    ++pos_;
    std::string value;
    while (pos_ < src_.size() && src_[pos_] != quote) {
      if (src_[pos_] == '\n')
        fail("unterminated string literal");
      if (src_[pos_] == '\\' && pos_ + 1 < src_.size()) {
        char e = src_[pos_ + 1];
        value += e == 'n' ? '\n' : e == 't' ? '\t' : e;
        pos_ += 2;
        continue;
      }
      value += src_[pos_++];
    }
    if (pos_ >= src_.size())
      fail("unterminated string literal");
    ++pos_;
    out_.push_back(Token{Tok::String, value, line_, col_});
    col_ += static_cast<int>(pos_ - start);
  }

  void lex_op() {
    static const char *three[] = {"**=", "//=", "..."};
    static const char *two[] = {"==", "!=", "<=", ">=", "+=", "-=", "*=",
                                "/=", "%=", "->", "//", "**"};
    for (const char *t : three)
      if (src_.substr(pos_, 3) == t) {
        std::size_t s = pos_;
        pos_ += 3;
        push_span(Tok::Op, s);
        return;
      }
    for (const char *t : two)
      if (src_.substr(pos_, 2) == t) {
        std::size_t s = pos_;
        pos_ += 2;
        push_span(Tok::Op, s);
        return;
      }
    char c = src_[pos_];
    if (!std::strchr("()[]{},:.;@=+-*/%<>~", c))
      fail(std::string("unexpected character '") + c + "'");
    if (c == '(' || c == '[' || c == '{')
      ++depth_;
    if (c == ')' || c == ']' || c == '}') {
      if (depth_ == 0)
        fail(std::string("unmatched '") + c + "'");
      --depth_;
    }
    std::size_t s = pos_++;
    push_span(Tok::Op, s);
  }

  std::string_view src_;
  std::string file_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 0;
  int depth_ = 0;
  bool at_line_start_ = true;
  std::vector<int> indents_;
  std::vector<Token> out_;
};

const std::set<std::string, std::less<>> kKeywords{
    "def",   "class", "if",     "elif",   "else",   "for",    "in",
    "while", "return", "pass",  "break",  "continue", "with", "try",
    "except", "finally", "import", "from", "global", "nonlocal", "lambda",
    "and",   "or",    "not",    "is",     "True",   "False",  "None",
    "as",    "yield", "raise",  "assert", "del"};

class HostParser {
public:
  HostParser(std::vector<Token> toks, std::string file)
      : toks_(std::move(toks)), file_(std::move(file)) {}

  Module run() {
    Module m;
    m.filename = file_;
    while (peek().kind != Tok::End) {
      if (peek().kind == Tok::Newline) {
        ++pos_;
        continue;
      }
      parse_stmt(m.body);
    }
    return m;
  }

private:
  const Token &peek(std::size_t k = 0) const {
    return toks_[std::min(pos_ + k, toks_.size() - 1)];
  }
  const Token &next() { return toks_[std::min(pos_++, toks_.size() - 1)]; }

  [[noreturn]] void fail(const std::string &msg, const Token &t) {
    throw Error(ErrorCode::SyntaxError, msg, Location{file_, t.line, t.col});
  }
  [[noreturn]] void fail(const std::string &msg) { fail(msg, peek()); }

  bool is_op(std::string_view op, std::size_t k = 0) const {
    return peek(k).kind == Tok::Op && peek(k).text == op;
  }
  bool is_kw(std::string_view kw, std::size_t k = 0) const {
    return peek(k).kind == Tok::Name && peek(k).text == kw;
  }
  bool accept_op(std::string_view op) {
    if (is_op(op)) {
      ++pos_;
      return true;
    }
    return false;
  }
  bool accept_kw(std::string_view kw) {
    if (is_kw(kw)) {
      ++pos_;
      return true;
    }
    return false;
  }
  void expect_op(std::string_view op) {
    if (!accept_op(op))
      fail("expected '" + std::string(op) + "'");
  }
  void expect_kw(std::string_view kw) {
    if (!accept_kw(kw))
      fail("expected '" + std::string(kw) + "'");
  }
  std::string expect_name() {
    if (peek().kind != Tok::Name || kKeywords.count(peek().text))
      fail("expected a name");
    return next().text;
  }

  StmtPtr make_stmt(StmtKind k, const Token &t) {
    auto s = std::make_shared<Stmt>();
    s->kind = k;
    s->line = t.line;
    s->col = t.col;
    return s;
  }
  ExprPtr make_expr(ExprKind k, const Token &t) {
    auto e = std::make_shared<Expr>();
    e->kind = k;
    e->line = t.line;
    e->col = t.col;
    return e;
  }

  int last_line() const { return pos_ ? toks_[pos_ - 1].line : 1; }

  // ---- statements --------------------------------------------------------

  void parse_stmt(std::vector<StmtPtr> &out) {
    const Token &t = peek();
    if (is_op("@")) {
      std::vector<ExprPtr> decorators;
      while (accept_op("@")) {
        decorators.push_back(parse_test());
        if (peek().kind != Tok::Newline)
          fail("expected newline after decorator");
        ++pos_;
      }
      if (!is_kw("def") && !is_kw("class"))
        fail("decorator must precede def or class");
      parse_stmt(out);
      out.back()->decorators = std::move(decorators);
      return;
    }
    if (is_kw("def")) {
      out.push_back(parse_def());
      return;
    }
    if (is_kw("class")) {
      ++pos_;
      auto s = make_stmt(StmtKind::ClassDef, t);
      s->name = expect_name();
      if (accept_op("(")) {
        if (!is_op(")")) {
          do
            s->bases.push_back(parse_test());
          while (accept_op(",") && !is_op(")"));
        }
        expect_op(")");
      }
      expect_op(":");
      s->body = parse_suite();
      s->end_line = last_line();
      out.push_back(s);
      return;
    }
    if (is_kw("if")) {
      out.push_back(parse_if());
      return;
    }
    if (is_kw("for")) {
      ++pos_;
      auto s = make_stmt(StmtKind::For, t);
      s->targets.push_back(parse_target_list());
      expect_kw("in");
      s->value = parse_testlist();
      expect_op(":");
      s->body = parse_suite();
      if (accept_kw("else")) {
        expect_op(":");
        s->orelse = parse_suite();
      }
      s->end_line = last_line();
      out.push_back(s);
      return;
    }
    if (is_kw("while")) {
      ++pos_;
      auto s = make_stmt(StmtKind::While, t);
      s->value = parse_test();
      expect_op(":");
      s->body = parse_suite();
      if (accept_kw("else")) {
        expect_op(":");
        s->orelse = parse_suite();
      }
      s->end_line = last_line();
      out.push_back(s);
      return;
    }
    if (is_kw("with")) {
      ++pos_;
      auto s = make_stmt(StmtKind::With, t);
      s->value = parse_test();
      if (accept_kw("as"))
        s->targets.push_back(parse_target_list());
      expect_op(":");
      s->body = parse_suite();
      s->end_line = last_line();
      out.push_back(s);
      return;
    }
    if (is_kw("try")) {
      ++pos_;
      auto s = make_stmt(StmtKind::Try, t);
      expect_op(":");
      s->body = parse_suite();
      while (is_kw("except") || is_kw("finally") || is_kw("else")) {
        ++pos_;
        while (!is_op(":") && peek().kind != Tok::Newline)
          ++pos_;
        expect_op(":");
        auto handler = parse_suite();
        s->orelse.insert(s->orelse.end(), handler.begin(), handler.end());
      }
      s->end_line = last_line();
      out.push_back(s);
      return;
    }
    parse_simple_line(out);
  }

  StmtPtr parse_def() {
    const Token &t = peek();
    expect_kw("def");
    auto s = make_stmt(StmtKind::FunctionDef, t);
    s->name = expect_name();
    expect_op("(");
    while (!is_op(")")) {
      Param p;
      p.line = peek().line;
      p.name = expect_name();
      if (accept_op(":"))
        p.annotation = parse_test();
      if (is_op("="))
        fail("default parameter values are not supported");
      s->params.push_back(std::move(p));
      if (!accept_op(","))
        break;
    }
    expect_op(")");
    if (accept_op("->"))
      parse_test();
    expect_op(":");
    s->body = parse_suite();
    s->end_line = last_line();
    return s;
  }

  StmtPtr parse_if() {
    const Token &t = peek();
    ++pos_; // if / elif
    auto s = make_stmt(StmtKind::If, t);
    s->value = parse_test();
    expect_op(":");
    s->body = parse_suite();
    if (is_kw("elif")) {
      s->orelse.push_back(parse_if());
    } else if (accept_kw("else")) {
      expect_op(":");
      s->orelse = parse_suite();
    }
    s->end_line = last_line();
    return s;
  }

  std::vector<StmtPtr> parse_suite() {
    std::vector<StmtPtr> body;
    if (peek().kind != Tok::Newline) {
      parse_simple_line(body);
      return body;
    }
    ++pos_;
    if (peek().kind != Tok::Indent)
      fail("expected an indented block");
    ++pos_;
    while (peek().kind != Tok::Dedent && peek().kind != Tok::End) {
      if (peek().kind == Tok::Newline) {
        ++pos_;
        continue;
      }
      parse_stmt(body);
    }
    if (peek().kind == Tok::Dedent)
      ++pos_;
    return body;
  }

  void parse_simple_line(std::vector<StmtPtr> &out) {
    for (;;) {
      out.push_back(parse_simple());
      if (!accept_op(";"))
        break;
      if (peek().kind == Tok::Newline)
        break;
    }
    if (peek().kind != Tok::Newline && peek().kind != Tok::End)
      fail("unexpected token '" + peek().text + "'");
    if (peek().kind == Tok::Newline)
      ++pos_;
  }

  StmtPtr parse_simple() {
    const Token &t = peek();
    if (accept_kw("pass"))
      return finish(make_stmt(StmtKind::Pass, t));
    if (accept_kw("break"))
      return finish(make_stmt(StmtKind::Break, t));
    if (accept_kw("continue"))
      return finish(make_stmt(StmtKind::Continue, t));
    if (accept_kw("return")) {
      auto s = make_stmt(StmtKind::Return, t);
      if (peek().kind != Tok::Newline && !is_op(";"))
        s->value = parse_testlist();
      return finish(s);
    }
    if (is_kw("import") || is_kw("from")) {
      auto s = make_stmt(StmtKind::Import, t);
      while (peek().kind != Tok::Newline && peek().kind != Tok::End)
        ++pos_;
      return finish(s);
    }
    if (is_kw("global") || is_kw("nonlocal")) {
      auto s = make_stmt(StmtKind::Global, t);
      while (peek().kind != Tok::Newline && peek().kind != Tok::End)
        ++pos_;
      return finish(s);
    }
    ExprPtr first = parse_testlist();
    static const char *aug[] = {"+=", "-=", "*=", "/=", "//=", "%="};
    for (const char *op : aug) {
      if (is_op(op)) {
        ++pos_;
        auto s = make_stmt(StmtKind::AugAssign, t);
        s->name = std::string(op).substr(0, std::strlen(op) - 1);
        check_target(first);
        s->targets.push_back(first);
        s->value = parse_testlist();
        return finish(s);
      }
    }
    if (is_op("=")) {
      auto s = make_stmt(StmtKind::Assign, t);
      s->targets.push_back(first);
      while (accept_op("=")) {
        ExprPtr rhs = parse_testlist();
        s->targets.push_back(rhs);
      }
      s->value = s->targets.back();
      s->targets.pop_back();
      for (auto &target : s->targets)
        check_target(target);
      return finish(s);
    }
    auto s = make_stmt(StmtKind::ExprStmt, t);
    s->value = first;
    return finish(s);
  }

  StmtPtr finish(StmtPtr s) {
    s->end_line = last_line();
    return s;
  }

  void check_target(const ExprPtr &e) {
    switch (e->kind) {
    case ExprKind::Name:
    case ExprKind::Subscript:
    case ExprKind::Attribute:
      return;
    case ExprKind::Tuple:
    case ExprKind::List:
      for (auto &x : e->elts)
        check_target(x);
      return;
    default:
      throw Error(ErrorCode::SyntaxError, "cannot assign to expression",
                  Location{file_, e->line, e->col});
    }
  }

  ExprPtr parse_target_list() {
    const Token &t = peek();
    std::vector<ExprPtr> elts;
    bool trailing = false;
    do {
      if (is_kw("in") || is_op("="))
        break;
      elts.push_back(parse_or_expr());
      trailing = is_op(",");
    } while (accept_op(","));
    if (elts.size() == 1 && !trailing) {
      check_target(elts[0]);
      return elts[0];
    }
    auto tup = make_expr(ExprKind::Tuple, t);
    tup->elts = std::move(elts);
    check_target(tup);
    return tup;
  }

  // ---- expressions -------------------------------------------------------

  ExprPtr parse_testlist() {
    const Token &t = peek();
    ExprPtr first = parse_test();
    if (!is_op(","))
      return first;
    auto tup = make_expr(ExprKind::Tuple, t);
    tup->elts.push_back(first);
    while (accept_op(",")) {
      if (peek().kind == Tok::Newline || is_op("=") || is_op(")") ||
          is_op(":") || is_op(";"))
        break;
      tup->elts.push_back(parse_test());
    }
    return tup;
  }

  ExprPtr parse_test() {
    const Token &t = peek();
    if (accept_kw("lambda")) {
      auto e = make_expr(ExprKind::Lambda, t);
      while (!is_op(":"))
        next();
      expect_op(":");
      e->value = parse_test();
      return e;
    }
    ExprPtr e = parse_or();
    if (accept_kw("if")) {
      auto ife = make_expr(ExprKind::IfExp, t);
      ife->elts.push_back(parse_or());
      expect_kw("else");
      ife->elts.push_back(e);
      ife->elts.push_back(parse_test());
      return ife;
    }
    return e;
  }

  ExprPtr parse_or() {
    const Token &t = peek();
    ExprPtr e = parse_and();
    while (is_kw("or")) {
      ++pos_;
      auto b = make_expr(ExprKind::BoolOp, t);
      b->id = "or";
      b->elts = {e, parse_and()};
      e = b;
    }
    return e;
  }

  ExprPtr parse_and() {
    const Token &t = peek();
    ExprPtr e = parse_not();
    while (is_kw("and")) {
      ++pos_;
      auto b = make_expr(ExprKind::BoolOp, t);
      b->id = "and";
      b->elts = {e, parse_not()};
      e = b;
    }
    return e;
  }

  ExprPtr parse_not() {
    const Token &t = peek();
    if (accept_kw("not")) {
      auto e = make_expr(ExprKind::UnaryOp, t);
      e->id = "not";
      e->value = parse_not();
      return e;
    }
    return parse_comparison();
  }

  ExprPtr parse_comparison() {
    const Token &t = peek();
    ExprPtr left = parse_or_expr();
    std::vector<std::string> ops;
    std::vector<ExprPtr> operands{left};
    for (;;) {
      static const char *cmp[] = {"<", ">", "==", ">=", "<=", "!="};
      std::string op;
      for (const char *c : cmp)
        if (is_op(c))
          op = c;
      if (op.empty() && is_kw("in"))
        op = "in";
      if (op.empty() && is_kw("is"))
        op = "is";
      if (op.empty() && is_kw("not") && is_kw("in", 1))
        op = "not in";
      if (op.empty())
        break;
      pos_ += op == "not in" ? 2 : 1;
      ops.push_back(op);
      operands.push_back(parse_or_expr());
    }
    if (ops.empty())
      return left;
    auto e = make_expr(ExprKind::Compare, t);
    e->ops = std::move(ops);
    e->elts = std::move(operands);
    return e;
  }

  ExprPtr parse_or_expr() { return parse_arith(); }

  ExprPtr parse_arith() {
    ExprPtr e = parse_term();
    while (is_op("+") || is_op("-")) {
      const Token &t = next();
      auto b = make_expr(ExprKind::BinOp, t);
      b->line = e->line;
      b->col = e->col;
      b->id = t.text;
      b->elts = {e, parse_term()};
      e = b;
    }
    return e;
  }

  ExprPtr parse_term() {
    ExprPtr e = parse_factor();
    while (is_op("*") || is_op("/") || is_op("//") || is_op("%")) {
      const Token &t = next();
      auto b = make_expr(ExprKind::BinOp, t);
      b->line = e->line;
      b->col = e->col;
      b->id = t.text;
      b->elts = {e, parse_factor()};
      e = b;
    }
    return e;
  }

  ExprPtr parse_factor() {
    const Token &t = peek();
    if (is_op("-") || is_op("+")) {
      ++pos_;
      auto e = make_expr(ExprKind::UnaryOp, t);
      e->id = t.text;
      e->value = parse_factor();
      return e;
    }
    ExprPtr base = parse_power();
    return base;
  }

  ExprPtr parse_power() {
    ExprPtr e = parse_atom_trailers();
    if (is_op("**")) {
      const Token &t = next();
      auto b = make_expr(ExprKind::BinOp, t);
      b->id = "**";
      b->elts = {e, parse_factor()};
      return b;
    }
    return e;
  }

  ExprPtr parse_atom_trailers() {
    ExprPtr e = parse_atom();
    for (;;) {
      const Token &t = peek();
      if (accept_op("(")) {
        auto call = make_expr(ExprKind::Call, t);
        call->line = e->line;
        call->col = e->col;
        call->value = e;
        while (!is_op(")")) {
          if (peek().kind == Tok::Name && is_op("=", 1)) {
            std::string kw = next().text;
            ++pos_;
            call->keywords.push_back(Keyword{kw, parse_test()});
          } else {
            if (!call->keywords.empty())
              fail("positional argument follows keyword argument");
            call->elts.push_back(parse_test());
          }
          if (!accept_op(","))
            break;
        }
        expect_op(")");
        e = call;
      } else if (accept_op("[")) {
        auto sub = make_expr(ExprKind::Subscript, t);
        sub->line = e->line;
        sub->col = e->col;
        sub->value = e;
        sub->slice = parse_testlist();
        expect_op("]");
        e = sub;
      } else if (accept_op(".")) {
        auto attr = make_expr(ExprKind::Attribute, t);
        attr->line = e->line;
        attr->col = e->col;
        attr->value = e;
        attr->id = expect_name();
        e = attr;
      } else {
        return e;
      }
    }
  }

  ExprPtr parse_atom() {
    const Token &t = peek();
    switch (t.kind) {
    case Tok::Name: {
      ++pos_;
      if (t.text == "True")
        return make_expr(ExprKind::True, t);
      if (t.text == "False")
        return make_expr(ExprKind::False, t);
      if (t.text == "None")
        return make_expr(ExprKind::None, t);
      if (kKeywords.count(t.text))
        fail("unexpected keyword '" + t.text + "'", t);
      auto e = make_expr(ExprKind::Name, t);
      e->id = t.text;
      return e;
    }
    case Tok::Number: {
      ++pos_;
      std::string digits;
      for (char c : t.text)
        if (c != '_')
          digits += c;
      bool is_float = digits.find_first_of(".eE") != std::string::npos;
      auto e = make_expr(is_float ? ExprKind::Float : ExprKind::Int, t);
      e->text = t.text;
      const char *b = digits.data(), *end = digits.data() + digits.size();
      std::from_chars_result r;
      if (is_float)
        r = std::from_chars(b, end, e->fval);
      else
        r = std::from_chars(b, end, e->ival);
      if (r.ec != std::errc() || r.ptr != end)
        fail("malformed number '" + t.text + "'", t);
      return e;
    }
    case Tok::String: {
      ++pos_;
      auto e = make_expr(ExprKind::Str, t);
      e->id = t.text;
      while (peek().kind == Tok::String)
        e->id += next().text;
      return e;
    }
    case Tok::Op:
      if (t.text == "(") {
        ++pos_;
        if (accept_op(")"))
          return make_expr(ExprKind::Tuple, t);
        ExprPtr first = parse_test();
        if (is_kw("for"))
          return parse_comprehension(t, first, ")");
        if (accept_op(")"))
          return first;
        auto tup = make_expr(ExprKind::Tuple, t);
        tup->elts.push_back(first);
        while (accept_op(",")) {
          if (is_op(")"))
            break;
          tup->elts.push_back(parse_test());
        }
        expect_op(")");
        return tup;
      }
      if (t.text == "[") {
        ++pos_;
        auto list = make_expr(ExprKind::List, t);
        if (accept_op("]"))
          return list;
        ExprPtr first = parse_test();
        if (is_kw("for"))
          return parse_comprehension(t, first, "]");
        list->elts.push_back(first);
        while (accept_op(",")) {
          if (is_op("]"))
            break;
          list->elts.push_back(parse_test());
        }
        expect_op("]");
        return list;
      }
      if (t.text == "{") {
        ++pos_;
        auto dict = make_expr(ExprKind::Dict, t);
        while (!is_op("}")) {
          ExprPtr k = parse_test();
          if (is_kw("for"))
            return parse_comprehension(t, k, "}");
          expect_op(":");
          ExprPtr v = parse_test();
          if (is_kw("for"))
            return parse_comprehension(t, v, "}");
          dict->elts.push_back(k);
          dict->elts.push_back(v);
          if (!accept_op(","))
            break;
        }
        expect_op("}");
        return dict;
      }
      break;
    default:
      break;
    }
    fail(t.kind == Tok::Newline || t.kind == Tok::End
             ? "unexpected end of line"
             : "unexpected token '" + t.text + "'",
         t);
  }

  ExprPtr parse_comprehension(const Token &t, ExprPtr elt,
                              std::string_view close) {
    auto e = make_expr(ExprKind::Comprehension, t);
    e->value = elt;
    int depth = 1;
    while (depth > 0 && peek().kind != Tok::End) {
      const Token &x = next();
      if (x.kind == Tok::Op && (x.text == "(" || x.text == "[" || x.text == "{"))
        ++depth;
      if (x.kind == Tok::Op && (x.text == ")" || x.text == "]" || x.text == "}"))
        --depth;
    }
    (void)close;
    return e;
  }

  std::vector<Token> toks_;
  std::string file_;
  std::size_t pos_ = 0;
};

} // namespace

Module parse(std::string_view source, const std::string &filename) {
  Lexer lexer(source, filename);
  HostParser parser(lexer.run(), filename);
  return parser.run();
}

//===----------------------------------------------------------------------===//
// Cloning
//===----------------------------------------------------------------------===//

ExprPtr clone(const ExprPtr &e) {
  if (!e)
    return nullptr;
  auto c = std::make_shared<Expr>(*e);
  for (auto &x : c->elts)
    x = clone(x);
  for (auto &k : c->keywords)
    k.value = clone(k.value);
  c->value = clone(e->value);
  c->slice = clone(e->slice);
  return c;
}

StmtPtr clone(const StmtPtr &s) {
  if (!s)
    return nullptr;
  auto c = std::make_shared<Stmt>(*s);
  for (auto &p : c->params)
    p.annotation = clone(p.annotation);
  for (auto &d : c->decorators)
    d = clone(d);
  for (auto &b : c->bases)
    b = clone(b);
  for (auto &t : c->targets)
    t = clone(t);
  c->value = clone(s->value);
  for (auto &b : c->body)
    b = clone(b);
  for (auto &b : c->orelse)
    b = clone(b);
  return c;
}

//===----------------------------------------------------------------------===//
// Unparsing
//===----------------------------------------------------------------------===//

namespace {

int precedence(const Expr &e) {
  switch (e.kind) {
  case ExprKind::Lambda:
  case ExprKind::IfExp:
    return 0;
  case ExprKind::BoolOp:
    return e.id == "or" ? 1 : 2;
  case ExprKind::UnaryOp:
    return e.id == "not" ? 3 : 7;
  case ExprKind::Compare:
    return 4;
  case ExprKind::BinOp:
    if (e.id == "+" || e.id == "-")
      return 5;
    if (e.id == "**")
      return 8;
    return 6;
  default:
    return 9;
  }
}

std::string wrap(const ExprPtr &e, int min_prec) {
  std::string s = unparse(e);
  return precedence(*e) < min_prec ? "(" + s + ")" : s;
}

std::string join_exprs(const std::vector<ExprPtr> &xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i)
      s += ", ";
    s += unparse(xs[i]);
  }
  return s;
}

} // namespace

std::string unparse(const ExprPtr &e) {
  switch (e->kind) {
  case ExprKind::Name:
    return e->id;
  case ExprKind::Int:
  case ExprKind::Float:
    return e->text.empty() ? (e->kind == ExprKind::Int ? std::to_string(e->ival)
                                                       : std::to_string(e->fval))
                           : e->text;
  case ExprKind::Str: {
    std::string s = "\"";
    for (char c : e->id)
      s += c == '"' ? std::string("\\\"") : c == '\n' ? std::string("\\n")
                                                      : std::string(1, c);
    return s + "\"";
  }
  case ExprKind::True:
    return "True";
  case ExprKind::False:
    return "False";
  case ExprKind::None:
    return "None";
  case ExprKind::BinOp: {
    int p = precedence(*e);
    return wrap(e->elts[0], p) + " " + e->id + " " + wrap(e->elts[1], p + 1);
  }
  case ExprKind::UnaryOp:
    return e->id == "not" ? "not " + wrap(e->value, 3)
                          : e->id + wrap(e->value, 7);
  case ExprKind::Compare: {
    std::string s = wrap(e->elts[0], 5);
    for (std::size_t i = 0; i < e->ops.size(); ++i)
      s += " " + e->ops[i] + " " + wrap(e->elts[i + 1], 5);
    return s;
  }
  case ExprKind::BoolOp:
    return wrap(e->elts[0], precedence(*e)) + " " + e->id + " " +
           wrap(e->elts[1], precedence(*e) + 1);
  case ExprKind::Call: {
    std::string s = wrap(e->value, 9) + "(" + join_exprs(e->elts);
    for (std::size_t i = 0; i < e->keywords.size(); ++i) {
      if (i || !e->elts.empty())
        s += ", ";
      s += e->keywords[i].name + "=" + unparse(e->keywords[i].value);
    }
    return s + ")";
  }
  case ExprKind::Attribute:
    return wrap(e->value, 9) + "." + e->id;
  case ExprKind::Subscript: {
    std::string idx = e->slice->kind == ExprKind::Tuple && !e->slice->elts.empty()
                          ? join_exprs(e->slice->elts)
                          : unparse(e->slice);
    return wrap(e->value, 9) + "[" + idx + "]";
  }
  case ExprKind::Tuple:
    if (e->elts.size() == 1)
      return "(" + unparse(e->elts[0]) + ",)";
    return "(" + join_exprs(e->elts) + ")";
  case ExprKind::List:
    return "[" + join_exprs(e->elts) + "]";
  case ExprKind::Dict: {
    std::string s = "{";
    for (std::size_t i = 0; i + 1 < e->elts.size(); i += 2) {
      if (i)
        s += ", ";
      s += unparse(e->elts[i]) + ": " + unparse(e->elts[i + 1]);
    }
    return s + "}";
  }
  case ExprKind::Lambda:
    return "lambda: " + unparse(e->value);
  case ExprKind::Comprehension:
    return "[" + unparse(e->value) + " for ...]";
  case ExprKind::IfExp:
    return unparse(e->elts[1]) + " if " + unparse(e->elts[0]) + " else " +
           unparse(e->elts[2]);
  }
  return "?";
}

std::string unparse(const StmtPtr &s, int indent) {
  std::string pad(static_cast<std::size_t>(indent) * 4, ' ');
  std::string out;
  for (const auto &d : s->decorators)
    out += pad + "@" + unparse(d) + "\n";
  auto target_text = [](const ExprPtr &t) {
    if (t->kind == ExprKind::Tuple && !t->elts.empty())
      return join_exprs(t->elts);
    return unparse(t);
  };
  switch (s->kind) {
  case StmtKind::FunctionDef: {
    out += pad + "def " + s->name + "(";
    for (std::size_t i = 0; i < s->params.size(); ++i) {
      if (i)
        out += ", ";
      out += s->params[i].name;
      if (s->params[i].annotation)
        out += ": " + unparse(s->params[i].annotation);
    }
    out += "):\n" + unparse(s->body, indent + 1);
    return out;
  }
  case StmtKind::ClassDef: {
    out += pad + "class " + s->name;
    if (!s->bases.empty())
      out += "(" + join_exprs(s->bases) + ")";
    out += ":\n" + unparse(s->body, indent + 1);
    return out;
  }
  case StmtKind::Assign: {
    out += pad;
    for (const auto &t : s->targets)
      out += target_text(t) + " = ";
    return out + target_text(s->value) + "\n";
  }
  case StmtKind::AugAssign:
    return out + pad + unparse(s->targets[0]) + " " + s->name + "= " +
           unparse(s->value) + "\n";
  case StmtKind::ExprStmt:
    return out + pad + unparse(s->value) + "\n";
  case StmtKind::If: {
    out += pad + "if " + unparse(s->value) + ":\n" + unparse(s->body, indent + 1);
    if (!s->orelse.empty())
      out += pad + "else:\n" + unparse(s->orelse, indent + 1);
    return out;
  }
  case StmtKind::For: {
    out += pad + "for " + target_text(s->targets[0]) + " in " +
           unparse(s->value) + ":\n" + unparse(s->body, indent + 1);
    if (!s->orelse.empty())
      out += pad + "else:\n" + unparse(s->orelse, indent + 1);
    return out;
  }
  case StmtKind::While:
    return out + pad + "while " + unparse(s->value) + ":\n" +
           unparse(s->body, indent + 1);
  case StmtKind::Return:
    return out + pad + "return" +
           (s->value ? " " + target_text(s->value) : std::string()) + "\n";
  case StmtKind::Pass:
    return out + pad + "pass\n";
  case StmtKind::Break:
    return out + pad + "break\n";
  case StmtKind::Continue:
    return out + pad + "continue\n";
  case StmtKind::With:
    return out + pad + "with " + unparse(s->value) + ":\n" +
           unparse(s->body, indent + 1);
  case StmtKind::Try:
    return out + pad + "try:\n" + unparse(s->body, indent + 1);
  case StmtKind::Import:
    return out + pad + "import ...\n";
  case StmtKind::Global:
    return out + pad + "global ...\n";
  }
  return out;
}

std::string unparse(const std::vector<StmtPtr> &body, int indent) {
  std::string out;
  for (const auto &s : body)
    out += unparse(s, indent);
  if (body.empty())
    out += std::string(static_cast<std::size_t>(indent) * 4, ' ') + "pass\n";
  return out;
}

} // namespace staircase::host
