#include "staircase/textio.hpp"

#include "staircase/dialects.hpp"

#include <charconv>
#include <cmath>
#include <set>

namespace staircase {

namespace {

const std::set<std::string, std::less<>> kBinaryArith{
    "arith.addf", "arith.subf", "arith.mulf", "arith.divf",
    "arith.addi", "arith.subi", "arith.muli"};

const std::set<std::string, std::less<>> kPlainTerminators{
    "scf.yield", "affine.yield", "gpu.return"};

class Parser {
public:
  Parser(std::string_view text, Context &ctx, std::string filename)
      : src_(text), ctx_(ctx), file_(std::move(filename)) {}

  std::unique_ptr<Operation> parse_top() {
    ws();
    Location loc = here();
    expect_kw("module");
    auto module = Operation::create(ctx_, "builtin.module", {}, {},
                                    optional_region_attrs(), 1, loc);
    scopes_.emplace_back();
    parse_region_body(module->region(0).block());
    scopes_.pop_back();
    ws();
    if (pos_ != src_.size())
      fail("unexpected text after module");
    return module;
  }

private:
  using Scope = std::unordered_map<std::string, Value *>;

  // ---- lexing primitives -------------------------------------------------

  [[noreturn]] void fail(const std::string &msg) {
    throw Error(ErrorCode::SyntaxError, msg, here());
  }

  Location here() {
    if (pos_ < mark_pos_) {
      mark_pos_ = 0;
      mark_line_ = mark_col_ = 1;
    }
    for (; mark_pos_ < pos_ && mark_pos_ < src_.size(); ++mark_pos_) {
      if (src_[mark_pos_] == '\n') {
        ++mark_line_;
        mark_col_ = 1;
      } else {
        ++mark_col_;
      }
    }
    return Location{file_, mark_line_, mark_col_};
  }

  char peek() const { return pos_ < src_.size() ? src_[pos_] : '\0'; }

  void ws() {
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
        ++pos_;
      } else if (c == '/' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '/') {
        while (pos_ < src_.size() && src_[pos_] != '\n')
          ++pos_;
      } else {
        break;
      }
    }
  }

  // Next non-blank character on the current line, or '\n'.
  char peek_same_line() {
    std::size_t p = pos_;
    while (p < src_.size() && (src_[p] == ' ' || src_[p] == '\t'))
      ++p;
    if (p >= src_.size() || src_[p] == '\n' || src_[p] == '\r')
      return '\n';
    if (src_[p] == '/' && p + 1 < src_.size() && src_[p + 1] == '/')
      return '\n';
    return src_[p];
  }

  bool consume(char c) {
    ws();
    if (peek() == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!consume(c))
      fail(std::string("expected '") + c + "'");
  }

  static bool ident_start(char c) {
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
  }
  static bool ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' ||
           c == '.' || c == '$';
  }

  std::string ident() {
    ws();
    if (!ident_start(peek()))
      fail("expected identifier");
    std::size_t start = pos_;
    while (pos_ < src_.size() && ident_char(src_[pos_]))
      ++pos_;
    return std::string(src_.substr(start, pos_ - start));
  }

  bool try_kw(std::string_view kw) {
    ws();
    if (src_.substr(pos_, kw.size()) != kw)
      return false;
    std::size_t end = pos_ + kw.size();
    if (end < src_.size() && ident_char(src_[end]))
      return false;
    pos_ = end;
    return true;
  }

  void expect_kw(std::string_view kw) {
    if (!try_kw(kw))
      fail("expected '" + std::string(kw) + "'");
  }

  bool try_arrow() {
    ws();
    if (src_.substr(pos_, 2) == "->") {
      pos_ += 2;
      return true;
    }
    return false;
  }

  std::string value_name() {
    ws();
    if (peek() != '%')
      fail("expected SSA value");
    std::size_t start = pos_++;
    while (pos_ < src_.size() &&
           (std::isalnum(static_cast<unsigned char>(src_[pos_])) ||
            src_[pos_] == '_'))
      ++pos_;
    if (pos_ == start + 1)
      fail("empty SSA value name");
    return std::string(src_.substr(start, pos_ - start));
  }

  std::string symbol_name() {
    ws();
    if (peek() != '@')
      fail("expected symbol");
    ++pos_;
    std::size_t start = pos_;
    while (pos_ < src_.size() && ident_char(src_[pos_]))
      ++pos_;
    if (pos_ == start)
      fail("empty symbol name");
    return std::string(src_.substr(start, pos_ - start));
  }

  std::vector<std::string> symbol_path() {
    std::vector<std::string> path{symbol_name()};
    while (src_.substr(pos_, 2) == "::") {
      pos_ += 2;
      path.push_back(symbol_name());
    }
    return path;
  }

  // ---- values --------------------------------------------------------------

  Value *use(const std::string &name) {
    auto &scope = scopes_.back();
    auto it = scope.find(name);
    if (it == scope.end())
      fail("use of undefined value '" + name + "'");
    return it->second;
  }

  Value *operand() { return use(value_name()); }

  std::vector<Value *> operand_list(char close) {
    std::vector<Value *> out;
    ws();
    if (peek() == close)
      return out;
    do
      out.push_back(operand());
    while (consume(','));
    return out;
  }

  void bind(const std::string &name, Value *v) {
    if (!scopes_.back().emplace(name, v).second)
      fail("redefinition of '" + name + "'");
  }

  // ---- types -----------------------------------------------------------------

  Type type() {
    ws();
    Location loc = here();
    std::string id = ident();
    if (id == "index")
      return Type::index();
    if (id == "i1")
      return Type::i1();
    if (id == "i32")
      return Type::i32();
    if (id == "i64")
      return Type::i64();
    if (id == "f32")
      return Type::f32();
    if (id == "f64")
      return Type::f64();
    if (id != "memref")
      throw Error(ErrorCode::SyntaxError, "unknown type '" + id + "'", loc);
    if (peek() != '<')
      fail("expected '<' after memref");
    ++pos_;
    std::vector<std::int64_t> shape;
    while (std::isdigit(static_cast<unsigned char>(peek()))) {
      std::int64_t d = 0;
      auto res = std::from_chars(src_.data() + pos_, src_.data() + src_.size(), d);
      pos_ = static_cast<std::size_t>(res.ptr - src_.data());
      shape.push_back(d);
      if (peek() != 'x')
        fail("expected 'x' in memref shape");
      ++pos_;
    }
    std::size_t start = pos_;
    while (pos_ < src_.size() && std::isalnum(static_cast<unsigned char>(src_[pos_])))
      ++pos_;
    std::string elem(src_.substr(start, pos_ - start));
    if (peek() != '>')
      fail("expected '>' closing memref type");
    ++pos_;
    Type e;
    if (elem == "i1") e = Type::i1();
    else if (elem == "i32") e = Type::i32();
    else if (elem == "i64") e = Type::i64();
    else if (elem == "f32") e = Type::f32();
    else if (elem == "f64") e = Type::f64();
    else if (elem == "index") e = Type::index();
    else
      throw Error(ErrorCode::SyntaxError,
                  "unknown memref element type '" + elem + "'", loc);
    try {
      return Type::memref(std::move(shape), e);
    } catch (const Error &err) {
      throw Error(ErrorCode::SyntaxError, err.detail(), loc);
    }
  }

  std::vector<Type> type_list_parens() {
    expect('(');
    std::vector<Type> out;
    ws();
    if (peek() == ')') {
      ++pos_;
      return out;
    }
    do
      out.push_back(type());
    while (consume(','));
    expect(')');
    return out;
  }

  // ---- attributes --------------------------------------------------------------

  struct Number {
    bool is_float = false;
    std::int64_t i = 0;
    double f = 0;
  };

  Number number() {
    ws();
    Number n;
    bool neg = false;
    if (peek() == '-') {
      neg = true;
      ++pos_;
    }
    if (try_kw("inf")) {
      n.is_float = true;
      n.f = neg ? -INFINITY : INFINITY;
      return n;
    }
    if (try_kw("nan")) {
      n.is_float = true;
      n.f = NAN;
      return n;
    }
    std::size_t start = pos_;
    while (pos_ < src_.size() &&
           (std::isdigit(static_cast<unsigned char>(src_[pos_])) ||
            src_[pos_] == '.' || src_[pos_] == 'e' || src_[pos_] == 'E' ||
            ((src_[pos_] == '-' || src_[pos_] == '+') &&
             (src_[pos_ - 1] == 'e' || src_[pos_ - 1] == 'E'))))
      ++pos_;
    std::string_view text = src_.substr(start, pos_ - start);
    if (text.empty())
      fail("expected number");
    std::string full = (neg ? "-" : "") + std::string(text);
    if (text.find_first_of(".eE") != std::string_view::npos) {
      n.is_float = true;
      auto res = std::from_chars(full.data(), full.data() + full.size(), n.f);
      if (res.ec != std::errc() || res.ptr != full.data() + full.size())
        fail("malformed float literal '" + full + "'");
    } else {
      auto res = std::from_chars(full.data(), full.data() + full.size(), n.i);
      if (res.ec != std::errc() || res.ptr != full.data() + full.size())
        fail("malformed integer literal '" + full + "'");
    }
    return n;
  }

  std::string string_lit() {
    expect('"');
    std::string out;
    while (pos_ < src_.size() && src_[pos_] != '"') {
      char c = src_[pos_++];
      if (c == '\\' && pos_ < src_.size()) {
        char e = src_[pos_++];
        out += e == 'n' ? '\n' : e == 't' ? '\t' : e;
      } else {
        out += c;
      }
    }
    if (pos_ >= src_.size())
      fail("unterminated string");
    ++pos_;
    return out;
  }

  Attribute attribute() {
    ws();
    char c = peek();
    if (c == '{')
      return Attribute::dict(dict());
    if (c == '[') {
      ++pos_;
      Attribute::Array arr;
      if (!consume(']')) {
        do
          arr.push_back(attribute());
        while (consume(','));
        expect(']');
      }
      return Attribute::array(std::move(arr));
    }
    if (c == '"')
      return Attribute::string(string_lit());
    if (c == '@')
      return Attribute::symbol(symbol_path());
    if (c == '-' || std::isdigit(static_cast<unsigned char>(c)) ||
        src_.substr(pos_, 3) == "inf" || src_.substr(pos_, 3) == "nan") {
      Number n = number();
      if (!n.is_float)
        return Attribute::integer(n.i);
      if (peek_same_line() == ':') {
        std::size_t save = pos_;
        expect(':');
        if (try_kw("f32"))
          return Attribute::real(static_cast<float>(n.f), TypeKind::F32);
        pos_ = save;
      }
      return Attribute::real(n.f, TypeKind::F64);
    }
    if (try_kw("unit"))
      return Attribute::unit();
    return Attribute::type(type());
  }

  Attribute::Dict dict() {
    expect('{');
    Attribute::Dict d;
    if (consume('}'))
      return d;
    do {
      ws();
      std::string key = peek() == '"' ? string_lit() : ident();
      Attribute value = consume('=') ? attribute() : Attribute::unit();
      if (!d.emplace(key, value).second)
        fail("duplicate attribute '" + key + "'");
    } while (consume(','));
    expect('}');
    return d;
  }

  Attribute::Dict optional_attrs() {
    if (peek_same_line() == '{')
      return dict();
    return {};
  }

  Attribute::Dict optional_region_attrs() {
    if (peek_same_line() == 'a' && try_kw("attributes"))
      return dict();
    return {};
  }

  // ---- structure ---------------------------------------------------------------

  void parse_region_body(Block &block) {
    expect('{');
    parse_block_ops(block);
  }

  void parse_block_ops(Block &block) {
    for (;;) {
      ws();
      if (peek() == '}') {
        ++pos_;
        return;
      }
      if (pos_ >= src_.size())
        fail("unexpected end of input inside region");
      parse_op(block);
    }
  }

  Operation &emit(Block &block, const std::string &name,
                  std::vector<Value *> operands,
                  const std::vector<Type> &result_types, Attribute::Dict attrs,
                  std::size_t regions, const Location &loc,
                  const std::vector<std::string> &result_names) {
    if (result_names.size() != result_types.size())
      throw Error(ErrorCode::SyntaxError,
                  "'" + name + "' defines " +
                      std::to_string(result_types.size()) +
                      " results but " + std::to_string(result_names.size()) +
                      " names are bound",
                  loc);
    Operation &op = block.push_back(Operation::create(
        ctx_, name, std::move(operands), result_types, std::move(attrs),
        regions, loc));
    for (std::size_t i = 0; i < result_names.size(); ++i)
      bind(result_names[i], op.result(i));
    return op;
  }

  void parse_op(Block &block) {
    Location loc = here();
    std::vector<std::string> results;
    if (peek() == '%') {
      do
        results.push_back(value_name());
      while (consume(','));
      expect('=');
    }
    ws();
    Location name_loc = here();
    std::string name = ident();
    if (name == "return")
      name = "func.return";
    else if (name == "module")
      name = "builtin.module";
    if (!ctx_.registry().lookup(name))
      throw Error(ErrorCode::UnknownOperation,
                  "operation '" + name + "' is not registered", name_loc);

    if (name == "arith.constant") {
      Number n = number();
      auto attrs = optional_attrs();
      expect(':');
      Type t = type();
      if (t.is_float())
        attrs["value"] = Attribute::real(
            t.kind() == TypeKind::F32 ? static_cast<float>(n.is_float ? n.f : n.i)
                                      : (n.is_float ? n.f : static_cast<double>(n.i)),
            t.kind());
      else if (!n.is_float)
        attrs["value"] = Attribute::integer(n.i);
      else
        attrs["value"] = Attribute::real(n.f, TypeKind::F64);
      emit(block, name, {}, {t}, std::move(attrs), 0, loc, results);
    } else if (name == "arith.cmpf" || name == "arith.cmpi") {
      std::string pred = ident();
      expect(',');
      auto ops = operand_list(':');
      auto attrs = optional_attrs();
      attrs["predicate"] = Attribute::string(pred);
      expect(':');
      type();
      emit(block, name, ops, {Type::i1()}, std::move(attrs), 0, loc, results);
    } else if (name == "arith.index_cast") {
      Value *v = operand();
      auto attrs = optional_attrs();
      expect(':');
      type();
      expect_kw("to");
      Type to = type();
      emit(block, name, {v}, {to}, std::move(attrs), 0, loc, results);
    } else if (kBinaryArith.count(name)) {
      auto ops = operand_list(':');
      auto attrs = optional_attrs();
      expect(':');
      Type t = type();
      emit(block, name, ops, {t}, std::move(attrs), 0, loc, results);
    } else if (name == "scf.for") {
      std::string iv = value_name();
      expect('=');
      Value *lb = operand();
      expect_kw("to");
      Value *ub = operand();
      expect_kw("step");
      Value *step = operand();
      auto attrs = optional_region_attrs();
      Operation &op = emit(block, name, {lb, ub, step}, {}, std::move(attrs), 1,
                           loc, results);
      Block &body = op.region(0).block();
      bind(iv, body.add_argument(Type::index()));
      parse_region_body(body);
    } else if (name == "affine.for") {
      std::string iv = value_name();
      expect('=');
      Number lb = number();
      expect_kw("to");
      Number ub = number();
      std::int64_t step = 1;
      if (try_kw("step")) {
        Number s = number();
        step = s.i;
        if (s.is_float)
          fail("affine.for step must be an integer");
      }
      if (lb.is_float || ub.is_float)
        fail("affine.for bounds must be integers");
      auto attrs = optional_region_attrs();
      attrs["lower_bound"] = Attribute::integer(lb.i);
      attrs["upper_bound"] = Attribute::integer(ub.i);
      attrs["step"] = Attribute::integer(step);
      Operation &op = emit(block, name, {}, {}, std::move(attrs), 1, loc, results);
      Block &body = op.region(0).block();
      bind(iv, body.add_argument(Type::index()));
      parse_region_body(body);
    } else if (name == "scf.if") {
      Value *cond = operand();
      auto attrs = optional_region_attrs();
      Operation &op = emit(block, name, {cond}, {}, std::move(attrs), 1, loc,
                           results);
      parse_region_body(op.region(0).block());
      if (peek_same_line() == 'e' && try_kw("else"))
        parse_region_body(op.add_region().add_block());
    } else if (name == "scf.parallel") {
      expect('(');
      std::vector<std::string> ivs;
      ws();
      if (peek() != ')') {
        do
          ivs.push_back(value_name());
        while (consume(','));
      }
      expect(')');
      expect('=');
      expect('(');
      auto lbs = operand_list(')');
      expect(')');
      expect_kw("to");
      expect('(');
      auto ubs = operand_list(')');
      expect(')');
      expect_kw("step");
      expect('(');
      auto steps = operand_list(')');
      expect(')');
      auto attrs = optional_region_attrs();
      std::vector<Value *> ops = lbs;
      ops.insert(ops.end(), ubs.begin(), ubs.end());
      ops.insert(ops.end(), steps.begin(), steps.end());
      Operation &op = emit(block, name, ops, {}, std::move(attrs), 1, loc,
                           results);
      Block &body = op.region(0).block();
      for (const auto &iv : ivs)
        bind(iv, body.add_argument(Type::index()));
      parse_region_body(body);
    } else if (name == "memref.alloc" || name == "memref.alloca") {
      expect('(');
      expect(')');
      auto attrs = optional_attrs();
      expect(':');
      Type t = type();
      emit(block, name, {}, {t}, std::move(attrs), 0, loc, results);
    } else if (name == "memref.dealloc") {
      Value *m = operand();
      auto attrs = optional_attrs();
      expect(':');
      type();
      emit(block, name, {m}, {}, std::move(attrs), 0, loc, results);
    } else if (name == "memref.load") {
      Value *m = operand();
      expect('[');
      auto idx = operand_list(']');
      expect(']');
      auto attrs = optional_attrs();
      expect(':');
      Type t = type();
      if (!t.is_memref())
        fail("memref.load expects a memref type");
      std::vector<Value *> ops{m};
      ops.insert(ops.end(), idx.begin(), idx.end());
      emit(block, name, ops, {t.element()}, std::move(attrs), 0, loc, results);
    } else if (name == "memref.store") {
      Value *v = operand();
      expect(',');
      Value *m = operand();
      expect('[');
      auto idx = operand_list(']');
      expect(']');
      auto attrs = optional_attrs();
      expect(':');
      type();
      std::vector<Value *> ops{v, m};
      ops.insert(ops.end(), idx.begin(), idx.end());
      emit(block, name, ops, {}, std::move(attrs), 0, loc, results);
    } else if (name == "func.func" || name == "gpu.func") {
      std::string sym = symbol_name();
      expect('(');
      std::vector<std::pair<std::string, Type>> params;
      ws();
      if (peek() != ')') {
        do {
          std::string n = value_name();
          expect(':');
          params.emplace_back(n, type());
        } while (consume(','));
      }
      expect(')');
      std::vector<Type> result_types;
      bool kernel = false;
      if (name == "func.func") {
        if (try_arrow())
          result_types = type_list_parens();
      } else {
        kernel = try_kw("kernel");
      }
      auto attrs = optional_region_attrs();
      attrs["sym_name"] = Attribute::string(sym);
      if (kernel)
        attrs["kernel"] = Attribute::unit();
      Operation &op = emit(block, name, {}, {}, std::move(attrs), 1, loc,
                           results);
      if (name == "func.func")
        set_func_result_types(op, result_types);
      scopes_.emplace_back();
      Block &entry = op.region(0).block();
      for (auto &[n, t] : params)
        bind(n, entry.add_argument(t));
      parse_region_body(entry);
      scopes_.pop_back();
    } else if (name == "func.return") {
      std::vector<Value *> ops;
      if (peek_same_line() == '%') {
        ops = operand_list(':');
        expect(':');
        for (std::size_t i = 0; i < ops.size(); ++i) {
          if (i)
            expect(',');
          type();
        }
      }
      auto attrs = optional_attrs();
      emit(block, name, ops, {}, std::move(attrs), 0, loc, results);
    } else if (name == "func.call") {
      auto callee = symbol_path();
      expect('(');
      auto ops = operand_list(')');
      expect(')');
      auto attrs = optional_attrs();
      attrs["callee"] = Attribute::symbol(callee);
      expect(':');
      type_list_parens();
      if (!try_arrow())
        fail("expected '->'");
      auto outs = type_list_parens();
      emit(block, name, ops, outs, std::move(attrs), 0, loc, results);
    } else if (name == "gpu.module" || name == "builtin.module") {
      std::string sym;
      if (name == "gpu.module")
        sym = symbol_name();
      auto attrs = optional_region_attrs();
      if (name == "gpu.module")
        attrs["sym_name"] = Attribute::string(sym);
      Operation &op = emit(block, name, {}, {}, std::move(attrs), 1, loc,
                           results);
      scopes_.emplace_back();
      parse_region_body(op.region(0).block());
      scopes_.pop_back();
    } else if (name == "gpu.block_id" || name == "gpu.thread_id") {
      std::string dim = ident();
      auto attrs = optional_attrs();
      attrs["dimension"] = Attribute::string(dim);
      emit(block, name, {}, {Type::index()}, std::move(attrs), 0, loc, results);
    } else if (name == "gpu.launch_func") {
      auto kernel = symbol_path();
      expect_kw("blocks");
      expect_kw("in");
      expect('(');
      auto grid = operand_list(')');
      expect(')');
      expect_kw("threads");
      expect_kw("in");
      expect('(');
      auto threads = operand_list(')');
      expect(')');
      expect_kw("args");
      expect('(');
      auto args = operand_list(')');
      expect(')');
      if (grid.size() != 3 || threads.size() != 3)
        fail("launch sizes need exactly three values each");
      auto attrs = optional_attrs();
      attrs["kernel"] = Attribute::symbol(kernel);
      std::vector<Value *> ops = grid;
      ops.insert(ops.end(), threads.begin(), threads.end());
      ops.insert(ops.end(), args.begin(), args.end());
      emit(block, name, ops, {}, std::move(attrs), 0, loc, results);
    } else if (kPlainTerminators.count(name)) {
      emit(block, name, {}, {}, optional_attrs(), 0, loc, results);
    } else {
      parse_generic(block, name, loc, results);
    }
  }

  void parse_generic(Block &block, const std::string &name, const Location &loc,
                     const std::vector<std::string> &results) {
    expect('(');
    auto ops = operand_list(')');
    expect(')');
    auto attrs = optional_attrs();
    expect(':');
    auto ins = type_list_parens();
    if (!try_arrow())
      fail("expected '->'");
    auto outs = type_list_parens();
    if (ins.size() != ops.size())
      fail("operand type count does not match operand count");
    std::size_t nregions = 0;
    {
      // Regions follow on the same line, each opened by `{`.
      std::size_t save = pos_;
      while (peek_same_line() == '{') {
        ws();
        skip_balanced();
        ++nregions;
      }
      pos_ = save;
    }
    Operation &op = emit(block, name, ops, outs, std::move(attrs), nregions,
                         loc, results);
    for (std::size_t r = 0; r < nregions; ++r) {
      Block &b = op.region(r).block();
      expect('{');
      if (peek_same_line() == '^') {
        ws();
        ++pos_;
        ident();
        expect('(');
        ws();
        if (peek() != ')') {
          do {
            std::string n = value_name();
            expect(':');
            bind(n, b.add_argument(type()));
          } while (consume(','));
        }
        expect(')');
        expect(':');
      }
      parse_block_ops(b);
    }
  }

  void skip_balanced() {
    int depth = 0;
    bool in_str = false;
    do {
      if (pos_ >= src_.size())
        fail("unbalanced braces");
      char c = src_[pos_++];
      if (in_str) {
        if (c == '\\')
          ++pos_;
        else if (c == '"')
          in_str = false;
      } else if (c == '"') {
        in_str = true;
      } else if (c == '{') {
        ++depth;
      } else if (c == '}') {
        --depth;
      }
    } while (depth > 0);
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  Context &ctx_;
  std::string file_;
  std::vector<Scope> scopes_;
  std::size_t mark_pos_ = 0;
  int mark_line_ = 1, mark_col_ = 1;
};

} // namespace

Operation &parse_module(std::string_view text, Context &ctx,
                        const std::string &filename) {
  Parser p(text, ctx, filename);
  return ctx.adopt_module(p.parse_top());
}

} // namespace staircase
