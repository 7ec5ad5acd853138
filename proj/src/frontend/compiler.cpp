#include "staircase/frontend/bytecode.hpp"

#include "staircase/error.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

namespace staircase::host {

const char *opcode_name(Opcode op) {
  switch (op) {
#define X(n)                                                                   \
  case Opcode::n:                                                              \
    return #n;
    X(NOP) X(POP_TOP) X(DUP_TOP) X(ROT_TWO) X(LOAD_CONST) X(LOAD_FAST)
    X(STORE_FAST) X(LOAD_GLOBAL) X(LOAD_NAME) X(STORE_NAME) X(LOAD_ATTR)
    X(BINARY_SUBSCR) X(STORE_SUBSCR) X(AUG_SUBSCR) X(BINARY_OP)
    X(UNARY_NEGATIVE) X(UNARY_NOT) X(COMPARE_OP) X(BUILD_TUPLE) X(BUILD_LIST)
    X(BUILD_MAP) X(UNPACK_SEQUENCE) X(CALL_FUNCTION) X(CALL_FUNCTION_KW)
    X(GET_ITER) X(FOR_ITER) X(JUMP_FORWARD) X(JUMP_ABSOLUTE)
    X(POP_JUMP_IF_FALSE) X(RETURN_VALUE) X(MAKE_FUNCTION) X(MAKE_CLASS)
#undef X
  }
  return "?";
}

int CodeObject::line_at(std::size_t index) const {
  int line = first_line;
  for (const auto &[start, l] : line_table) {
    if (start > index)
      break;
    line = l;
  }
  return line;
}

namespace {

const char *kBinaryOps[] = {"+", "-", "*", "/", "//", "%", "**"};
const char *kCompareOps[] = {"<", "<=", ">", ">=", "==", "!="};

class Compiler {
public:
  Compiler(CodeObject &co, std::string file) : co_(co), file_(std::move(file)) {}

  void declare_locals(const StmtPtr &def) {
    for (const auto &p : def->params)
      local_index(p.name);
    collect_assigned(def->body);
  }

  void body(const std::vector<StmtPtr> &stmts) {
    for (const auto &s : stmts)
      stmt(*s);
  }

  void finish(int line) {
    line_ = line;
    emit(Opcode::LOAD_CONST, add_const(std::monostate{}));
    emit(Opcode::RETURN_VALUE);
  }

private:
  [[noreturn]] void unsupported(const std::string &what, int line) {
    throw Error(ErrorCode::UnsupportedConstruct, what + " is not supported",
                Location{file_, line, 0});
  }

  bool function_scope() const { return co_.kind == CodeKind::Function; }

  int local_index(const std::string &n) {
    auto it = std::find(co_.varnames.begin(), co_.varnames.end(), n);
    if (it != co_.varnames.end())
      return static_cast<int>(it - co_.varnames.begin());
    co_.varnames.push_back(n);
    return static_cast<int>(co_.varnames.size() - 1);
  }

  bool is_local(const std::string &n) const {
    return std::find(co_.varnames.begin(), co_.varnames.end(), n) !=
           co_.varnames.end();
  }

  void collect_target(const ExprPtr &t) {
    if (t->kind == ExprKind::Name)
      local_index(t->id);
    else if (t->kind == ExprKind::Tuple || t->kind == ExprKind::List)
      for (const auto &e : t->elts)
        collect_target(e);
  }

  void collect_assigned(const std::vector<StmtPtr> &stmts) {
    for (const auto &s : stmts) {
      if (s->kind == StmtKind::Assign || s->kind == StmtKind::AugAssign ||
          s->kind == StmtKind::For)
        for (const auto &t : s->targets)
          collect_target(t);
      collect_assigned(s->body);
      collect_assigned(s->orelse);
    }
  }

  int add_const(Const c) {
    co_.consts.push_back(std::move(c));
    return static_cast<int>(co_.consts.size() - 1);
  }

  int add_name(const std::string &n) {
    auto it = std::find(co_.names.begin(), co_.names.end(), n);
    if (it != co_.names.end())
      return static_cast<int>(it - co_.names.begin());
    co_.names.push_back(n);
    return static_cast<int>(co_.names.size() - 1);
  }

  std::size_t emit(Opcode op, int arg = 0) {
    if (co_.line_table.empty() || co_.line_table.back().second != line_) {
      if (!co_.line_table.empty() &&
          co_.line_table.back().first == co_.code.size())
        co_.line_table.back().second = line_;
      else
        co_.line_table.emplace_back(co_.code.size(), line_);
    }
    co_.code.push_back(Instr{op, arg});
    return co_.code.size() - 1;
  }

  void patch(std::size_t at) { co_.code[at].arg = static_cast<int>(co_.code.size()); }

  void load_name(const std::string &n) {
    if (function_scope()) {
      if (is_local(n))
        emit(Opcode::LOAD_FAST, local_index(n));
      else
        emit(Opcode::LOAD_GLOBAL, add_name(n));
    } else {
      emit(Opcode::LOAD_NAME, add_name(n));
    }
  }

  void store_name(const std::string &n) {
    if (function_scope())
      emit(Opcode::STORE_FAST, local_index(n));
    else
      emit(Opcode::STORE_NAME, add_name(n));
  }

  void store_target(const ExprPtr &t) {
    switch (t->kind) {
    case ExprKind::Name:
      store_name(t->id);
      return;
    case ExprKind::Tuple:
    case ExprKind::List:
      emit(Opcode::UNPACK_SEQUENCE, static_cast<int>(t->elts.size()));
      for (const auto &e : t->elts)
        store_target(e);
      return;
    case ExprKind::Subscript:
      expr(t->value);
      expr(t->slice);
      emit(Opcode::STORE_SUBSCR);
      return;
    default:
      unsupported("assignment to this target", t->line);
    }
  }

  void stmt(const Stmt &s) {
    line_ = s.line;
    switch (s.kind) {
    case StmtKind::FunctionDef: {
      if (function_scope())
        unsupported("nested function definition", s.line);
      for (const auto &d : s.decorators)
        expr(d);
      line_ = s.line;
      for (const auto &p : s.params) {
        if (p.annotation)
          expr(p.annotation);
        else
          emit(Opcode::LOAD_CONST, add_const(std::monostate{}));
      }
      emit(Opcode::BUILD_TUPLE, static_cast<int>(s.params.size()));
      auto def = std::make_shared<Stmt>(s);
      def->decorators.clear();
      CodePtr fn;
      try {
        fn = compile_function(def, file_);
      } catch (const Error &e) {
        if (e.code() != ErrorCode::UnsupportedConstruct)
          throw;
        // Still capturable: the capture checks and rewrites the source.
        fn = std::make_shared<CodeObject>();
        fn->kind = CodeKind::Function;
        fn->name = s.name;
        fn->filename = file_;
        fn->first_line = s.line;
        fn->argcount = s.params.size();
        fn->def = def;
      }
      emit(Opcode::LOAD_CONST, add_const(fn));
      emit(Opcode::MAKE_FUNCTION);
      for (std::size_t i = 0; i < s.decorators.size(); ++i)
        emit(Opcode::CALL_FUNCTION, 1);
      store_name(s.name);
      return;
    }
    case StmtKind::ClassDef: {
      if (function_scope())
        unsupported("nested class definition", s.line);
      if (!s.decorators.empty())
        unsupported("class decorator", s.line);
      for (const auto &b : s.bases)
        expr(b);
      auto cls = std::make_shared<CodeObject>();
      cls->kind = CodeKind::ClassBody;
      cls->name = s.name;
      cls->filename = file_;
      cls->first_line = s.line;
      Compiler inner(*cls, file_);
      inner.body(s.body);
      inner.finish(s.end_line);
      line_ = s.line;
      emit(Opcode::LOAD_CONST, add_const(cls));
      emit(Opcode::MAKE_CLASS, static_cast<int>(s.bases.size()));
      store_name(s.name);
      return;
    }
    case StmtKind::Assign:
      expr(s.value);
      for (std::size_t i = 0; i < s.targets.size(); ++i) {
        if (i + 1 < s.targets.size())
          emit(Opcode::DUP_TOP);
        store_target(s.targets[i]);
      }
      return;
    case StmtKind::AugAssign: {
      const ExprPtr &t = s.targets[0];
      int op = binary_op(s.name, s.line);
      if (t->kind == ExprKind::Name) {
        load_name(t->id);
        expr(s.value);
        emit(Opcode::BINARY_OP, op);
        store_name(t->id);
      } else if (t->kind == ExprKind::Subscript) {
        // Right-hand side first: `x[i] += a * b` computes the product
        // before loading x[i].
        expr(s.value);
        expr(t->value);
        expr(t->slice);
        emit(Opcode::AUG_SUBSCR, op);
      } else {
        unsupported("augmented assignment to this target", s.line);
      }
      return;
    }
    case StmtKind::ExprStmt:
      expr(s.value);
      emit(Opcode::POP_TOP);
      return;
    case StmtKind::If: {
      expr(s.value);
      line_ = s.line;
      std::size_t jump = emit(Opcode::POP_JUMP_IF_FALSE);
      body(s.body);
      if (s.orelse.empty()) {
        patch(jump);
        return;
      }
      line_ = s.line;
      std::size_t skip = emit(Opcode::JUMP_FORWARD);
      patch(jump);
      body(s.orelse);
      patch(skip);
      return;
    }
    case StmtKind::For: {
      if (!s.orelse.empty())
        unsupported("for-else", s.line);
      expr(s.value);
      line_ = s.line;
      emit(Opcode::GET_ITER);
      std::size_t head = emit(Opcode::FOR_ITER);
      store_target(s.targets[0]);
      body(s.body);
      line_ = s.line;
      emit(Opcode::JUMP_ABSOLUTE, static_cast<int>(head));
      patch(head);
      return;
    }
    case StmtKind::Return:
      if (co_.kind != CodeKind::Function)
        throw Error(ErrorCode::SyntaxError, "'return' outside function",
                    Location{file_, s.line, s.col});
      if (s.value)
        expr(s.value);
      else
        emit(Opcode::LOAD_CONST, add_const(std::monostate{}));
      emit(Opcode::RETURN_VALUE);
      return;
    case StmtKind::Pass:
      return;
    case StmtKind::Import:
      if (function_scope())
        unsupported("import", s.line);
      return; // module-level imports are accepted and ignored
    case StmtKind::While:
      unsupported("while loop", s.line);
    case StmtKind::Break:
      unsupported("break", s.line);
    case StmtKind::Continue:
      unsupported("continue", s.line);
    case StmtKind::With:
      unsupported("with statement", s.line);
    case StmtKind::Try:
      unsupported("try statement", s.line);
    case StmtKind::Global:
      unsupported("global declaration", s.line);
    }
  }

  int binary_op(const std::string &op, int line) {
    for (int i = 0; i < 7; ++i)
      if (op == kBinaryOps[i])
        return i;
    unsupported("operator '" + op + "'", line);
  }

  void expr(const ExprPtr &e) {
    switch (e->kind) {
    case ExprKind::Name:
      load_name(e->id);
      return;
    case ExprKind::Int:
      emit(Opcode::LOAD_CONST, add_const(e->ival));
      return;
    case ExprKind::Float:
      emit(Opcode::LOAD_CONST, add_const(e->fval));
      return;
    case ExprKind::Str:
      emit(Opcode::LOAD_CONST, add_const(e->id));
      return;
    case ExprKind::True:
      emit(Opcode::LOAD_CONST, add_const(true));
      return;
    case ExprKind::False:
      emit(Opcode::LOAD_CONST, add_const(false));
      return;
    case ExprKind::None:
      emit(Opcode::LOAD_CONST, add_const(std::monostate{}));
      return;
    case ExprKind::BinOp:
      expr(e->elts[0]);
      expr(e->elts[1]);
      emit(Opcode::BINARY_OP, binary_op(e->id, e->line));
      return;
    case ExprKind::UnaryOp:
      expr(e->value);
      if (e->id == "-")
        emit(Opcode::UNARY_NEGATIVE);
      else if (e->id == "not")
        emit(Opcode::UNARY_NOT);
      return;
    case ExprKind::Compare: {
      if (e->ops.size() != 1)
        unsupported("chained comparison", e->line);
      int op = -1;
      for (int i = 0; i < 6; ++i)
        if (e->ops[0] == kCompareOps[i])
          op = i;
      if (op < 0)
        unsupported("comparison '" + e->ops[0] + "'", e->line);
      expr(e->elts[0]);
      expr(e->elts[1]);
      emit(Opcode::COMPARE_OP, op);
      return;
    }
    case ExprKind::Call: {
      expr(e->value);
      for (const auto &a : e->elts)
        expr(a);
      if (e->keywords.empty()) {
        emit(Opcode::CALL_FUNCTION, static_cast<int>(e->elts.size()));
        return;
      }
      std::vector<std::string> names;
      for (const auto &k : e->keywords) {
        expr(k.value);
        names.push_back(k.name);
      }
      emit(Opcode::LOAD_CONST, add_const(names));
      emit(Opcode::CALL_FUNCTION_KW,
           static_cast<int>(e->elts.size() + e->keywords.size()));
      return;
    }
    case ExprKind::Attribute:
      expr(e->value);
      emit(Opcode::LOAD_ATTR, add_name(e->id));
      return;
    case ExprKind::Subscript:
      expr(e->value);
      expr(e->slice);
      emit(Opcode::BINARY_SUBSCR);
      return;
    case ExprKind::Tuple:
    case ExprKind::List:
      for (const auto &x : e->elts)
        expr(x);
      emit(e->kind == ExprKind::Tuple ? Opcode::BUILD_TUPLE : Opcode::BUILD_LIST,
           static_cast<int>(e->elts.size()));
      return;
    case ExprKind::Dict:
      for (const auto &x : e->elts)
        expr(x);
      emit(Opcode::BUILD_MAP, static_cast<int>(e->elts.size() / 2));
      return;
    case ExprKind::BoolOp:
      unsupported("'" + e->id + "'", e->line);
    case ExprKind::Lambda:
      unsupported("lambda", e->line);
    case ExprKind::Comprehension:
      unsupported("comprehension", e->line);
    case ExprKind::IfExp:
      unsupported("conditional expression", e->line);
    }
  }

  CodeObject &co_;
  std::string file_;
  int line_ = 1;
};

} // namespace

CodePtr compile_module(const Module &module) {
  auto co = std::make_shared<CodeObject>();
  co->kind = CodeKind::Module;
  co->name = "<module>";
  co->filename = module.filename;
  Compiler c(*co, module.filename);
  c.body(module.body);
  c.finish(module.body.empty() ? 1 : module.body.back()->end_line);
  return co;
}

CodePtr compile_function(const StmtPtr &def, const std::string &filename) {
  auto co = std::make_shared<CodeObject>();
  co->kind = CodeKind::Function;
  co->name = def->name;
  co->filename = filename;
  co->first_line = def->line;
  co->argcount = def->params.size();
  co->def = def;
  Compiler c(*co, filename);
  c.declare_locals(def);
  c.body(def->body);
  c.finish(def->end_line);
  return co;
}

//===----------------------------------------------------------------------===//
// Stack accounting
//===----------------------------------------------------------------------===//

int stack_pops(const Instr &ins) {
  switch (ins.op) {
  case Opcode::NOP:
  case Opcode::LOAD_CONST:
  case Opcode::LOAD_FAST:
  case Opcode::LOAD_GLOBAL:
  case Opcode::LOAD_NAME:
  case Opcode::JUMP_FORWARD:
  case Opcode::JUMP_ABSOLUTE:
    return 0;
  case Opcode::POP_TOP:
  case Opcode::DUP_TOP:
  case Opcode::STORE_FAST:
  case Opcode::STORE_NAME:
  case Opcode::LOAD_ATTR:
  case Opcode::UNARY_NEGATIVE:
  case Opcode::UNARY_NOT:
  case Opcode::UNPACK_SEQUENCE:
  case Opcode::GET_ITER:
  case Opcode::FOR_ITER:
  case Opcode::POP_JUMP_IF_FALSE:
  case Opcode::RETURN_VALUE:
    return 1;
  case Opcode::ROT_TWO:
  case Opcode::BINARY_SUBSCR:
  case Opcode::BINARY_OP:
  case Opcode::COMPARE_OP:
  case Opcode::MAKE_FUNCTION:
    return 2;
  case Opcode::STORE_SUBSCR:
  case Opcode::AUG_SUBSCR:
    return 3;
  case Opcode::BUILD_TUPLE:
  case Opcode::BUILD_LIST:
    return ins.arg;
  case Opcode::BUILD_MAP:
    return 2 * ins.arg;
  case Opcode::CALL_FUNCTION:
  case Opcode::MAKE_CLASS:
    return ins.arg + 1;
  case Opcode::CALL_FUNCTION_KW:
    return ins.arg + 2;
  }
  return 0;
}

namespace {

int stack_pushes(const Instr &ins) {
  switch (ins.op) {
  case Opcode::NOP:
  case Opcode::JUMP_FORWARD:
  case Opcode::JUMP_ABSOLUTE:
  case Opcode::POP_TOP:
  case Opcode::STORE_FAST:
  case Opcode::STORE_NAME:
  case Opcode::STORE_SUBSCR:
  case Opcode::AUG_SUBSCR:
  case Opcode::POP_JUMP_IF_FALSE:
  case Opcode::RETURN_VALUE:
    return 0;
  case Opcode::DUP_TOP:
  case Opcode::ROT_TWO:
  case Opcode::FOR_ITER: // fall-through path; the exit path pops the iterator
    return 2;
  case Opcode::UNPACK_SEQUENCE:
    return ins.arg;
  default:
    return 1;
  }
}

} // namespace

int stack_effect(const Instr &ins) { return stack_pushes(ins) - stack_pops(ins); }

int verify_stack(const CodeObject &code) {
  const std::size_t n = code.code.size();
  std::vector<int> depth(n, -1);
  std::vector<std::size_t> work;
  int max_depth = 0;
  auto reach = [&](std::size_t at, int d) {
    if (at >= n || d < 0)
      return false;
    if (depth[at] == -1) {
      depth[at] = d;
      work.push_back(at);
      return true;
    }
    return depth[at] == d;
  };
  if (n == 0)
    return 0;
  depth[0] = 0;
  work.push_back(0);
  while (!work.empty()) {
    std::size_t i = work.back();
    work.pop_back();
    const Instr &ins = code.code[i];
    int d = depth[i];
    if (d < stack_pops(ins))
      return -1;
    int after = d + stack_effect(ins);
    max_depth = std::max(max_depth, after);
    bool ok = true;
    switch (ins.op) {
    case Opcode::RETURN_VALUE:
      break;
    case Opcode::JUMP_FORWARD:
    case Opcode::JUMP_ABSOLUTE:
      ok = reach(static_cast<std::size_t>(ins.arg), after);
      break;
    case Opcode::POP_JUMP_IF_FALSE:
      ok = reach(i + 1, after) && reach(static_cast<std::size_t>(ins.arg), after);
      break;
    case Opcode::FOR_ITER:
      ok = reach(i + 1, after) &&
           reach(static_cast<std::size_t>(ins.arg), d - 1);
      break;
    default:
      ok = reach(i + 1, after);
    }
    if (!ok)
      return -1;
  }
  return max_depth;
}

int elide_conditional_jumps(CodeObject &code) {
  auto &ins = code.code;
  int rewritten = 0;
  for (std::size_t j = 1; j < ins.size(); ++j) {
    if (ins[j].op != Opcode::POP_JUMP_IF_FALSE ||
        ins[j - 1].op != Opcode::CALL_FUNCTION)
      continue;
    // Walk back over the call's arguments to the instruction that pushed
    // the callee.
    int need = ins[j - 1].arg + 1;
    std::size_t k = j - 1;
    bool found = false;
    while (k-- > 0) {
      int pushes = stack_pushes(ins[k]);
      if (pushes >= need) {
        found = true;
        break;
      }
      need = need - pushes + stack_pops(ins[k]);
    }
    if (!found)
      continue;
    Opcode loader = ins[k].op;
    const std::string *callee = nullptr;
    if (loader == Opcode::LOAD_GLOBAL || loader == Opcode::LOAD_NAME)
      callee = &code.names[static_cast<std::size_t>(ins[k].arg)];
    if (!callee || *callee != "scf_if")
      continue;
    auto target = static_cast<std::size_t>(ins[j].arg);
    ins[j] = Instr{Opcode::POP_TOP, 0};
    if (target > 0 && ins[target - 1].op == Opcode::JUMP_FORWARD &&
        static_cast<std::size_t>(ins[target - 1].arg) >= target)
      ins[target - 1] = Instr{Opcode::NOP, 0};
    ++rewritten;
  }
  if (verify_stack(code) < 0)
    throw Error(ErrorCode::RewriteUnsupported,
                "jump elision left '" + code.name +
                    "' with an inconsistent operand stack",
                Location{code.filename, code.first_line, 0});
  return rewritten;
}

//===----------------------------------------------------------------------===//
// Disassembly
//===----------------------------------------------------------------------===//

namespace {

std::string const_repr(const Const &c) {
  struct V {
    std::string operator()(std::monostate) const { return "None"; }
    std::string operator()(bool b) const { return b ? "True" : "False"; }
    std::string operator()(std::int64_t i) const { return std::to_string(i); }
    std::string operator()(double d) const {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.17g", d);
      std::string s = buf;
      if (s.find_first_of(".eni") == std::string::npos)
        s += ".0";
      return s;
    }
    std::string operator()(const std::string &s) const { return "'" + s + "'"; }
    std::string operator()(const CodePtr &c) const {
      return "<code " + c->name + ">";
    }
    std::string operator()(const std::vector<std::string> &names) const {
      std::string s = "(";
      for (std::size_t i = 0; i < names.size(); ++i)
        s += (i ? ", '" : "'") + names[i] + "'";
      return s + ")";
    }
  };
  return std::visit(V{}, c);
}

} // namespace

std::string disassemble(const CodeObject &code) {
  std::string out;
  std::size_t run = 0;
  for (std::size_t i = 0; i < code.code.size(); ++i) {
    const Instr &ins = code.code[i];
    char line[16] = "";
    if (run < code.line_table.size() && code.line_table[run].first == i) {
      std::snprintf(line, sizeof line, "%d", code.line_table[run].second);
      ++run;
    }
    std::string arg;
    std::string repr;
    switch (ins.op) {
    case Opcode::LOAD_CONST:
      arg = std::to_string(ins.arg);
      repr = const_repr(code.consts[static_cast<std::size_t>(ins.arg)]);
      break;
    case Opcode::LOAD_FAST:
    case Opcode::STORE_FAST:
      arg = std::to_string(ins.arg);
      repr = code.varnames[static_cast<std::size_t>(ins.arg)];
      break;
    case Opcode::LOAD_GLOBAL:
    case Opcode::LOAD_NAME:
    case Opcode::STORE_NAME:
    case Opcode::LOAD_ATTR:
      arg = std::to_string(ins.arg);
      repr = code.names[static_cast<std::size_t>(ins.arg)];
      break;
    case Opcode::BINARY_OP:
    case Opcode::AUG_SUBSCR:
      arg = std::to_string(ins.arg);
      repr = kBinaryOps[ins.arg];
      break;
    case Opcode::COMPARE_OP:
      arg = std::to_string(ins.arg);
      repr = kCompareOps[ins.arg];
      break;
    case Opcode::FOR_ITER:
    case Opcode::JUMP_FORWARD:
    case Opcode::JUMP_ABSOLUTE:
    case Opcode::POP_JUMP_IF_FALSE:
      arg = std::to_string(ins.arg * 2);
      repr = "to " + std::to_string(ins.arg * 2);
      break;
    case Opcode::BUILD_TUPLE:
    case Opcode::BUILD_LIST:
    case Opcode::BUILD_MAP:
    case Opcode::UNPACK_SEQUENCE:
    case Opcode::CALL_FUNCTION:
    case Opcode::CALL_FUNCTION_KW:
    case Opcode::MAKE_CLASS:
      arg = std::to_string(ins.arg);
      break;
    default:
      break;
    }
    char buf[160];
    std::snprintf(buf, sizeof buf, "%4s %6zu %-20s %4s", line, i * 2,
                  opcode_name(ins.op), arg.c_str());
    std::string row = buf;
    if (!repr.empty())
      row += " (" + repr + ")";
    while (!row.empty() && row.back() == ' ')
      row.pop_back();
    out += row + "\n";
  }
  return out;
}

} // namespace staircase::host
