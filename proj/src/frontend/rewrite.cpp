#include "staircase/frontend/rewrite.hpp"

#include "staircase/error.hpp"

namespace staircase::host {

namespace {

[[noreturn]] void unsupported(const std::string &what, int line,
                              const std::string &file) {
  throw Error(ErrorCode::UnsupportedConstruct,
              what + " is not supported in a captured function",
              Location{file, line, 0});
}

void check_expr(const ExprPtr &e, const std::string &file) {
  if (!e)
    return;
  switch (e->kind) {
  case ExprKind::Lambda:
    unsupported("lambda", e->line, file);
  case ExprKind::Comprehension:
    unsupported("comprehension", e->line, file);
  case ExprKind::IfExp:
    unsupported("conditional expression", e->line, file);
  case ExprKind::BoolOp:
    unsupported("'" + e->id + "'", e->line, file);
  case ExprKind::Compare:
    if (e->ops.size() > 1)
      unsupported("chained comparison", e->line, file);
    break;
  default:
    break;
  }
  for (const auto &x : e->elts)
    check_expr(x, file);
  for (const auto &k : e->keywords)
    check_expr(k.value, file);
  check_expr(e->value, file);
  check_expr(e->slice, file);
}

void check_body(const std::vector<StmtPtr> &body, bool top,
                const std::string &file) {
  for (std::size_t i = 0; i < body.size(); ++i) {
    const Stmt &s = *body[i];
    switch (s.kind) {
    case StmtKind::While:
      unsupported("while loop", s.line, file);
    case StmtKind::Try:
      unsupported("try statement", s.line, file);
    case StmtKind::With:
      unsupported("with statement", s.line, file);
    case StmtKind::Break:
      unsupported("break", s.line, file);
    case StmtKind::Continue:
      unsupported("continue", s.line, file);
    case StmtKind::Import:
      unsupported("import", s.line, file);
    case StmtKind::Global:
      unsupported("global declaration", s.line, file);
    case StmtKind::FunctionDef:
      unsupported("nested function definition", s.line, file);
    case StmtKind::ClassDef:
      unsupported("nested class definition", s.line, file);
    case StmtKind::Return:
      if (!top || i + 1 != body.size())
        unsupported("early return", s.line, file);
      break;
    case StmtKind::For:
      if (!s.orelse.empty())
        unsupported("for-else", s.line, file);
      break;
    default:
      break;
    }
    for (const auto &t : s.targets)
      check_expr(t, file);
    check_expr(s.value, file);
    check_body(s.body, false, file);
    check_body(s.orelse, false, file);
  }
}

ExprPtr name(const std::string &id, int line, int col) {
  auto e = std::make_shared<Expr>();
  e->kind = ExprKind::Name;
  e->id = id;
  e->line = line;
  e->col = col;
  return e;
}

ExprPtr call(const std::string &fn, std::vector<ExprPtr> args, int line,
             int col) {
  auto e = std::make_shared<Expr>();
  e->kind = ExprKind::Call;
  e->value = name(fn, line, col);
  e->elts = std::move(args);
  e->line = line;
  e->col = col;
  return e;
}

StmtPtr marker(const std::string &fn, int line, int col) {
  auto s = std::make_shared<Stmt>();
  s->kind = StmtKind::ExprStmt;
  s->value = call(fn, {}, line, col);
  s->line = line;
  s->col = col;
  s->end_line = line;
  return s;
}

bool is_call_to(const ExprPtr &e, std::string_view fn) {
  return e && e->kind == ExprKind::Call && e->value->kind == ExprKind::Name &&
         e->value->id == fn;
}

std::vector<StmtPtr> rewrite_body(const std::vector<StmtPtr> &body,
                                  const RewriteOptions &opts);

void rewrite_stmt(const StmtPtr &s, std::vector<StmtPtr> &out,
                  const RewriteOptions &opts) {
  if (s->kind == StmtKind::For) {
    auto loop = s;
    loop->body = rewrite_body(s->body, opts);
    std::string end;
    if (is_call_to(s->value, "range")) {
      s->value->value->id = opts.affine ? "affine_range" : "scf_range";
      end = opts.affine ? "affine_endfor" : "scf_endfor";
    } else if (is_call_to(s->value, "parallel")) {
      s->value->value->id = "scf_parallel";
      end = "scf_endparallel";
    }
    if (!end.empty())
      loop->body.push_back(marker(end, s->line, s->col));
    out.push_back(loop);
    return;
  }
  if (s->kind == StmtKind::If) {
    auto then_body = rewrite_body(s->body, opts);
    then_body.push_back(marker("scf_endif_branch", s->line, s->col));
    std::vector<StmtPtr> else_body;
    if (!s->orelse.empty()) {
      else_body.push_back(marker("scf_else", s->line, s->col));
      auto rest = rewrite_body(s->orelse, opts);
      else_body.insert(else_body.end(), rest.begin(), rest.end());
      else_body.push_back(marker("scf_endif_branch", s->line, s->col));
    }
    ExprPtr test = call("scf_if", {s->value}, s->value->line, s->value->col);
    if (opts.flatten_ifs) {
      auto open = std::make_shared<Stmt>();
      open->kind = StmtKind::ExprStmt;
      open->value = test;
      open->line = s->line;
      open->col = s->col;
      open->end_line = s->line;
      out.push_back(open);
      out.insert(out.end(), then_body.begin(), then_body.end());
      out.insert(out.end(), else_body.begin(), else_body.end());
    } else {
      s->value = test;
      s->body = std::move(then_body);
      s->orelse = std::move(else_body);
      out.push_back(s);
    }
    out.push_back(marker("scf_endif", s->line, s->col));
    return;
  }
  out.push_back(s);
}

std::vector<StmtPtr> rewrite_body(const std::vector<StmtPtr> &body,
                                  const RewriteOptions &opts) {
  std::vector<StmtPtr> out;
  for (const auto &s : body)
    rewrite_stmt(s, out, opts);
  return out;
}

} // namespace

void check_supported(const Stmt &def, const std::string &filename) {
  for (const auto &p : def.params)
    check_expr(p.annotation, filename);
  check_body(def.body, true, filename);
}

StmtPtr rewrite_ast(const Stmt &def, const RewriteOptions &opts) {
  StmtPtr copy = clone(std::make_shared<Stmt>(def));
  copy->body = rewrite_body(copy->body, opts);
  return copy;
}

} // namespace staircase::host
