#pragma once

// Syntax tree of the host language: an indentation-structured subset of
// Python. Every node records the line and column it came from.

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace staircase::host {

struct Expr;
struct Stmt;
using ExprPtr = std::shared_ptr<Expr>;
using StmtPtr = std::shared_ptr<Stmt>;

enum class ExprKind {
  Name,
  Int,
  Float,
  Str,
  True,
  False,
  None,
  BinOp,   // op in `id`: + - * / // %
  UnaryOp, // op in `id`: - + not
  Compare, // ops in `ops`, operands in `elts` (left first)
  BoolOp,  // op in `id`: and / or
  Call,    // callee in `value`, positional args in `elts`
  Attribute,
  Subscript, // base in `value`, index in `slice`
  Tuple,
  List,
  Dict, // keys and values interleaved in `elts`
  Lambda,
  Comprehension,
  IfExp,
};

struct Keyword {
  std::string name;
  ExprPtr value;
};

struct Expr {
  ExprKind kind;
  int line = 0;
  int col = 0;
  std::string id;
  std::int64_t ival = 0;
  double fval = 0.0;
  std::string text; // literal spelling for Int/Float
  std::vector<ExprPtr> elts;
  std::vector<std::string> ops;
  std::vector<Keyword> keywords;
  ExprPtr value;
  ExprPtr slice;
};

enum class StmtKind {
  FunctionDef,
  ClassDef,
  Assign,
  AugAssign,
  ExprStmt,
  If,
  For,
  While,
  Return,
  Pass,
  Break,
  Continue,
  With,
  Try,
  Import,
  Global,
};

struct Param {
  std::string name;
  ExprPtr annotation; // may be null
  int line = 0;
};

struct Stmt {
  StmtKind kind;
  int line = 0;
  int col = 0;
  std::string name; // def/class name, augmented operator
  std::vector<Param> params;
  std::vector<ExprPtr> decorators;
  std::vector<ExprPtr> bases;
  /// Assign: chained targets. For: loop target. AugAssign: the target.
  std::vector<ExprPtr> targets;
  /// Assigned value, expression, return value, if/while test, for iterable.
  ExprPtr value;
  std::vector<StmtPtr> body;
  std::vector<StmtPtr> orelse;
  /// Last source line spanned by this statement.
  int end_line = 0;
};

struct Module {
  std::string filename;
  std::vector<StmtPtr> body;
};

/// Parses a host source file. Throws Error(SyntaxError) with the location.
Module parse(std::string_view source, const std::string &filename);

ExprPtr clone(const ExprPtr &e);
StmtPtr clone(const StmtPtr &s);

/// Re-emits host source (four-space indentation) for a statement list.
std::string unparse(const std::vector<StmtPtr> &body, int indent = 0);
std::string unparse(const StmtPtr &stmt, int indent = 0);
std::string unparse(const ExprPtr &expr);

} // namespace staircase::host
