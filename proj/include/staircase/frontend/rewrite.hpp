#pragma once

// Source-level rewrite of a captured function: region-boundary markers are
// inserted around every loop and conditional.

#include "staircase/frontend/ast.hpp"

namespace staircase::host {

struct RewriteOptions {
  /// Loops over range(...) become affine_range instead of scf_range.
  bool affine = false;
  /// Emit conditionals as straight-line code (both arms back to back) instead
  /// of keeping the `if` for the executable rewrite to remove.
  bool flatten_ifs = false;
};

/// Throws UnsupportedConstruct (with the offending line) for anything the
/// capture cannot express: while, try, with, comprehensions, lambdas,
/// conditional expressions, break/continue, early return, nested def/class,
/// import, global, for-else, and/or, chained comparisons.
void check_supported(const Stmt &def, const std::string &filename);

/// Returns a rewritten deep copy of the function definition `def`.
StmtPtr rewrite_ast(const Stmt &def, const RewriteOptions &opts = {});

} // namespace staircase::host
