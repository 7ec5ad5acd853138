#pragma once

// Textual form of the IR (".sir"). The printer is deterministic and the
// parser accepts exactly what the printer emits.

#include "staircase/ir.hpp"

#include <string>
#include <string_view>

namespace staircase {

/// Prints `op` (normally a builtin.module) with a trailing newline.
std::string print_module(const Operation &op);

/// Parses a single top-level `module`. The result is owned by `ctx`.
/// Syntax only: run verify() afterwards. Throws SyntaxError with the
/// offending line and column, or UnknownOperation.
Operation &parse_module(std::string_view text, Context &ctx,
                        const std::string &filename = "<input>");

/// Same op names, attributes, types, region shapes and operand wiring.
/// Locations and value ids are ignored.
bool structurally_equal(const Operation &a, const Operation &b);

} // namespace staircase
