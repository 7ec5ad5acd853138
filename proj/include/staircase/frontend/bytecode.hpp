#pragma once

// Stack-machine code for the host language. Instructions are fixed width
// (two bytes each when displayed), jump arguments are absolute instruction
// indices, and a run-length table maps instructions back to source lines.

#include "staircase/frontend/ast.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <variant>
#include <vector>

namespace staircase::host {

enum class Opcode : std::uint8_t {
  NOP,
  POP_TOP,
  DUP_TOP,
  ROT_TWO,
  LOAD_CONST,
  LOAD_FAST,
  STORE_FAST,
  LOAD_GLOBAL,
  LOAD_NAME,
  STORE_NAME,
  LOAD_ATTR,
  BINARY_SUBSCR,
  STORE_SUBSCR,
  AUG_SUBSCR, // arg: BinaryOp
  BINARY_OP,  // arg: BinaryOp
  UNARY_NEGATIVE,
  UNARY_NOT,
  COMPARE_OP, // arg: CompareOp
  BUILD_TUPLE,
  BUILD_LIST,
  BUILD_MAP,
  UNPACK_SEQUENCE,
  CALL_FUNCTION,
  CALL_FUNCTION_KW, // names tuple on top of the stack
  GET_ITER,
  FOR_ITER,
  JUMP_FORWARD,
  JUMP_ABSOLUTE,
  POP_JUMP_IF_FALSE,
  RETURN_VALUE,
  MAKE_FUNCTION, // stack: annotations tuple, code const
  MAKE_CLASS,    // arg: number of bases; stack: bases..., code const
};

const char *opcode_name(Opcode op);

enum class BinaryOp : int { Add, Sub, Mul, Div, FloorDiv, Mod, Pow };
enum class CompareOp : int { Lt, Le, Gt, Ge, Eq, Ne };

struct Instr {
  Opcode op;
  int arg = 0;
};

struct CodeObject;
using CodePtr = std::shared_ptr<CodeObject>;

/// Constant pool entry. A string vector is a keyword-name tuple.
using Const = std::variant<std::monostate, bool, std::int64_t, double,
                           std::string, CodePtr, std::vector<std::string>>;

enum class CodeKind { Module, Function, ClassBody };

struct CodeObject {
  CodeKind kind = CodeKind::Module;
  std::string name;
  std::string filename;
  int first_line = 1;
  std::vector<Instr> code;
  std::vector<Const> consts;
  std::vector<std::string> names;    // globals and attributes
  std::vector<std::string> varnames; // parameters first
  std::size_t argcount = 0;
  /// (first instruction index, line) runs, sorted by index.
  std::vector<std::pair<std::size_t, int>> line_table;
  /// Source of a function body, kept so it can be rewritten and recompiled.
  StmtPtr def;

  int line_at(std::size_t index) const;
};

/// Compiles a whole module. Throws SyntaxError / UnsupportedConstruct.
CodePtr compile_module(const Module &module);
/// Compiles one function definition (the body only; decorators and
/// annotations belong to the enclosing code).
CodePtr compile_function(const StmtPtr &def, const std::string &filename);

/// Pushes minus pops, given the argument.
int stack_effect(const Instr &ins);
/// Values the instruction consumes from the stack.
int stack_pops(const Instr &ins);

/// Checks that every instruction is reached with a single consistent operand
/// stack depth and that no path underflows. Returns the maximum depth, or
/// -1 if the code is inconsistent.
int verify_stack(const CodeObject &code);

/// Replaces every conditional jump that tests the result of an `scf_if(...)`
/// call by POP_TOP, and the jump that skips the else arm by NOP, so both arms
/// run in source order. Returns the number of conditionals rewritten. Throws
/// RewriteUnsupported if the result fails verify_stack.
int elide_conditional_jumps(CodeObject &code);

/// Human-readable listing: line, offset, opcode, argument.
std::string disassemble(const CodeObject &code);

} // namespace staircase::host
