#pragma once

// Capture of annotated host functions into IR. A Program is a host source
// file that has been parsed and executed once at top level; its functions
// decorated with @mlir_func can then be captured into a Context.

#include "staircase/ir.hpp"

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace staircase {

enum class RangeCtor { Scf, Affine };

struct CaptureConfig {
  RangeCtor range_ctor = RangeCtor::Scf;
  bool rewrite_ast = true;
  bool rewrite_executable = true;

  /// Throws UnsupportedConstruct if rewrite_executable is set without
  /// rewrite_ast.
  void validate() const;
};

struct CaptureInfo {
  /// Insertion stack depth when the body started and when it finished.
  std::size_t stack_depth_before = 0;
  std::size_t stack_depth_after = 0;
  /// Conditionals whose jumps were removed from the executable form.
  int conditionals_elided = 0;
  /// Set when the executable rewrite was not possible and both arms were
  /// flattened at source level instead.
  bool flattened = false;
  /// The function after the source rewrite, and the executed code listing.
  std::string rewritten_source;
  std::string bytecode;
};

struct CaptureResult {
  Operation *module = nullptr;
  Operation *func = nullptr;
  CaptureInfo info;
};

namespace host {
struct ProgramState;
}

class Program {
public:
  /// Parses and runs the top level of a host source file. Throws SyntaxError,
  /// UnsupportedConstruct or HostError with the source location.
  static Program from_source(std::string_view source,
                             const std::string &filename = "<input>");
  static Program from_file(const std::string &path);

  const std::string &filename() const;
  /// Functions decorated with @mlir_func, in definition order.
  std::vector<std::string> functions() const;
  /// Names of GPU module instances created at top level, in creation order.
  std::vector<std::string> gpu_modules() const;
  /// The decorator's configuration for `function`.
  CaptureConfig config(const std::string &function) const;

  const host::ProgramState &state() const { return *state_; }

private:
  std::shared_ptr<host::ProgramState> state_;
};

/// Captures `function` into a fresh builtin.module owned by `ctx`. GPU module
/// instances created at top level are emitted first so launches resolve.
/// On failure the partial module is dropped from `ctx` and the error
/// rethrown (UnannotatedParameter, UnsupportedConstruct, CaptureLeak,
/// UnbalancedMarkers, TypeMismatch, RankMismatch, VerificationFailed, ...).
CaptureResult capture(const Program &program, const std::string &function,
                      Context &ctx,
                      std::optional<CaptureConfig> config = std::nullopt);

/// Captures every decorated function (and all GPU module instances) into a
/// single module.
Operation &capture_program(const Program &program, Context &ctx);

/// Emits the gpu.module of the top-level instance bound to `instance` into a
/// fresh module and returns the gpu.module.
Operation &capture_gpu_module(const Program &program,
                              const std::string &instance, Context &ctx);

} // namespace staircase
