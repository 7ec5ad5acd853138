#pragma once

// Scope-nested pass pipelines and the transformation passes.
//
// Textual form: `anchor(item,item,...)` where an item is either a pass,
// optionally with parameters (`loop-unroll{factor=4}`), or a nested scope.
// The root scope is always `builtin.module`; a pipeline written with another
// root anchor is wrapped in one.

#include "staircase/ir.hpp"

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace staircase {

using PassParams = std::vector<std::pair<std::string, std::string>>;

struct PassScope;

/// A pass invocation, or a nested scope when `pass` is empty.
struct PipelineItem {
  std::string pass;
  PassParams params;
  std::vector<PassScope> scope;

  bool is_scope() const { return pass.empty(); }
  friend bool operator==(const PipelineItem &, const PipelineItem &);
};

struct PassScope {
  std::string anchor;
  std::vector<PipelineItem> items;
  friend bool operator==(const PassScope &, const PassScope &);
};

struct Pipeline {
  PassScope root{"builtin.module", {}};
  bool empty() const;
  friend bool operator==(const Pipeline &, const Pipeline &) = default;
};

/// Throws SyntaxError (with the column in the detail) or UnknownPass.
Pipeline parse_pipeline(std::string_view text);
std::string to_string(const Pipeline &pipeline);

class PipelineBuilder {
public:
  PipelineBuilder &push_scope(std::string anchor);
  /// Throws SyntaxError when only the root scope is open.
  PipelineBuilder &pop_scope();
  /// Throws UnknownPass, or SyntaxError for a parameter the pass lacks.
  PipelineBuilder &add_pass(std::string name, PassParams params = {});
  /// Closes any open scopes.
  Pipeline build() const { return pipeline_; }

private:
  PassScope &current();
  Pipeline pipeline_;
  std::vector<std::size_t> path_;
};

struct PassInfo {
  std::string name;
  std::vector<std::string> params;
  std::string summary;
};

/// lower-affine, loop-unroll, scf-parallel-loop-tiling,
/// gpu-map-parallel-loops, gpu-kernel-outlining, canonicalize.
const std::vector<PassInfo> &registered_passes();

struct PassStats {
  std::string pass;
  /// Scope path such as "builtin.module/func.func".
  std::string anchor;
  std::size_t anchors = 0;
  std::size_t ops_before = 0;
  std::size_t ops_after = 0;
  std::size_t rewrites = 0;
  /// Candidates left alone (non-dividing factor or tile size, non-constant
  /// bounds).
  std::size_t skipped = 0;
  double elapsed_ms = 0.0;
};

/// Runs `pipeline` on `module` in place. Each pass works on a clone that is
/// verified and then committed, so a failing pass leaves `module` as it was
/// after the last successful one. Pass-specific failures keep their code
/// (InvalidFactor, ArityMismatch, OutliningUnsupported); anything else,
/// including a clone that no longer verifies, is reported as PassFailure.
std::vector<PassStats> run_pipeline(Operation &module, const Pipeline &pipeline);

std::vector<PassStats> run_pipeline(Operation &module, std::string_view text);

/// Single-line JSON array of the stats.
std::string stats_json(const std::vector<PassStats> &stats,
                       bool include_time = true);

} // namespace staircase
