#pragma once

#include "staircase/passes.hpp"

namespace staircase::passes {

struct PassResult {
  std::size_t rewrites = 0;
  std::size_t skipped = 0;
};

/// Applies the registered pass `name` to `anchor`, accumulating into `result`.
void run_pass(const std::string &name, Operation &anchor,
              const PassParams &params, PassResult &result);

void lower_affine(Operation &anchor, PassResult &result);
void loop_unroll(Operation &anchor, std::int64_t factor, PassResult &result);
void parallel_loop_tiling(Operation &anchor,
                          const std::vector<std::int64_t> &sizes,
                          PassResult &result);
void gpu_map_parallel_loops(Operation &anchor, PassResult &result);
void gpu_kernel_outlining(Operation &anchor, PassResult &result);
void canonicalize(Operation &anchor, PassResult &result);

} // namespace staircase::passes
