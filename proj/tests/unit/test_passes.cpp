#include "doctest.h"

#include "../support/corpus.hpp"
#include "staircase/dialects.hpp"
#include "staircase/passes.hpp"
#include "staircase/textio.hpp"

using namespace staircase;
using staircase::testing::capture_corpus;

namespace {

std::size_t count(Operation &root, std::string_view name) {
  std::size_t n = 0;
  walk(root, [&](Operation &op) { n += op.name() == name; });
  return n;
}

std::size_t count_prefix(Operation &root, std::string_view prefix) {
  std::size_t n = 0;
  walk(root, [&](Operation &op) { n += op.name().rfind(prefix, 0) == 0; });
  return n;
}

std::vector<Operation *> find_all(Operation &root, std::string_view name) {
  std::vector<Operation *> out;
  walk(
      root, [&](Operation &op) {
        if (op.name() == name)
          out.push_back(&op);
      },
      WalkOrder::Pre);
  return out;
}

} // namespace

TEST_CASE("pipeline text parses into nested scopes") {
  const char *text =
      "builtin.module(func.func(lower-affine,loop-unroll{factor=4}))";
  Pipeline p = parse_pipeline(text);
  CHECK(to_string(p) == text);
  REQUIRE(p.root.items.size() == 1);
  REQUIRE(p.root.items[0].is_scope());
  const PassScope &fs = p.root.items[0].scope.front();
  CHECK(fs.anchor == "func.func");
  REQUIRE(fs.items.size() == 2);
  CHECK(fs.items[1].pass == "loop-unroll");
  CHECK(fs.items[1].params == PassParams{{"factor", "4"}});

  Pipeline built = PipelineBuilder()
                       .push_scope("func.func")
                       .add_pass("lower-affine")
                       .pop_scope()
                       .build();
  CHECK(built == parse_pipeline("builtin.module(func.func(lower-affine))"));
  CHECK(parse_pipeline("func.func(lower-affine)") == built);

  Pipeline tiles = parse_pipeline(
      " builtin.module( func.func( scf-parallel-loop-tiling{sizes=1, 1,8,8} ) )");
  CHECK(to_string(tiles) ==
        "builtin.module(func.func(scf-parallel-loop-tiling{sizes=1,1,8,8}))");
  CHECK(parse_pipeline("builtin.module()").empty());
  CHECK(parse_pipeline("").empty());
}

TEST_CASE("pipeline errors") {
  auto code = [](const char *text) {
    try {
      parse_pipeline(text);
    } catch (const Error &e) {
      return e.code();
    }
    return ErrorCode::HostError;
  };
  CHECK(code("func.func(bogus-pass)") == ErrorCode::UnknownPass);
  CHECK(code("builtin.module(func.func(lower-affine)") == ErrorCode::SyntaxError);
  CHECK(code("builtin.module(loop-unroll{size=2})") == ErrorCode::SyntaxError);
  CHECK(code("builtin.module(loop-unroll{factor=2") == ErrorCode::SyntaxError);
  CHECK(code("builtin.module(canonicalize) x") == ErrorCode::SyntaxError);
  CHECK_THROWS_AS(PipelineBuilder().add_pass("nope"), Error);
  CHECK_THROWS_AS(PipelineBuilder().pop_scope(), Error);
}

TEST_CASE("empty pipeline leaves the module unchanged") {
  auto ctx = create_context();
  Operation &m = capture_corpus("matmul.py", "matmul", *ctx);
  std::string before = print_module(m);
  CHECK(run_pipeline(m, "builtin.module()").empty());
  CHECK(print_module(m) == before);
}

TEST_CASE("lower-affine replaces every affine loop") {
  auto ctx = create_context();
  Operation &m = capture_corpus("matmul.py", "matmul", *ctx);
  auto stats = run_pipeline(m, "builtin.module(func.func(lower-affine))");
  CHECK(count_prefix(m, "affine.") == 0);
  CHECK(count(m, "scf.for") == 3);
  REQUIRE(stats.size() == 1);
  CHECK(stats[0].rewrites == 3);
  CHECK(stats[0].ops_after == count_ops(m));
  CHECK(stats[0].ops_before + 9 == stats[0].ops_after);
  auto loops = find_all(m, "scf.for");
  std::vector<std::int64_t> ubs;
  for (Operation *l : loops) {
    auto b = constant_bounds(*l);
    REQUIRE(b);
    CHECK(b->lb == 0);
    CHECK(b->step == 1);
    ubs.push_back(b->ub);
  }
  CHECK(ubs == std::vector<std::int64_t>{4, 16, 8});
  CHECK(verify(m).empty());

  std::string again = print_module(m);
  run_pipeline(m, "builtin.module(func.func(lower-affine))");
  CHECK(print_module(m) == again);
}

TEST_CASE("loop-unroll multiplies the step and copies the body") {
  auto ctx = create_context();
  Operation &m = capture_corpus("simple_for.py", "simple_for", *ctx);
  std::string before = print_module(m);
  run_pipeline(m, "builtin.module(func.func(loop-unroll{factor=1}))");
  CHECK(print_module(m) == before);

  auto stats = run_pipeline(m, "builtin.module(func.func(loop-unroll{factor=4}))");
  CHECK(print_module(m) == before);
  CHECK(stats[0].skipped == 1);

  stats = run_pipeline(m, "builtin.module(func.func(loop-unroll{factor=3}))");
  CHECK(stats[0].rewrites == 1);
  auto loops = find_all(m, "scf.for");
  REQUIRE(loops.size() == 1);
  auto b = constant_bounds(*loops[0]);
  REQUIRE(b);
  CHECK(b->step == 6);
  CHECK(b->trips() == 7);
  CHECK(count(*loops[0], "arith.muli") == 3);
  CHECK(verify(m).empty());

  CHECK_THROWS_WITH_AS(
      run_pipeline(m, "builtin.module(func.func(loop-unroll{factor=0}))"),
      doctest::Contains("factor"), Error);
}

TEST_CASE("parallel loop tiling") {
  auto ctx = create_context();
  Operation &m = capture_corpus("conv.py", "conv2d_nchw_fchw", *ctx);
  auto stats = run_pipeline(
      m, "builtin.module(func.func(scf-parallel-loop-tiling{sizes=1,1,8,8}))");
  CHECK(stats[0].rewrites == 1);
  auto pars = find_all(m, "scf.parallel");
  REQUIRE(pars.size() == 2);
  std::size_t n = 4;
  std::vector<std::int64_t> outer_steps, inner_ubs;
  for (std::size_t d = 0; d < n; ++d) {
    outer_steps.push_back(*constant_int(pars[0]->operand(2 * n + d)));
    inner_ubs.push_back(*constant_int(pars[1]->operand(n + d)));
  }
  CHECK(outer_steps == std::vector<std::int64_t>{1, 1, 8, 8});
  CHECK(inner_ubs == std::vector<std::int64_t>{1, 1, 8, 8});
  CHECK(count(*pars[1], "arith.addi") >= 4);
  CHECK(verify(m).empty());

  auto ctx2 = create_context();
  Operation &m2 = capture_corpus("conv.py", "conv2d_nchw_fchw", *ctx2);
  std::string before = print_module(m2);
  try {
    run_pipeline(m2, "builtin.module(func.func(scf-parallel-loop-tiling{sizes=8,8}))");
    FAIL("expected ArityMismatch");
  } catch (const Error &e) {
    CHECK(e.code() == ErrorCode::ArityMismatch);
  }
  CHECK(print_module(m2) == before);
  stats = run_pipeline(
      m2, "builtin.module(func.func(scf-parallel-loop-tiling{sizes=1,1,7,8}))");
  CHECK(stats[0].skipped == 1);
  CHECK(print_module(m2) == before);
}

TEST_CASE("gpu mapping levels") {
  auto ctx = create_context();
  Operation &m = capture_corpus("conv.py", "conv2d_nchw_fchw", *ctx);
  run_pipeline(m, "builtin.module(func.func(gpu-map-parallel-loops))");
  auto pars = find_all(m, "scf.parallel");
  CHECK(pars[0]->attr("mapping")->as_string() == "blocks");
  run_pipeline(m, "builtin.module(func.func(scf-parallel-loop-tiling{sizes=1,1,8,8},"
                  "gpu-map-parallel-loops))");
  pars = find_all(m, "scf.parallel");
  REQUIRE(pars.size() == 2);
  CHECK(pars[0]->attr("mapping")->as_string() == "blocks");
  CHECK(pars[1]->attr("mapping")->as_string() == "threads");

  auto ctx2 = create_context();
  Operation &mm = capture_corpus("matmul.py", "matmul", *ctx2);
  std::string before = print_module(mm);
  run_pipeline(mm, "builtin.module(func.func(gpu-map-parallel-loops))");
  CHECK(print_module(mm) == before);
}

TEST_CASE("kernel outlining") {
  auto ctx = create_context();
  Operation &m = capture_corpus("conv.py", "conv2d_nchw_fchw", *ctx);
  run_pipeline(m, "builtin.module(func.func(gpu-map-parallel-loops,"
                  "scf-parallel-loop-tiling{sizes=1,1,8,8},gpu-map-parallel-loops),"
                  "gpu-kernel-outlining)");
  CHECK(count(m, "scf.parallel") == 0);
  CHECK(count(m, "gpu.module") == 1);
  CHECK(count(m, "gpu.func") == 1);
  auto launches = find_all(m, "gpu.launch_func");
  REQUIRE(launches.size() == 1);
  Operation &launch = *launches[0];
  std::vector<std::int64_t> sizes;
  for (std::size_t i = 0; i < 6; ++i)
    sizes.push_back(*constant_int(launch.operand(i)));
  // Grid over tile origins of (N, CO, HO); WO tiles run sequentially.
  CHECK(sizes == std::vector<std::int64_t>{1, 3, 8, 1, 1, 8});
  Operation &kernel = *find_all(m, "gpu.func")[0];
  CHECK(kernel.region(0).block().num_arguments() == 3);
  CHECK(launch.num_operands() == 9);
  CHECK(count(kernel, "gpu.block_id") == 3);
  CHECK(count(kernel, "gpu.thread_id") == 3);
  CHECK(verify(m).empty());

  auto ctx2 = create_context();
  Operation &mm = capture_corpus("matmul.py", "matmul", *ctx2);
  std::string before = print_module(mm);
  run_pipeline(mm, "builtin.module(gpu-kernel-outlining)");
  CHECK(print_module(mm) == before);
}

TEST_CASE("canonicalize folds, dedups and drops dead code") {
  const char *text = R"(module {
  func.func @f(%arg0: memref<4xf64>) -> (f64) {
    %0 = arith.constant 1.0 : f64
    %1 = arith.constant 2.0 : f64
    %2 = arith.addf %0, %1 : f64
    %3 = arith.constant 0 : index
    %4 = memref.load %arg0[%3] : memref<4xf64>
    %5 = arith.mulf %4, %4 : f64
    %6 = arith.constant 2.0 : f64
    return %2 : f64
  }
}
)";
  auto ctx = create_context();
  Operation &m = parse_module(text, *ctx);
  REQUIRE(verify(m).empty());
  run_pipeline(m, "builtin.module(canonicalize)");
  std::string out = print_module(m);
  CHECK(out == "module {\n  func.func @f(%arg0: memref<4xf64>) -> (f64) {\n"
               "    %0 = arith.constant 3.0 : f64\n"
               "    return %0 : f64\n  }\n}\n");
  run_pipeline(m, "builtin.module(canonicalize)");
  CHECK(print_module(m) == out);
}

TEST_CASE("a failing pass keeps earlier passes committed") {
  auto ctx = create_context();
  Operation &m = capture_corpus("conv.py", "conv2d_nchw_fchw", *ctx);
  CHECK_THROWS_AS(
      run_pipeline(m, "builtin.module(func.func(gpu-map-parallel-loops,"
                      "scf-parallel-loop-tiling{sizes=2,2}))"),
      Error);
  auto pars = find_all(m, "scf.parallel");
  REQUIRE(pars.size() == 1);
  CHECK(pars[0]->has_attr("mapping"));
  CHECK(verify(m).empty());
}
