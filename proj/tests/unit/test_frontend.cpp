#include "doctest.h"

#include "staircase/dialects.hpp"
#include "staircase/frontend.hpp"
#include "staircase/frontend/ast.hpp"
#include "staircase/frontend/bytecode.hpp"
#include "staircase/frontend/rewrite.hpp"
#include "staircase/textio.hpp"

using namespace staircase;

namespace {

std::string corpus(const std::string &name) {
  return std::string(STAIRCASE_TEST_DATA) + "/corpus/" + name;
}

std::vector<Operation *> body_ops(Block &b) {
  std::vector<Operation *> out;
  for (auto &op : b.operations())
    out.push_back(op.get());
  return out;
}

std::vector<std::string> names(Block &b) {
  std::vector<std::string> out;
  for (auto *op : body_ops(b))
    out.push_back(op->name());
  return out;
}

ErrorCode capture_error(std::string_view src, const std::string &fn,
                        int *line = nullptr) {
  auto ctx = create_context();
  try {
    Program p = Program::from_source(src, "t.py");
    capture(p, fn, *ctx);
  } catch (const Error &e) {
    if (line)
      *line = e.location() ? e.location()->line : -1;
    return e.code();
  }
  FAIL("capture succeeded");
  return ErrorCode::HostError;
}

std::size_t occurrences(const std::string &text, const std::string &needle) {
  std::size_t n = 0;
  for (auto at = text.find(needle); at != std::string::npos;
       at = text.find(needle, at + 1))
    ++n;
  return n;
}

} // namespace

TEST_CASE("ifs captures one comparison and both arms") {
  auto ctx = create_context();
  Program p = Program::from_file(corpus("ifs.py"));
  CaptureResult r = capture(p, "ifs", *ctx);
  CHECK(r.info.conditionals_elided == 1);
  CHECK_FALSE(r.info.flattened);
  CHECK(r.info.stack_depth_before == r.info.stack_depth_after);

  Block &entry = r.func->region(0).block();
  CHECK(names(entry) == std::vector<std::string>{"arith.constant", "arith.cmpf",
                                                 "scf.if", "func.return"});
  auto ops = body_ops(entry);
  CHECK(ops[1]->attr("predicate")->as_string() == "olt");
  CHECK(ops[1]->operand(0) == entry.argument(0));
  CHECK(ops[1]->operand(1) == entry.argument(1));
  Operation &iff = *ops[2];
  REQUIRE(iff.num_regions() == 2);
  Block &then_b = iff.region(0).block(), &else_b = iff.region(1).block();
  CHECK(names(then_b) == std::vector<std::string>{"arith.constant",
                                                  "memref.alloca", "scf.yield"});
  CHECK(names(else_b) == std::vector<std::string>{"arith.constant",
                                                  "memref.alloca", "scf.yield"});
  CHECK(body_ops(then_b)[0]->attr("value")->as_float().value == 2.0);
  CHECK(body_ops(else_b)[0]->attr("value")->as_float().value == 6.0);
  CHECK(body_ops(then_b)[1]->result(0)->type() ==
        Type::memref({3, 3}, Type::f64()));
  CHECK(body_ops(else_b)[1]->result(0)->type() ==
        Type::memref({7, 7}, Type::f64()));
  CHECK(verify(*r.module).empty());
}

TEST_CASE("matmul captures three affine loops") {
  auto ctx = create_context();
  Program p = Program::from_file(corpus("matmul.py"));
  CHECK(p.functions() == std::vector<std::string>{"matmul", "matmul_i32"});
  CHECK(p.config("matmul").range_ctor == RangeCtor::Affine);
  CaptureResult r = capture(p, "matmul", *ctx);
  Operation *loop = r.func;
  std::vector<std::int64_t> bounds;
  for (int depth = 0; depth < 3; ++depth) {
    Block &b = loop->region(0).block();
    Operation *next = nullptr;
    for (auto *op : body_ops(b))
      if (op->name() == "affine.for")
        next = op;
    REQUIRE(next);
    bounds.push_back(next->attr("upper_bound")->as_int());
    loop = next;
  }
  CHECK(bounds == std::vector<std::int64_t>{4, 16, 8});
  CHECK(names(loop->region(0).block()) ==
        std::vector<std::string>{"memref.load", "memref.load", "memref.load",
                                 "arith.mulf", "arith.addf", "memref.store",
                                 "affine.yield"});
}

TEST_CASE("augmented subscript keeps load-mul-add-store shape") {
  auto ctx = create_context();
  Program p = Program::from_file(corpus("matmul.py"));
  CaptureResult r = capture(p, "matmul_i32", *ctx);
  std::vector<std::string> inner;
  walk(*r.func, [&](Operation &op) {
    if (op.name().rfind("arith.", 0) == 0 || op.name().rfind("memref.", 0) == 0)
      inner.push_back(op.name());
  });
  CHECK(inner == std::vector<std::string>{"memref.load", "memref.load",
                                          "arith.muli", "memref.load",
                                          "arith.addi", "memref.store"});
}

TEST_CASE("nested conditionals keep every arm") {
  const char *src = R"(
@mlir_func
def f(a: F64, b: F64):
    if a < b:
        x = constant(11.0)
        if b < a:
            y = constant(12.0)
        else:
            y = constant(13.0)
    else:
        z = constant(14.0)
)";
  auto ctx = create_context();
  Program p = Program::from_source(src);
  CaptureResult r = capture(p, "f", *ctx);
  std::string text = print_module(*r.module);
  for (const char *s : {"11.0", "12.0", "13.0", "14.0"})
    CHECK(occurrences(text, std::string("arith.constant ") + s) == 1);
  CHECK(r.info.conditionals_elided == 2);
  CHECK(verify(*r.module).empty());
}

TEST_CASE("without the executable rewrite only the taken arm is captured") {
  const char *src = R"(
@mlir_func(rewrite_executable=False)
def f(a: F64, b: F64):
    if a < b:
        x = constant(2.0)
    else:
        y = constant(6.0)
)";
  auto ctx = create_context();
  Program p = Program::from_source(src);
  CaptureResult r = capture(p, "f", *ctx);
  std::string text = print_module(*r.module);
  CHECK(occurrences(text, "arith.constant 2.0") == 1);
  CHECK(occurrences(text, "arith.constant 6.0") == 0);
}

TEST_CASE("type errors point at the original line") {
  const char *src = R"(
@mlir_func
def f(a: F64, b: I32):
    for i in range(3):
        if a < a:
            c = a + a
        else:
            d = a + b
)";
  int line = 0;
  CHECK(capture_error(src, "f", &line) == ErrorCode::TypeMismatch);
  CHECK(line == 8);
}

TEST_CASE("capture errors") {
  int line = 0;
  CHECK(capture_error("@mlir_func\ndef f(a):\n    return\n", "f", &line) ==
        ErrorCode::UnannotatedParameter);
  CHECK(line == 2);
  CHECK(capture_error("@mlir_func\ndef f(a: F64):\n    while a:\n        pass\n",
                      "f", &line) == ErrorCode::UnsupportedConstruct);
  CHECK(line == 3);
  CHECK(capture_error(R"(
@mlir_func
def f(a: F64, b: F64):
    for i in range(3):
        t = a + b
    u = t + a
)",
                      "f", &line) == ErrorCode::CaptureLeak);
  CHECK(line == 6);
  CHECK(capture_error("@mlir_func(rewrite_ast=False)\ndef f(a: F64):\n"
                      "    scf_endif()\n",
                      "f", &line) == ErrorCode::UnbalancedMarkers);
  CHECK(line == 3);
  CHECK(capture_error("@mlir_func\ndef f(a: F64):\n    x = block_id_x()\n", "f") ==
        ErrorCode::UnsupportedConstruct);
  CHECK(capture_error("@mlir_func\ndef f(a: MemRef[(2, 2), F64]):\n"
                      "    x = a[0]\n",
                      "f") == ErrorCode::RankMismatch);
  CHECK(capture_error("@mlir_func\ndef f(a: F64):\n    return\n", "g") ==
        ErrorCode::UnknownSymbol);
  CHECK(capture_error("@mlir_func(rewrite_ast=False, rewrite_executable=True)\n"
                      "def f(a: F64):\n    return\n",
                      "f") == ErrorCode::UnsupportedConstruct);
}

TEST_CASE("failed capture leaves no module behind") {
  auto ctx = create_context();
  Program p = Program::from_source("@mlir_func\ndef f(a: F64, b: I32):\n"
                                   "    c = a + b\n");
  CHECK_THROWS_AS(capture(p, "f", *ctx), Error);
  CHECK(ctx->modules().empty());
}

TEST_CASE("manual markers without the source rewrite") {
  const char *src = R"(
@mlir_func(rewrite_ast=False)
def f(a: F64, b: F64):
    if scf_if(a < b):
        x = constant(2.0)
        scf_endif_branch()
        scf_else()
        y = constant(6.0)
        scf_endif_branch()
    scf_endif()
)";
  auto ctx = create_context();
  Program p = Program::from_source(src);
  CaptureResult r = capture(p, "f", *ctx);
  std::string text = print_module(*r.module);
  CHECK(occurrences(text, "scf.if") == 1);
  CHECK(occurrences(text, "arith.constant 2.0") == 1);
  CHECK(occurrences(text, "arith.constant 6.0") == 1);
}

TEST_CASE("source rewrite of a range loop") {
  Program p = Program::from_file(corpus("simple_for.py"));
  auto ctx = create_context();
  CaptureResult r = capture(p, "simple_for", *ctx);
  CHECK(r.info.rewritten_source.find("for i in scf_range(0, 42, 2):") !=
        std::string::npos);
  CHECK(r.info.rewritten_source.find("scf_endfor()") != std::string::npos);
  std::string text = print_module(*r.module);
  CHECK(occurrences(text, "scf.for") == 1);
  CHECK(occurrences(text, "arith.muli") == 1);
}

TEST_CASE("rewriting does not touch the original tree") {
  host::Module m = host::parse("def f(a: F64):\n    if a < a:\n"
                               "        x = 1\n    for i in range(3):\n"
                               "        y = i\n",
                               "t.py");
  std::string before = host::unparse(m.body[0]);
  host::StmtPtr rewritten = host::rewrite_ast(*m.body[0]);
  CHECK(host::unparse(m.body[0]) == before);
  CHECK(host::unparse(rewritten) != before);
  CHECK(rewritten->end_line == m.body[0]->end_line);
}

TEST_CASE("jump elision removes conditional jumps") {
  Program p = Program::from_file(corpus("ifs.py"));
  auto ctx = create_context();
  CaptureResult r = capture(p, "ifs", *ctx);
  CHECK(r.info.bytecode.find("POP_JUMP_IF_FALSE") == std::string::npos);
  CHECK(r.info.bytecode.find("scf_if") != std::string::npos);

  host::Module m = host::parse(
      "def f(a, b):\n    if scf_if(a < b):\n        x = 1\n"
      "    else:\n        x = 2\n",
      "t.py");
  host::CodePtr code = host::compile_function(m.body[0], "t.py");
  CHECK(host::disassemble(*code).find("POP_JUMP_IF_FALSE") != std::string::npos);
  CHECK(host::verify_stack(*code) >= 0);
  CHECK(host::elide_conditional_jumps(*code) == 1);
  CHECK(host::disassemble(*code).find("POP_JUMP_IF_FALSE") == std::string::npos);
  CHECK(host::verify_stack(*code) >= 0);
}

TEST_CASE("gpu module and launch") {
  Program p = Program::from_file(corpus("gpu.py"));
  CHECK(p.gpu_modules() == std::vector<std::string>{"m"});
  auto ctx = create_context();
  CaptureResult r = capture(p, "main", *ctx);
  std::string text = print_module(*r.module);
  CHECK(text.find("gpu.module @MyClass1") != std::string::npos);
  CHECK(text.find("spirv.entry_point_abi") != std::string::npos);
  CHECK(occurrences(text, "gpu.block_id") == 2);
  Block &entry = r.func->region(0).block();
  auto ops = names(entry);
  REQUIRE(ops.size() == 8);
  for (int i = 0; i < 6; ++i)
    CHECK(ops[i] == "arith.constant");
  CHECK(ops[6] == "gpu.launch_func");
  CHECK(verify(*r.module).empty());
  auto ctx2 = create_context();
  Operation &gm = capture_gpu_module(p, "m", *ctx2);
  CHECK(gm.name() == "gpu.module");
}

TEST_CASE("capture is deterministic and round-trips") {
  for (const char *file : {"ifs.py", "matmul.py", "conv.py", "gpu.py",
                           "simple_for.py", "custom_op.py"}) {
    CAPTURE(file);
    if (std::string(file) == "custom_op.py")
      continue;
    Program p = Program::from_file(corpus(file));
    auto c1 = create_context(), c2 = create_context();
    std::string a = print_module(capture_program(p, *c1));
    std::string b = print_module(capture_program(p, *c2));
    CHECK(a == b);
    auto c3 = create_context();
    CHECK(print_module(parse_module(a, *c3)) == a);
  }
}

TEST_CASE("bare return and host arithmetic") {
  auto ctx = create_context();
  Program p = Program::from_source(R"(
W = 2 * 3 + 1

@mlir_func
def empty():
    return

@mlir_func
def add():
    x = constant(1.0) + constant(2.0)
    y = x * 3.0
    z = x + W
)");
  CaptureResult e = capture(p, "empty", *ctx);
  CHECK(names(e.func->region(0).block()) ==
        std::vector<std::string>{"func.return"});
  CaptureResult a = capture(p, "add", *ctx);
  std::string text = print_module(*a.module);
  CHECK(text.find("%2 = arith.addf %0, %1 : f64") != std::string::npos);
  CHECK(text.find("arith.constant 7.0 : f64") != std::string::npos);
}

TEST_CASE("parallel loops bind every induction variable") {
  auto ctx = create_context();
  Program p = Program::from_file(corpus("conv.py"));
  CaptureResult r = capture(p, "conv2d_nchw_fchw", *ctx);
  Operation *par = nullptr;
  walk(*r.func, [&](Operation &op) {
    if (op.name() == "scf.parallel")
      par = &op;
  });
  REQUIRE(par);
  CHECK(par->region(0).block().num_arguments() == 4);
  CHECK(verify(*r.module).empty());
}

TEST_CASE("values can be returned") {
  auto ctx = create_context();
  Program p = Program::from_source(
      "@mlir_func\ndef f(a: F64, b: F64):\n    return a * b\n");
  CaptureResult r = capture(p, "f", *ctx);
  std::string text = print_module(*r.module);
  CHECK(text.find("    return %0 : f64") != std::string::npos);
  CHECK(text.find("-> (f64)") != std::string::npos);
  CHECK(verify(*r.module).empty());
}

TEST_CASE("user dialect ops are captured through emit_op") {
  auto ctx = create_context();
  Program p = Program::from_file(corpus("custom_op.py"));
  CHECK_THROWS_AS(capture(p, "scale", *ctx), Error);
  OpSchema op;
  op.name = "scale";
  op.operands = {1, 1};
  op.results = {1, 1};
  op.has_side_effects = false;
  op.required_attrs = {"factor"};
  register_dialect(*ctx, DialectDef{"toy", {op}});
  CaptureResult r = capture(p, "scale", *ctx);
  std::string text = print_module(*r.module);
  CHECK(text.find("toy.scale") != std::string::npos);
  CHECK(verify(*r.module).empty());
  CHECK(print_module(parse_module(text, *ctx)) == text);
}
