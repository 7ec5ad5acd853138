#include "doctest.h"

#include "staircase/dialects.hpp"
#include "staircase/textio.hpp"

using namespace staircase;

namespace {

void check_round_trip(const Operation &module) {
  std::string text = print_module(module);
  auto ctx = create_context();
  Operation &parsed = parse_module(text, *ctx);
  CHECK(structurally_equal(module, parsed));
  CHECK(print_module(parsed) == text);
  CHECK(verify(parsed).empty());
}

} // namespace

TEST_CASE("empty module prints as two lines") {
  auto ctx = create_context();
  CHECK(print_module(ctx->create_module()) == "module {\n}\n");
}

TEST_CASE("builder output round-trips") {
  auto ctx = create_context();
  Operation &module = ctx->create_module();
  Type m = Type::memref({3, 3}, Type::f64());
  Operation &fn = build_func(module, "f", {Type::f64(), Type::f64(), m},
                             {Type::f64()});
  Block &entry = fn.region(0).block();
  OpBuilder b(*ctx, entry, 0);
  Value *c0 = b.constant_index(0), *c3 = b.constant_index(3),
        *c1 = b.constant_index(1);
  Value *x = b.arith(ArithKind::Add, entry.argument(0), entry.argument(1));
  Value *cond = b.cmp(CmpKind::Ge, x, b.constant_float(0.1));
  Operation &iff = b.build_scf_if(cond, true);
  b.set_insertion_point_to_end(iff.region(0).block());
  b.alloc(Type::memref({3, 3}, Type::f64()), true);
  b.set_insertion_point_to_end(iff.region(1).block());
  b.constant_float(-2.5e-7, Type::f32());
  b.set_insertion_point_to_end(entry);
  Operation &loop = b.build_scf_for(c0, c3, c1);
  b.set_insertion_point_to_end(loop.region(0).block());
  Value *iv = loop.region(0).block().argument(0);
  Value *v = b.load(entry.argument(2), {iv, iv});
  b.store(b.arith(ArithKind::Mul, v, x), entry.argument(2), {iv, c0});
  b.index_cast(iv, Type::i64());
  b.set_insertion_point_to_end(entry);
  Operation &par = b.build_scf_parallel({c0, c0}, {c3, c3}, {c1, c1});
  par.set_attr("mapping", Attribute::string("blocks"));
  Operation &aff = b.build_affine_for(0, 10, 3);
  b.set_insertion_point_to_end(aff.region(0).block());
  b.constant_int(-7, Type::i32());
  b.set_insertion_point_to_end(entry);
  b.func_return({x});

  Operation &g = build_func(module, "g", {}, {});
  OpBuilder gb(*ctx, g.region(0).block(), 0);
  Value *a0 = gb.constant_float(1.0);
  gb.call("f", {a0, a0, gb.alloc(m)});

  std::string text = print_module(module);
  CHECK(text.find("scf.for %arg3 = %0 to %1 step %2 {") != std::string::npos);
  CHECK(text.find("affine.for %arg6 = 0 to 10 step 3 {") != std::string::npos);
  CHECK(text.find("} else {") != std::string::npos);
  CHECK(text.find("attributes {mapping = \"blocks\"}") != std::string::npos);
  CHECK(text.find("-> (f64)") != std::string::npos);
  CHECK(text.find("arith.constant -2.5e-07 : f32") != std::string::npos);
  check_round_trip(module);
}

TEST_CASE("gpu module round-trips") {
  auto ctx = create_context();
  Operation &module = ctx->create_module();
  Type a = Type::memref({4, 16}, Type::f32());
  Operation &gm = build_gpu_module(module, "MyClass1");
  Attribute::Dict abi{{"spirv.entry_point_abi",
                       Attribute::dict({{"workgroup_size",
                                         Attribute::array({Attribute::integer(1),
                                                           Attribute::integer(1),
                                                           Attribute::integer(1)})}})}};
  Operation &k = build_gpu_func(gm, "kernel", {a, a, a}, abi);
  OpBuilder kb(*ctx, k.region(0).block(), 0);
  Value *x = kb.gpu_id(false, 0);
  Value *y = kb.gpu_id(false, 1);
  auto ka = k.region(0).block().arguments();
  kb.store(kb.arith(ArithKind::Mul, kb.load(ka[0], {x, y}), kb.load(ka[1], {x, y})),
           ka[2], {x, y});
  Operation &main = build_func(module, "main", {a, a, a}, {});
  OpBuilder b(*ctx, main.region(0).block(), 0);
  Value *four = b.constant_index(4), *one = b.constant_index(1);
  b.build_gpu_launch("MyClass1", "kernel", {four, four, one}, {one, one, one},
                     main.region(0).block().arguments());
  std::string text = print_module(module);
  CHECK(text.rfind("module attributes {gpu.container_module} {\n", 0) == 0);
  CHECK(text.find("gpu.func @kernel(%arg0: memref<4x16xf32>, %arg1: memref<4x16xf32>, "
                  "%arg2: memref<4x16xf32>) kernel attributes "
                  "{spirv.entry_point_abi = {workgroup_size = [1, 1, 1]}} {") !=
        std::string::npos);
  CHECK(text.find("gpu.launch_func @MyClass1::@kernel blocks in (%0, %0, %1) "
                  "threads in (%1, %1, %1) args(%arg0, %arg1, %arg2)") !=
        std::string::npos);
  check_round_trip(module);
}

TEST_CASE("parser errors") {
  auto ctx = create_context();
  SUBCASE("missing return parses then fails verify") {
    Operation &m = parse_module("module {\n  func.func @f() {\n  }\n}\n", *ctx);
    auto diags = verify(m);
    REQUIRE(diags.size() == 1);
    CHECK(diags[0].message.find("terminator") != std::string::npos);
  }
  SUBCASE("unknown dialect") {
    try {
      parse_module("module {\n  xyz.op() : () -> ()\n}\n", *ctx);
      FAIL("no error");
    } catch (const Error &e) {
      CHECK(e.code() == ErrorCode::UnknownOperation);
      CHECK(e.location()->line == 2);
    }
  }
  SUBCASE("syntax error carries line and column") {
    try {
      parse_module("module {\n  %0 = arith.constant : f64\n}\n", *ctx);
      FAIL("no error");
    } catch (const Error &e) {
      CHECK(e.code() == ErrorCode::SyntaxError);
      CHECK(e.location()->line == 2);
      CHECK(e.location()->column > 1);
    }
  }
}
