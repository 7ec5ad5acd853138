#include "doctest.h"

#include "staircase/dialects.hpp"
#include "staircase/textio.hpp"

using namespace staircase;

namespace {

template <typename F> ErrorCode code_of(F &&f) {
  try {
    f();
  } catch (const Error &e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::HostError;
}

Operation &simple_func(Context &ctx, Operation *&module_out) {
  Operation &module = ctx.create_module();
  module_out = &module;
  return build_func(module, "f", {Type::f64(), Type::f64()}, {});
}

} // namespace

TEST_CASE("context registers the seven built-in dialects") {
  auto ctx = create_context();
  CHECK(ctx->registry().size() == 7);
  auto names = ctx->registry().dialect_names();
  for (const char *d : {"arith", "scf", "affine", "memref", "func", "gpu", "builtin"})
    CHECK(std::find(names.begin(), names.end(), d) != names.end());
  CHECK(ctx->modules().empty());
}

TEST_CASE("independent contexts have independent value ids") {
  auto a = create_context();
  auto b = create_context();
  Operation &ma = a->create_module();
  Operation &mb = b->create_module();
  Operation &fa = build_func(ma, "f", {Type::f64()}, {});
  Operation &fb = build_func(mb, "f", {Type::f64()}, {});
  CHECK(fa.region(0).block().argument(0)->id() ==
        fb.region(0).block().argument(0)->id());
}

TEST_CASE("user dialect registration") {
  auto ctx = create_context();
  OpSchema noop;
  noop.name = "mydsl.noop";
  register_dialect(*ctx, DialectDef{"mydsl", {noop}});
  CHECK(ctx->registry().size() == 8);
  Operation *module;
  Operation &fn = simple_func(*ctx, module);
  OpBuilder b(*ctx);
  b.set_insertion_point(fn.region(0).block(), 0);
  CHECK(b.create("mydsl.noop", {}, {}).name() == "mydsl.noop");
  CHECK(verify(*module).empty());

  CHECK(code_of([&] { register_dialect(*ctx, DialectDef{"arith", {}}); }) ==
        ErrorCode::DuplicateDialect);
  register_dialect(*ctx, DialectDef{"ext", {}});
  CHECK(code_of([&] { b.create("ext.undefined_op", {}, {}); }) ==
        ErrorCode::UnknownOperation);
}

TEST_CASE("create_op type and dominance checks") {
  auto ctx = create_context();
  Operation *module;
  Operation &fn = simple_func(*ctx, module);
  Block &entry = fn.region(0).block();
  OpBuilder b(*ctx, entry, 0);
  Value *c = b.constant_float(1.0);
  CHECK(c->type() == Type::f64());
  CHECK(c->defining_op()->num_operands() == 0);

  Value *f32v = b.constant_float(2.0, Type::f32());
  CHECK(code_of([&] { b.arith(ArithKind::Add, c, f32v); }) ==
        ErrorCode::TypeMismatch);
  CHECK(code_of([&] {
          create_op(entry, entry.size(), "arith.addf", {c, f32v}, {},
                    {Type::f64()}, 0, Location::unknown());
        }) == ErrorCode::TypeMismatch);

  // Using a value before its definition.
  CHECK(code_of([&] {
          create_op(entry, 0, "arith.addf", {c, c}, {}, {Type::f64()}, 0,
                    Location::unknown());
        }) == ErrorCode::DominanceViolation);

  Value *m = b.alloc(Type::memref({3, 3}, Type::f64()), true);
  Value *i = b.constant_index(0);
  Value *ld = b.load(m, {i, i});
  CHECK(ld->type() == Type::f64());
  CHECK(verify(*module).empty());
}

TEST_CASE("verify reports forward use and missing terminator") {
  auto ctx = create_context();
  Operation *module;
  Operation &fn = simple_func(*ctx, module);
  Block &entry = fn.region(0).block();
  OpBuilder b(*ctx, entry, 0);
  Value *x = b.constant_float(1.0);
  Value *y = b.arith(ArithKind::Add, x, x);
  // Move the constant after its user.
  auto moved = entry.take(0);
  entry.insert(1, std::move(moved));
  auto diags = verify(*module);
  REQUIRE(diags.size() == 1);
  CHECK(diags[0].message.find("dominate") != std::string::npos);
  (void)y;

  auto ctx2 = create_context();
  Operation *module2;
  Operation &fn2 = simple_func(*ctx2, module2);
  OpBuilder b2(*ctx2, fn2.region(0).block(), 0);
  Operation &loop = b2.build_scf_for(b2.constant_index(0), b2.constant_index(4),
                                     b2.constant_index(1));
  loop.region(0).block().take(0);
  auto d2 = verify(*module2);
  REQUIRE(d2.size() == 1);
  CHECK(d2[0].message.find("terminator") != std::string::npos);
}

TEST_CASE("walk orders and dialect dispatch") {
  auto ctx = create_context();
  Operation &module = ctx->create_module();
  std::vector<std::string> pre, post;
  walk(module, [&](Operation &op) { post.push_back(op.name()); });
  CHECK(post.size() == 1);

  Operation &fn = build_func(module, "f", {}, {});
  OpBuilder b(*ctx, fn.region(0).block(), 0);
  Operation &loop = b.build_affine_for(0, 4, 1);
  b.set_insertion_point_to_end(loop.region(0).block());
  Value *c = b.constant_float(1.0);
  b.arith(ArithKind::Mul, c, c);
  pre.clear();
  post.clear();
  walk(module, [&](Operation &op) { pre.push_back(op.name()); }, WalkOrder::Pre);
  walk(module, [&](Operation &op) { post.push_back(op.name()); });
  CHECK(pre.front() == "builtin.module");
  CHECK(post.back() == "builtin.module");
  std::sort(pre.begin(), pre.end());
  std::sort(post.begin(), post.end());
  CHECK(pre == post);

  int arith = 0, other = 0;
  DialectVisitor v;
  v.on("arith", [&](Operation &) { ++arith; }).otherwise([&](Operation &) { ++other; });
  walk(module, v);
  CHECK(arith == 2);
  CHECK(other == 5);
}

TEST_CASE("replace_all_uses_with and erase_op") {
  auto ctx = create_context();
  Operation *module;
  Operation &fn = simple_func(*ctx, module);
  Block &entry = fn.region(0).block();
  OpBuilder b(*ctx, entry, 0);
  Value *a = b.constant_float(1.0);
  Value *c = b.constant_float(2.0);
  b.arith(ArithKind::Add, a, a);
  b.arith(ArithKind::Mul, a, c);
  CHECK(a->use_count() == 3);
  std::string before = print_module(*module);
  CHECK(replace_all_uses_with(*a, *a) == 0);
  CHECK(print_module(*module) == before);

  CHECK(code_of([&] { erase_op(*a->defining_op()); }) == ErrorCode::HasUses);
  CHECK(replace_all_uses_with(*a, *c) == 3);
  CHECK(a->use_count() == 0);
  erase_op(*a->defining_op());
  CHECK(verify(*module).empty());

  Value *f32v = b.constant_float(3.0, Type::f32());
  CHECK(code_of([&] { replace_all_uses_with(*c, *f32v); }) ==
        ErrorCode::TypeMismatch);
  Value *unused = b.constant_float(4.0);
  CHECK(replace_all_uses_with(*unused, *c) == 0);

  // create then erase restores the printed module byte for byte
  std::string snapshot = print_module(*module);
  Value *tmp = b.constant_float(9.0);
  erase_op(*tmp->defining_op());
  CHECK(print_module(*module) == snapshot);
}

TEST_CASE("builder error cases") {
  auto ctx = create_context();
  Operation *module;
  Operation &fn = simple_func(*ctx, module);
  Block &entry = fn.region(0).block();
  OpBuilder b(*ctx, entry, 0);
  Value *fs = b.constant_float(2.0, Type::f32());
  Value *i0 = b.constant_index(0);
  CHECK(code_of([&] { b.build_scf_for(i0, i0, fs); }) == ErrorCode::TypeMismatch);
  CHECK(code_of([&] { b.build_affine_for(5, 3, 1); }) == ErrorCode::InvalidBound);
  Operation &empty_loop = b.build_affine_for(0, 0, 1);
  CHECK(empty_loop.region(0).block().back().name() == "affine.yield");
  CHECK(code_of([&] { b.build_scf_if(entry.argument(0), false); }) ==
        ErrorCode::TypeMismatch);
  Value *cond = b.cmp(CmpKind::Lt, entry.argument(0), entry.argument(1));
  CHECK(cond->defining_op()->attr("predicate")->as_string() == "olt");
  CHECK(b.build_scf_if(cond, false).num_regions() == 1);
  CHECK(b.build_scf_if(cond, true).num_regions() == 2);
  CHECK(code_of([&] { b.build_scf_parallel({i0, i0}, {i0, i0, i0}, {i0, i0}); }) ==
        ErrorCode::ArityMismatch);
  Value *m = b.alloc(Type::memref({4, 16}, Type::f32()));
  CHECK(b.load(m, {i0, i0})->type() == Type::f32());
  CHECK(code_of([&] { b.load(m, {i0}); }) == ErrorCode::RankMismatch);
  CHECK(code_of([&] { b.store(entry.argument(0), m, {i0, i0}); }) ==
        ErrorCode::TypeMismatch);
  CHECK(code_of([&] { build_func(*module, "f", {}, {}); }) ==
        ErrorCode::DuplicateSymbol);
  CHECK(code_of([&] { Type::memref({0, 3}, Type::f32()); }) ==
        ErrorCode::InvalidType);
  CHECK(verify(*module).empty());
}

TEST_CASE("dangling call is a verifier diagnostic") {
  auto ctx = create_context();
  Operation *module;
  Operation &fn = simple_func(*ctx, module);
  OpBuilder b(*ctx, fn.region(0).block(), 0);
  b.create("func.call", {}, {}, {{"callee", Attribute::symbol({"nowhere"})}});
  auto diags = verify(*module);
  REQUIRE(diags.size() == 1);
  CHECK(diags[0].message.find("nowhere") != std::string::npos);
}

TEST_CASE("nested scf.for induction variables are scoped") {
  auto ctx = create_context();
  Operation *module;
  Operation &fn = simple_func(*ctx, module);
  OpBuilder b(*ctx, fn.region(0).block(), 0);
  Value *lo = b.constant_index(0), *hi = b.constant_index(4), *st = b.constant_index(1);
  Operation &l1 = b.build_scf_for(lo, hi, st);
  b.set_insertion_point_to_end(l1.region(0).block());
  Operation &l2 = b.build_scf_for(lo, hi, st);
  b.set_insertion_point_to_end(l2.region(0).block());
  Operation &l3 = b.build_scf_for(lo, hi, st);
  Value *inner = l3.region(0).block().argument(0);
  CHECK(is_visible_at(*inner, l3.region(0).block(), 0));
  CHECK_FALSE(is_visible_at(*inner, l2.region(0).block(), l2.region(0).block().size()));
  // A use of the innermost iv outside its loop fails verification.
  b.set_insertion_point_to_end(l2.region(0).block());
  CHECK(code_of([&] { b.arith(ArithKind::Add, inner, inner); }) ==
        ErrorCode::DominanceViolation);
  CHECK(verify(*module).empty());
}

TEST_CASE("gpu launch builder checks") {
  auto ctx = create_context();
  Operation &module = ctx->create_module();
  Type a = Type::memref({4, 16}, Type::f32());
  Operation &gm = build_gpu_module(module, "MyClass1");
  build_gpu_func(gm, "kernel", {a, a, a});
  Operation &main = build_func(module, "main", {a, a, a}, {});
  Block &entry = main.region(0).block();
  OpBuilder b(*ctx, entry, 0);
  Value *four = b.constant_index(4), *one = b.constant_index(1);
  auto args = entry.arguments();
  Operation &launch =
      b.build_gpu_launch("MyClass1", "kernel", {four, four, one}, {one, one, one}, args);
  CHECK(launch.num_operands() == 9);
  CHECK(code_of([&] {
          b.build_gpu_launch("MyClass1", "kernel", {four, four, one},
                             {one, one, one}, {args[0]});
        }) == ErrorCode::SignatureMismatch);
  CHECK(code_of([&] {
          b.build_gpu_launch("main", "main", {four, four, one}, {one, one, one}, args);
        }) == ErrorCode::UnknownSymbol);
  CHECK(verify(module).empty());
  CHECK(module.has_attr("gpu.container_module"));
}
