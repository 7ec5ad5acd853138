#pragma once

// Seeded generators for property tests: random well-formed modules built
// through OpBuilder, and host sources with nested conditionals.

#include "staircase/dialects.hpp"

#include <random>
#include <string>
#include <vector>

namespace staircase::testing {

class ModuleGenerator {
public:
  ModuleGenerator(Context &ctx, std::uint64_t seed) : ctx_(ctx), rng_(seed) {}

  Operation &generate() {
    Operation &module = ctx_.create_module();
    if (chance(4))
      gpu_module(module);
    int funcs = 1 + pick(3);
    for (int f = 0; f < funcs; ++f)
      function(module, "f" + std::to_string(f));
    return module;
  }

private:
  Context &ctx_;
  std::mt19937_64 rng_;
  std::vector<std::string> kernels_;

  int pick(int n) { return static_cast<int>(rng_() % static_cast<std::uint64_t>(n)); }
  bool chance(int one_in) { return pick(one_in) == 0; }

  Type scalar_type() {
    static const Type types[] = {Type::f64(), Type::f32(), Type::i32(),
                                 Type::i64(), Type::index()};
    return types[pick(5)];
  }

  Type memref_type() {
    std::vector<std::int64_t> shape;
    int rank = 1 + pick(3);
    for (int d = 0; d < rank; ++d)
      shape.push_back(1 + pick(8));
    return Type::memref(shape, chance(2) ? Type::f64() : Type::i32());
  }

  double float_value() {
    static const double special[] = {0.0, 1.0, -2.5, 0.1, 1e-7, 3.14159, 1e20, -0.5};
    if (chance(2))
      return special[pick(8)];
    return static_cast<double>(static_cast<std::int64_t>(rng_() % 200001) - 100000) / 7.0;
  }

  std::vector<Value *> of_type(const std::vector<Value *> &avail, const Type &t) {
    std::vector<Value *> out;
    for (Value *v : avail)
      if (v->type() == t)
        out.push_back(v);
    return out;
  }

  Value *index_value(OpBuilder &b, std::vector<Value *> &avail, std::int64_t hi) {
    Value *c = b.constant_index(pick(static_cast<int>(hi)));
    avail.push_back(c);
    return c;
  }

  void op(OpBuilder &b, std::vector<Value *> &avail, int depth) {
    switch (pick(depth < 3 ? 12 : 8)) {
    case 0:
    case 1: {
      Type t = scalar_type();
      avail.push_back(t.is_float() ? b.constant_float(float_value(), t)
                                   : b.constant_int(pick(2001) - 1000, t));
      break;
    }
    case 2:
    case 3: {
      Type t = scalar_type();
      auto same = of_type(avail, t);
      if (same.size() < 1)
        break;
      Value *l = same[static_cast<std::size_t>(pick(static_cast<int>(same.size())))];
      Value *r = same[static_cast<std::size_t>(pick(static_cast<int>(same.size())))];
      // No integer division in the arith subset.
      avail.push_back(b.arith(static_cast<ArithKind>(pick(t.is_float() ? 4 : 3)), l, r));
      break;
    }
    case 4: {
      Type t = scalar_type();
      auto same = of_type(avail, t);
      if (same.empty())
        break;
      avail.push_back(b.cmp(static_cast<CmpKind>(pick(6)), same.front(), same.back()));
      break;
    }
    case 5: {
      std::vector<Value *> mems;
      for (Value *v : avail)
        if (v->type().is_memref())
          mems.push_back(v);
      if (mems.empty()) {
        avail.push_back(b.alloc(memref_type(), chance(2)));
        break;
      }
      Value *m = mems[static_cast<std::size_t>(pick(static_cast<int>(mems.size())))];
      std::vector<Value *> idx;
      for (auto extent : m->type().shape())
        idx.push_back(index_value(b, avail, extent));
      Value *loaded = b.load(m, idx);
      avail.push_back(loaded);
      if (chance(2))
        b.store(loaded, m, idx);
      break;
    }
    case 6: {
      auto idx = of_type(avail, Type::index());
      if (!idx.empty())
        avail.push_back(b.index_cast(idx.back(), Type::i64()));
      break;
    }
    case 7:
      avail.push_back(b.alloc(memref_type(), chance(2)));
      break;
    case 8: {
      Value *lb = index_value(b, avail, 4);
      Value *ub = index_value(b, avail, 20);
      Value *step = b.constant_index(1 + pick(3));
      Operation &loop = b.build_scf_for(lb, ub, step);
      nested(loop.region(0).block(), avail, depth, {loop.region(0).block().argument(0)});
      b.set_insertion_point_after(loop);
      break;
    }
    case 9: {
      auto conds = of_type(avail, Type::i1());
      if (conds.empty())
        break;
      Operation &iff = b.build_scf_if(conds.back(), chance(2));
      for (std::size_t r = 0; r < iff.num_regions(); ++r)
        nested(iff.region(r).block(), avail, depth, {});
      b.set_insertion_point_after(iff);
      break;
    }
    case 10: {
      Operation &loop = b.build_affine_for(pick(3), 3 + pick(10), 1 + pick(2));
      nested(loop.region(0).block(), avail, depth, {loop.region(0).block().argument(0)});
      b.set_insertion_point_after(loop);
      break;
    }
    case 11: {
      int dims = 1 + pick(2);
      std::vector<Value *> lbs, ubs, steps;
      for (int d = 0; d < dims; ++d) {
        lbs.push_back(b.constant_index(0));
        ubs.push_back(b.constant_index(1 + pick(8)));
        steps.push_back(b.constant_index(1));
      }
      Operation &par = b.build_scf_parallel(lbs, ubs, steps);
      if (chance(2))
        par.set_attr("mapping", Attribute::string(chance(2) ? "blocks" : "threads"));
      nested(par.region(0).block(), avail, depth, par.region(0).block().arguments());
      b.set_insertion_point_after(par);
      break;
    }
    }
  }

  void nested(Block &block, std::vector<Value *> avail, int depth,
              const std::vector<Value *> &args) {
    avail.insert(avail.end(), args.begin(), args.end());
    OpBuilder inner(ctx_);
    inner.set_insertion_point_to_end(block);
    int n = 1 + pick(5);
    for (int k = 0; k < n; ++k)
      op(inner, avail, depth + 1);
  }

  void function(Operation &module, const std::string &name) {
    std::vector<Type> params;
    int np = pick(5);
    for (int k = 0; k < np; ++k)
      params.push_back(chance(3) ? memref_type() : scalar_type());
    bool returns = chance(2);
    std::vector<Type> results;
    if (returns)
      results.push_back(Type::f64());
    Operation &fn = build_func(module, name, params, results);
    Block &entry = fn.region(0).block();
    OpBuilder b(ctx_);
    b.set_insertion_point_to_end(entry);
    std::vector<Value *> avail = entry.arguments();
    int n = 2 + pick(10);
    for (int k = 0; k < n; ++k)
      op(b, avail, 0);
    if (!kernels_.empty() && chance(2)) {
      Value *one = b.constant_index(1);
      Value *g = b.constant_index(1 + pick(4));
      b.build_gpu_launch("kernels", kernels_[static_cast<std::size_t>(pick(
                                        static_cast<int>(kernels_.size())))],
                         {g, one, one}, {g, g, one}, {});
    }
    if (returns) {
      auto f = of_type(avail, Type::f64());
      b.func_return({f.empty() ? b.constant_float(float_value()) : f.back()});
    }
  }

  void gpu_module(Operation &module) {
    Operation &gm = build_gpu_module(module, "kernels");
    int n = 1 + pick(2);
    for (int k = 0; k < n; ++k) {
      std::string name = "k" + std::to_string(k);
      Operation &fn = build_gpu_func(gm, name, {});
      OpBuilder b(ctx_);
      b.set_insertion_point_to_end(fn.region(0).block());
      std::vector<Value *> avail;
      for (int d = 0; d < 3; ++d)
        avail.push_back(b.gpu_id(chance(2), d));
      int ops = 1 + pick(4);
      for (int j = 0; j < ops; ++j)
        op(b, avail, 2);
      kernels_.push_back(name);
    }
  }
};

/// Host source of `name(a: F64, b: F64)` with conditionals nested up to
/// `depth` levels. Every arm defines a distinct sentinel constant; their
/// values are appended to `sentinels`.
class ConditionalGenerator {
public:
  explicit ConditionalGenerator(std::uint64_t seed) : rng_(seed) {}

  std::string generate(const std::string &name, int depth,
                       std::vector<double> &sentinels) {
    sentinels_ = &sentinels;
    std::string src = "@mlir_func\ndef " + name + "(a: F64, b: F64):\n";
    if (rng_() % 2)
      src += "    x = a + b\n";
    src += conditional(1, depth, true);
    if (rng_() % 2)
      src += "    y = a * b\n";
    src += "    return\n";
    return src;
  }

private:
  std::mt19937_64 rng_;
  std::vector<double> *sentinels_ = nullptr;
  int next_ = 0;

  std::string indent(int level) const { return std::string(4 * level, ' '); }

  std::string sentinel(int level) {
    double v = 1000.0 + next_ + 0.25;
    sentinels_->push_back(v);
    std::string s = indent(level) + "s" + std::to_string(next_++) +
                    " = constant(" + std::to_string(v) + ")\n";
    return s;
  }

  // Arm body at `level`; `must_nest` forces the nesting chain to reach
  // `depth`.
  std::string arm(int level, int depth, bool must_nest) {
    std::string out = sentinel(level);
    bool nest = level <= depth && (must_nest || rng_() % 2);
    if (nest)
      out += conditional(level, depth, must_nest);
    if (rng_() % 3 == 0)
      out += sentinel(level);
    return out;
  }

  std::string conditional(int level, int depth, bool must_nest) {
    static const char *ops[] = {"<", "<=", ">", ">=", "==", "!="};
    std::string out = indent(level) + "if a " + ops[rng_() % 6] + " b:\n";
    bool nest_then = must_nest && rng_() % 2;
    out += arm(level + 1, depth, nest_then && level < depth);
    bool with_else = rng_() % 4 != 0 || (must_nest && !nest_then);
    if (with_else) {
      out += indent(level) + "else:\n";
      out += arm(level + 1, depth, must_nest && !nest_then && level < depth);
    }
    return out;
  }
};

} // namespace staircase::testing
