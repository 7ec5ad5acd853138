#include "transforms.hpp"

#include "staircase/dialects.hpp"

#include <charconv>
#include <map>
#include <set>

namespace staircase::passes {

namespace {

std::vector<Operation *> collect(Operation &root,
                                 const std::function<bool(Operation &)> &pred) {
  std::vector<Operation *> out;
  walk(
      root,
      [&](Operation &op) {
        if (&op != &root && pred(op))
          out.push_back(&op);
      },
      WalkOrder::Pre);
  return out;
}

bool is_loop(const Operation &op) {
  return op.is("scf.for") || op.is("affine.for") || op.is("scf.parallel");
}

bool has_ancestor(const Operation &op, const Operation &stop,
                  std::string_view name) {
  for (Operation *p = op.parent_op(); p && p != &stop; p = p->parent_op())
    if (p->is(name))
      return true;
  return false;
}

/// Moves every non-terminator op of `from` to the end of `to` (before its
/// terminator).
void move_body(Block &from, Block &to) {
  std::size_t n = from.size() - (from.terminator() ? 1 : 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t at = to.size() - (to.terminator() ? 1 : 0);
    to.insert(at, from.take(0));
  }
}

std::int64_t parse_int(const std::string &pass, const std::string &key,
                       const std::string &text) {
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size())
    throw Error(ErrorCode::SyntaxError,
                pass + ": '" + key + "' expects an integer, got '" + text + "'");
  return v;
}

std::vector<std::int64_t> parse_ints(const std::string &pass,
                                     const std::string &key,
                                     const std::string &text) {
  std::vector<std::int64_t> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t comma = text.find(',', start);
    if (comma == std::string::npos)
      comma = text.size();
    out.push_back(parse_int(pass, key, text.substr(start, comma - start)));
    start = comma + 1;
  }
  return out;
}

const std::string *param(const PassParams &params, std::string_view key) {
  for (const auto &[k, v] : params)
    if (k == key)
      return &v;
  return nullptr;
}

struct ConstPool {
  OpBuilder &b;
  std::map<std::int64_t, Value *> made;
  Value *get(std::int64_t v) {
    auto it = made.find(v);
    if (it != made.end())
      return it->second;
    return made[v] = b.constant_index(v);
  }
};

} // namespace

void run_pass(const std::string &name, Operation &anchor,
              const PassParams &params, PassResult &result) {
  if (name == "lower-affine") {
    lower_affine(anchor, result);
  } else if (name == "loop-unroll") {
    const std::string *f = param(params, "factor");
    loop_unroll(anchor, f ? parse_int(name, "factor", *f) : 2, result);
  } else if (name == "scf-parallel-loop-tiling") {
    const std::string *s = param(params, "sizes");
    if (!s)
      throw Error(ErrorCode::SyntaxError, name + " needs sizes=...");
    parallel_loop_tiling(anchor, parse_ints(name, "sizes", *s), result);
  } else if (name == "gpu-map-parallel-loops") {
    gpu_map_parallel_loops(anchor, result);
  } else if (name == "gpu-kernel-outlining") {
    gpu_kernel_outlining(anchor, result);
  } else if (name == "canonicalize") {
    canonicalize(anchor, result);
  } else {
    throw Error(ErrorCode::UnknownPass, "unknown pass '" + name + "'");
  }
}

//===----------------------------------------------------------------------===//
// lower-affine
//===----------------------------------------------------------------------===//

void lower_affine(Operation &anchor, PassResult &result) {
  auto loops = collect(anchor, [](Operation &op) { return op.is("affine.for"); });
  for (Operation *loop : loops) {
    OpBuilder b(loop->context());
    b.set_insertion_point_before(*loop);
    b.set_location(loop->location());
    Value *lb = b.constant_index(loop->attr("lower_bound")->as_int());
    Value *ub = b.constant_index(loop->attr("upper_bound")->as_int());
    Value *step = b.constant_index(loop->attr("step")->as_int());
    Operation &f = b.build_scf_for(lb, ub, step);
    Block &from = loop->region(0).block();
    Block &to = f.region(0).block();
    move_body(from, to);
    replace_all_uses_with(*from.argument(0), *to.argument(0));
    erase_op(*loop);
    ++result.rewrites;
  }
}

//===----------------------------------------------------------------------===//
// loop-unroll
//===----------------------------------------------------------------------===//

void loop_unroll(Operation &anchor, std::int64_t factor, PassResult &result) {
  if (factor < 1)
    throw Error(ErrorCode::InvalidFactor,
                "unroll factor must be >= 1, got " + std::to_string(factor));
  auto loops = collect(anchor, [](Operation &op) {
    if (!op.is("scf.for") && !op.is("affine.for"))
      return false;
    for (std::size_t r = 0; r < op.num_regions(); ++r)
      for (const auto &inner : op.region(r).block().operations()) {
        bool nested = false;
        walk(*inner, [&](Operation &o) { nested |= is_loop(o); });
        if (nested)
          return false;
      }
    return true;
  });
  if (factor == 1)
    return;

  for (Operation *loop : loops) {
    std::int64_t lb, ub, step;
    if (loop->is("affine.for")) {
      lb = loop->attr("lower_bound")->as_int();
      ub = loop->attr("upper_bound")->as_int();
      step = loop->attr("step")->as_int();
    } else if (auto cb = constant_bounds(*loop)) {
      lb = cb->lb, ub = cb->ub, step = cb->step;
    } else {
      ++result.skipped;
      continue;
    }
    auto trips = trip_count(lb, ub, step);
    if (!trips || *trips % factor != 0) {
      ++result.skipped;
      continue;
    }

    OpBuilder b(loop->context());
    b.set_insertion_point_before(*loop);
    b.set_location(loop->location());
    if (loop->is("affine.for"))
      loop->set_attr("step", Attribute::integer(step * factor));
    else
      loop->set_operand(2, b.constant_index(step * factor));
    std::vector<Value *> offsets;
    for (std::int64_t k = 1; k < factor; ++k)
      offsets.push_back(b.constant_index(k * step));

    Block &body = loop->region(0).block();
    Value *iv = body.argument(0);
    std::vector<Operation *> original;
    for (std::size_t i = 0; i + 1 < body.size(); ++i)
      original.push_back(&body.op(i));
    for (Value *off : offsets) {
      OpBuilder ib(loop->context());
      ib.set_location(loop->location());
      ib.set_insertion_point_to_end(body);
      IRMapping m;
      m.map(iv, ib.arith(ArithKind::Add, iv, off));
      for (Operation *op : original)
        body.insert(body.size() - 1, op->clone(m));
    }
    ++result.rewrites;
  }
}

//===----------------------------------------------------------------------===//
// scf-parallel-loop-tiling
//===----------------------------------------------------------------------===//

void parallel_loop_tiling(Operation &anchor,
                          const std::vector<std::int64_t> &sizes,
                          PassResult &result) {
  for (auto s : sizes)
    if (s < 1)
      throw Error(ErrorCode::InvalidFactor,
                  "tile sizes must be >= 1, got " + std::to_string(s));
  auto loops = collect(anchor, [&](Operation &op) {
    return op.is("scf.parallel") && !has_ancestor(op, anchor, "scf.parallel");
  });
  for (Operation *par : loops) {
    Block &body = par->region(0).block();
    std::size_t n = body.num_arguments();
    if (sizes.size() != n)
      throw Error(ErrorCode::ArityMismatch,
                  "tiling a " + std::to_string(n) + "-d scf.parallel needs " +
                      std::to_string(n) + " sizes, got " +
                      std::to_string(sizes.size()),
                  par->location());
    std::vector<std::int64_t> steps(n);
    bool ok = true;
    for (std::size_t d = 0; d < n && ok; ++d) {
      auto lb = constant_int(par->operand(d));
      auto ub = constant_int(par->operand(n + d));
      auto st = constant_int(par->operand(2 * n + d));
      auto trips = lb && ub && st ? trip_count(*lb, *ub, *st) : std::nullopt;
      ok = trips && *trips % sizes[d] == 0;
      if (ok)
        steps[d] = *st;
    }
    if (!ok) {
      ++result.skipped;
      continue;
    }

    OpBuilder b(par->context());
    b.set_insertion_point_before(*par);
    b.set_location(par->location());
    ConstPool pool{b, {}};
    std::vector<Value *> lbs, ubs, outer_steps, zeros, inner_ubs, inner_steps;
    for (std::size_t d = 0; d < n; ++d) {
      lbs.push_back(par->operand(d));
      ubs.push_back(par->operand(n + d));
      inner_steps.push_back(par->operand(2 * n + d));
      outer_steps.push_back(pool.get(steps[d] * sizes[d]));
      inner_ubs.push_back(outer_steps.back());
      zeros.push_back(pool.get(0));
    }
    Operation &outer = b.build_scf_parallel(lbs, ubs, outer_steps);
    if (const Attribute *m = par->attr("mapping"))
      outer.set_attr("mapping", *m);
    Block &ob = outer.region(0).block();
    b.set_insertion_point_to_end(ob);
    Operation &inner = b.build_scf_parallel(zeros, inner_ubs, inner_steps);
    Block &ib = inner.region(0).block();
    b.set_insertion_point_to_end(ib);
    std::vector<Value *> index;
    for (std::size_t d = 0; d < n; ++d)
      index.push_back(b.arith(ArithKind::Add, ob.argument(d), ib.argument(d)));
    move_body(body, ib);
    for (std::size_t d = 0; d < n; ++d)
      replace_all_uses_with(*body.argument(d), *index[d]);
    erase_op(*par);
    ++result.rewrites;
  }
}

//===----------------------------------------------------------------------===//
// gpu-map-parallel-loops
//===----------------------------------------------------------------------===//

void gpu_map_parallel_loops(Operation &anchor, PassResult &result) {
  std::vector<Operation *> funcs;
  if (anchor.is("func.func"))
    funcs.push_back(&anchor);
  else
    funcs = collect(anchor, [](Operation &op) { return op.is("func.func"); });
  static const char *levels[] = {"blocks", "threads", "sequential"};
  for (Operation *fn : funcs) {
    for (Operation *par :
         collect(*fn, [](Operation &op) { return op.is("scf.parallel"); })) {
      int depth = 0;
      for (Operation *p = par->parent_op(); p && p != fn; p = p->parent_op())
        if (p->is("scf.parallel"))
          ++depth;
      Attribute level = Attribute::string(levels[std::min(depth, 2)]);
      const Attribute *old = par->attr("mapping");
      if (old && *old == level)
        continue;
      par->set_attr("mapping", level);
      ++result.rewrites;
    }
  }
}

//===----------------------------------------------------------------------===//
// gpu-kernel-outlining
//===----------------------------------------------------------------------===//

namespace {

bool has_mapping(const Operation &op, std::string_view level) {
  const Attribute *m = op.attr("mapping");
  return op.is("scf.parallel") && m && m->is_string() && m->as_string() == level;
}

bool defined_inside(const Value *v, const Operation &scope) {
  const Block *b = v->parent_block();
  const Operation *owner = b ? b->parent_op() : nullptr;
  return owner && scope.is_ancestor_of(owner);
}

struct LoopDims {
  std::vector<std::int64_t> lb, ub, step;
  std::int64_t trips(std::size_t d) const {
    return *trip_count(lb[d], ub[d], step[d]);
  }
};

LoopDims dims_of(const Operation &par) {
  std::size_t n = par.region(0).block().num_arguments();
  LoopDims out;
  for (std::size_t d = 0; d < n; ++d) {
    auto lb = constant_int(par.operand(d));
    auto ub = constant_int(par.operand(n + d));
    auto st = constant_int(par.operand(2 * n + d));
    if (!lb || !ub || !st)
      throw Error(ErrorCode::OutliningUnsupported,
                  "mapped scf.parallel has non-constant bounds",
                  par.location());
    out.lb.push_back(*lb);
    out.ub.push_back(*ub);
    out.step.push_back(*st);
  }
  return out;
}

// Binds the induction variables of `par` inside the kernel: the first three
// dimensions come from the hardware ids, the rest from sequential loops.
// Leaves `b` inside the innermost loop created.
void bind_ivs(OpBuilder &b, const Operation &par, const LoopDims &dims,
              bool thread, IRMapping &m) {
  Block &body = par.region(0).block();
  std::size_t n = body.num_arguments();
  for (std::size_t d = 0; d < n && d < 3; ++d) {
    Value *iv = b.gpu_id(thread, static_cast<int>(d));
    if (dims.step[d] != 1)
      iv = b.arith(ArithKind::Mul, iv, b.constant_index(dims.step[d]));
    if (dims.lb[d] != 0)
      iv = b.arith(ArithKind::Add, iv, b.constant_index(dims.lb[d]));
    m.map(body.argument(d), iv);
  }
  for (std::size_t d = 3; d < n; ++d) {
    Value *lb = b.constant_index(dims.lb[d]);
    Value *ub = b.constant_index(dims.ub[d]);
    Value *st = b.constant_index(dims.step[d]);
    Operation &loop = b.build_scf_for(lb, ub, st);
    Block &lbody = loop.region(0).block();
    m.map(body.argument(d), lbody.argument(0));
    b.set_insertion_point_to_end(lbody);
  }
}

std::string unique_symbol(const Operation &module, const std::string &base) {
  if (!lookup_symbol(module, base))
    return base;
  for (int i = 1;; ++i) {
    std::string s = base + "_" + std::to_string(i);
    if (!lookup_symbol(module, s))
      return s;
  }
}

} // namespace

void gpu_kernel_outlining(Operation &anchor, PassResult &result) {
  if (!anchor.is("builtin.module"))
    throw Error(ErrorCode::PassFailure,
                "gpu-kernel-outlining must be anchored at builtin.module, not " +
                    anchor.name());
  std::vector<Operation *> targets;
  for (Operation *fn :
       collect(anchor, [](Operation &op) { return op.is("func.func"); }))
    for (Operation *par : collect(*fn, [&](Operation &op) {
           return has_mapping(op, "blocks") &&
                  !has_ancestor(op, *fn, "scf.parallel");
         }))
      targets.push_back(par);

  for (Operation *par : targets) {
    Context &ctx = par->context();
    Location loc = par->location();
    LoopDims grid_dims = dims_of(*par);

    Block &pbody = par->region(0).block();
    Operation *threads = nullptr;
    if (pbody.size() == 2 && has_mapping(pbody.op(0), "threads"))
      threads = &pbody.op(0);
    LoopDims block_dims;
    if (threads)
      block_dims = dims_of(*threads);
    Block &inner = threads ? threads->region(0).block() : pbody;

    // Free values in first-use order; constants are re-created in the kernel.
    std::vector<Value *> args, sunk;
    std::set<const Value *> seen;
    walk(
        *par,
        [&](Operation &op) {
          if (&op == par)
            return;
          for (Value *v : op.operands()) {
            if (defined_inside(v, *par) || !seen.insert(v).second)
              continue;
            if (v->defining_op() && v->defining_op()->is("arith.constant"))
              sunk.push_back(v);
            else
              args.push_back(v);
          }
        },
        WalkOrder::Pre);

    Operation &fn = *const_cast<Operation *>(
        [&] {
          const Operation *p = par;
          while (!p->is("func.func"))
            p = p->parent_op();
          return p;
        }());
    std::string name =
        unique_symbol(anchor, fn.attr("sym_name")->as_string() + "_kernel");
    std::vector<Type> arg_types;
    for (Value *v : args)
      arg_types.push_back(v->type());
    Operation &gm = build_gpu_module(anchor, name, loc);
    Operation &kernel = build_gpu_func(gm, name, arg_types, {}, loc);
    Block &kbody = kernel.region(0).block();

    OpBuilder b(ctx);
    b.set_location(loc);
    b.set_insertion_point_to_end(kbody);
    IRMapping m;
    for (std::size_t i = 0; i < args.size(); ++i)
      m.map(args[i], kbody.argument(i));
    for (Value *v : sunk) {
      auto c = v->defining_op()->clone();
      Value *r = c->result(0);
      b.block()->insert(b.index(), std::move(c));
      b.set_insertion_point(*b.block(), b.index() + 1);
      m.map(v, r);
    }
    bind_ivs(b, *par, grid_dims, false, m);
    if (threads)
      bind_ivs(b, *threads, block_dims, true, m);
    for (std::size_t i = 0; i + 1 < inner.size(); ++i) {
      b.block()->insert(b.index(), inner.op(i).clone(m));
      b.set_insertion_point(*b.block(), b.index() + 1);
    }

    OpBuilder lb(ctx);
    lb.set_location(loc);
    lb.set_insertion_point_before(*par);
    std::array<Value *, 3> grid{}, block{};
    for (std::size_t d = 0; d < 3; ++d) {
      std::int64_t g = d < grid_dims.lb.size() ? grid_dims.trips(d) : 1;
      grid[d] = lb.constant_index(g);
    }
    for (std::size_t d = 0; d < 3; ++d) {
      std::int64_t t =
          threads && d < block_dims.lb.size() ? block_dims.trips(d) : 1;
      block[d] = lb.constant_index(t);
    }
    lb.build_gpu_launch(name, name, grid, block, args);
    erase_op(*par);
    ++result.rewrites;
  }
}

//===----------------------------------------------------------------------===//
// canonicalize
//===----------------------------------------------------------------------===//

namespace {

std::optional<Value *> fold(Operation &op) {
  static const std::set<std::string, std::less<>> foldable = {
      "arith.addf", "arith.subf", "arith.mulf", "arith.divf",
      "arith.addi", "arith.subi", "arith.muli"};
  if (!foldable.count(op.name()))
    return std::nullopt;
  Type t = op.result(0)->type();
  OpBuilder b(op.context());
  b.set_insertion_point_before(op);
  b.set_location(op.location());
  std::string_view kind = std::string_view(op.name()).substr(6, 3);
  if (t.is_float()) {
    auto x = constant_float(op.operand(0)), y = constant_float(op.operand(1));
    if (!x || !y)
      return std::nullopt;
    double r = kind == "add" ? *x + *y
               : kind == "sub" ? *x - *y
               : kind == "mul" ? *x * *y
                               : *x / *y;
    return b.constant_float(r, t);
  }
  auto x = constant_int(op.operand(0)), y = constant_int(op.operand(1));
  if (!x || !y)
    return std::nullopt;
  auto ux = static_cast<std::uint64_t>(*x), uy = static_cast<std::uint64_t>(*y);
  std::uint64_t r = kind == "add" ? ux + uy : kind == "sub" ? ux - uy : ux * uy;
  return b.constant_int(static_cast<std::int64_t>(r), t);
}

bool fold_all(Operation &anchor, PassResult &result) {
  bool changed = false;
  for (Operation *op : collect(anchor, [](Operation &) { return true; })) {
    if (op->num_results() != 1)
      continue;
    if (auto v = fold(*op)) {
      replace_all_uses_with(*op->result(0), **v);
      erase_op(*op);
      ++result.rewrites;
      changed = true;
    }
  }
  return changed;
}

void dedup_block(Block &block, PassResult &result, bool &changed) {
  std::map<std::pair<std::string, std::string>, Value *> seen;
  for (std::size_t i = 0; i < block.size();) {
    Operation &op = block.op(i);
    if (op.is("arith.constant")) {
      auto key = std::make_pair(op.result(0)->type().str(),
                                op.attr("value")->str());
      auto [it, fresh] = seen.emplace(key, op.result(0));
      if (!fresh) {
        replace_all_uses_with(*op.result(0), *it->second);
        erase_op(op);
        ++result.rewrites;
        changed = true;
        continue;
      }
    }
    for (std::size_t r = 0; r < op.num_regions(); ++r)
      for (std::size_t k = 0; k < op.region(r).num_blocks(); ++k)
        dedup_block(op.region(r).block(k), result, changed);
    ++i;
  }
}

bool erase_dead(Operation &anchor, PassResult &result) {
  bool changed = false;
  std::vector<Operation *> ops =
      collect(anchor, [](Operation &) { return true; });
  // Users come after producers, so sweeping backwards frees whole chains.
  for (auto it = ops.rbegin(); it != ops.rend(); ++it) {
    Operation *op = *it;
    if (op->num_results() == 0 || !is_side_effect_free(*op))
      continue;
    bool used = false;
    for (Value *r : op->results())
      used |= r->has_uses();
    if (used)
      continue;
    erase_op(*op);
    ++result.rewrites;
    changed = true;
  }
  return changed;
}

} // namespace

void canonicalize(Operation &anchor, PassResult &result) {
  while (true) {
    bool changed = fold_all(anchor, result);
    for (std::size_t r = 0; r < anchor.num_regions(); ++r)
      for (std::size_t k = 0; k < anchor.region(r).num_blocks(); ++k)
        dedup_block(anchor.region(r).block(k), result, changed);
    changed |= erase_dead(anchor, result);
    if (!changed)
      return;
  }
}

} // namespace staircase::passes
