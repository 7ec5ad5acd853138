#include "staircase/dialects.hpp"

#include <algorithm>

namespace staircase {

//===----------------------------------------------------------------------===//
// Helpers
//===----------------------------------------------------------------------===//

std::string cmp_predicate(CmpKind kind, bool is_float) {
  static const char *float_preds[] = {"olt", "ole", "ogt", "oge", "oeq", "one"};
  static const char *int_preds[] = {"slt", "sle", "sgt", "sge", "eq", "ne"};
  auto i = static_cast<std::size_t>(kind);
  return is_float ? float_preds[i] : int_preds[i];
}

std::optional<std::int64_t> constant_int(const Value *v) {
  if (!v || !v->defining_op() || !v->defining_op()->is("arith.constant"))
    return std::nullopt;
  const Attribute *a = v->defining_op()->attr("value");
  if (!a || !a->is_int())
    return std::nullopt;
  return a->as_int();
}

std::optional<double> constant_float(const Value *v) {
  if (!v || !v->defining_op() || !v->defining_op()->is("arith.constant"))
    return std::nullopt;
  const Attribute *a = v->defining_op()->attr("value");
  if (!a || !a->is_float())
    return std::nullopt;
  return a->as_float().value;
}

std::optional<std::int64_t> trip_count(std::int64_t lb, std::int64_t ub,
                                       std::int64_t step) {
  if (step <= 0)
    return std::nullopt;
  if (ub <= lb)
    return 0;
  return (ub - lb + step - 1) / step;
}

std::optional<ConstBounds> constant_bounds(const Operation &loop) {
  if (loop.is("affine.for")) {
    return ConstBounds{loop.attr("lower_bound")->as_int(),
                       loop.attr("upper_bound")->as_int(),
                       loop.attr("step")->as_int()};
  }
  if (!loop.is("scf.for"))
    return std::nullopt;
  auto lb = constant_int(loop.operand(0));
  auto ub = constant_int(loop.operand(1));
  auto step = constant_int(loop.operand(2));
  if (!lb || !ub || !step || *step <= 0)
    return std::nullopt;
  return ConstBounds{*lb, *ub, *step};
}

const Operation *enclosing_module(const Operation &op) {
  const Operation *cur = &op;
  while (cur && !cur->is("builtin.module"))
    cur = cur->parent_op();
  return cur ? cur : &op;
}

std::vector<Type> func_param_types(const Operation &func) {
  std::vector<Type> types;
  if (func.num_regions() == 0 || func.region(0).empty())
    return types;
  for (Value *arg : func.region(0).block().arguments())
    types.push_back(arg->type());
  return types;
}

std::vector<Type> func_result_types(const Operation &func) {
  std::vector<Type> types;
  if (const Attribute *a = func.attr("result_types"); a && a->is_array())
    for (const auto &t : a->as_array())
      if (t.is_type())
        types.push_back(t.as_type());
  return types;
}

void set_func_result_types(Operation &func, const std::vector<Type> &types) {
  Attribute::Array arr;
  for (const auto &t : types)
    arr.push_back(Attribute::type(t));
  func.set_attr("result_types", Attribute::array(std::move(arr)));
}

Operation *resolve_kernel(const Operation &module, const SymbolRef &ref) {
  if (ref.path.size() != 2)
    return nullptr;
  Operation *gm = lookup_symbol(module, ref.path[0]);
  if (!gm || !gm->is("gpu.module"))
    return nullptr;
  Operation *fn = lookup_symbol(*gm, ref.path[1]);
  if (!fn || !fn->is("gpu.func"))
    return nullptr;
  return fn;
}

bool is_side_effect_free(const Operation &op) {
  return op.schema() && !op.schema()->has_side_effects && op.num_regions() == 0;
}

//===----------------------------------------------------------------------===//
// Schemas
//===----------------------------------------------------------------------===//

namespace {

using Problems = std::vector<std::string>;
using Arity = OpSchema::Arity;

OpSchema make(std::string name, Arity operands, Arity results,
              Arity regions = {0, 0}) {
  OpSchema s;
  s.name = std::move(name);
  s.operands = operands;
  s.results = results;
  s.regions = regions;
  return s;
}

OpSchema pure(OpSchema s) {
  s.has_side_effects = false;
  return s;
}

std::string ty(const Value *v) { return v ? v->type().str() : "<null>"; }

bool all_index(const Operation &op, std::size_t from, std::size_t to) {
  for (std::size_t i = from; i < to && i < op.num_operands(); ++i)
    if (!op.operand(i) || !op.operand(i)->type().is_index())
      return false;
  return true;
}

void check_binary(const Operation &op, Problems &out, bool want_float) {
  if (op.num_operands() != 2 || op.num_results() != 1)
    return;
  const Value *a = op.operand(0), *b = op.operand(1);
  if (!a || !b)
    return;
  if (!(a->type() == b->type()))
    out.push_back("operand types differ: " + ty(a) + " vs " + ty(b));
  else if (want_float ? !a->type().is_float() : !a->type().is_int_like())
    out.push_back(std::string("expected ") +
                  (want_float ? "float" : "integer or index") +
                  " operands, got " + ty(a));
  else if (!(op.result(0)->type() == a->type()))
    out.push_back("result type must equal operand type");
}

void check_cmp(const Operation &op, Problems &out, bool want_float) {
  if (op.num_operands() != 2 || op.num_results() != 1)
    return;
  const Value *a = op.operand(0), *b = op.operand(1);
  if (a && b) {
    if (!(a->type() == b->type()))
      out.push_back("operand types differ: " + ty(a) + " vs " + ty(b));
    else if (want_float ? !a->type().is_float() : !a->type().is_int_like())
      out.push_back("comparison operand kind mismatch: " + ty(a));
  }
  if (!op.result(0)->type().is_int_like() ||
      op.result(0)->type().kind() != TypeKind::I1)
    out.push_back("comparison result must be i1");
  const Attribute *p = op.attr("predicate");
  if (!p || !p->is_string()) {
    out.push_back("missing string 'predicate'");
    return;
  }
  bool ok = false;
  for (int k = 0; k < 6; ++k)
    ok |= p->as_string() == cmp_predicate(static_cast<CmpKind>(k), want_float);
  if (!ok)
    out.push_back("unknown predicate '" + p->as_string() + "'");
}

void check_single_index_body(const Operation &op, Problems &out,
                             std::size_t nargs) {
  if (op.num_regions() == 0 || op.region(0).empty())
    return;
  const Block &body = op.region(0).block();
  if (body.num_arguments() != nargs) {
    out.push_back("body must have " + std::to_string(nargs) +
                  " index argument(s), has " +
                  std::to_string(body.num_arguments()));
    return;
  }
  for (Value *a : body.arguments())
    if (!a->type().is_index())
      out.push_back("induction variables must be index");
}

void check_func_like_body(const Operation &op, Problems &out) {
  const Attribute *sym = op.attr("sym_name");
  if (!sym || !sym->is_string())
    out.push_back("missing string 'sym_name'");
}

void check_memref_indices(const Operation &op, Problems &out,
                          std::size_t memref_pos) {
  if (op.num_operands() <= memref_pos || !op.operand(memref_pos))
    return;
  const Type &mt = op.operand(memref_pos)->type();
  if (!mt.is_memref()) {
    out.push_back("expected memref operand, got " + mt.str());
    return;
  }
  std::size_t nidx = op.num_operands() - memref_pos - 1;
  if (nidx != mt.rank())
    out.push_back("index count " + std::to_string(nidx) +
                  " does not match memref rank " + std::to_string(mt.rank()));
  if (!all_index(op, memref_pos + 1, op.num_operands()))
    out.push_back("memref indices must be index");
}

const Operation *parent_func_like(const Operation &op) {
  const Operation *p = op.parent_op();
  while (p && !p->is("func.func") && !p->is("gpu.func"))
    p = p->parent_op();
  return p;
}

void check_unique_symbols(const Operation &op, Problems &out) {
  if (op.num_regions() == 0 || op.region(0).empty())
    return;
  std::vector<std::string> names;
  for (const auto &child : op.region(0).block().operations())
    if (const Attribute *s = child->attr("sym_name"); s && s->is_string())
      names.push_back(s->as_string());
  std::sort(names.begin(), names.end());
  for (std::size_t i = 1; i < names.size(); ++i)
    if (names[i] == names[i - 1])
      out.push_back("duplicate symbol '@" + names[i] + "'");
}

DialectDef arith_dialect() {
  DialectDef d{"arith", {}};
  auto constant = pure(make("arith.constant", {0, 0}, {1, 1}));
  constant.required_attrs = {"value"};
  constant.type_rules = [](const Operation &op, Problems &out) {
    const Attribute *v = op.attr("value");
    if (!v || op.num_results() != 1)
      return;
    const Type &t = op.result(0)->type();
    if (v->is_float()) {
      if (!t.is_float())
        out.push_back("float constant with non-float type " + t.str());
      else if (v->as_float().width != t.kind())
        out.push_back("float constant width does not match " + t.str());
    } else if (v->is_int()) {
      if (!t.is_int_like())
        out.push_back("integer constant with non-integer type " + t.str());
      else if (t.kind() == TypeKind::I1 && v->as_int() != 0 && v->as_int() != 1)
        out.push_back("i1 constant must be 0 or 1");
    } else {
      out.push_back("constant 'value' must be an integer or float");
    }
  };
  d.ops.push_back(constant);
  for (const char *n : {"addf", "subf", "mulf", "divf"}) {
    auto s = pure(make(std::string("arith.") + n, {2, 2}, {1, 1}));
    s.type_rules = [](const Operation &op, Problems &out) {
      check_binary(op, out, true);
    };
    d.ops.push_back(s);
  }
  for (const char *n : {"addi", "subi", "muli"}) {
    auto s = pure(make(std::string("arith.") + n, {2, 2}, {1, 1}));
    s.type_rules = [](const Operation &op, Problems &out) {
      check_binary(op, out, false);
    };
    d.ops.push_back(s);
  }
  auto cmpf = pure(make("arith.cmpf", {2, 2}, {1, 1}));
  cmpf.required_attrs = {"predicate"};
  cmpf.type_rules = [](const Operation &op, Problems &out) {
    check_cmp(op, out, true);
  };
  d.ops.push_back(cmpf);
  auto cmpi = pure(make("arith.cmpi", {2, 2}, {1, 1}));
  cmpi.required_attrs = {"predicate"};
  cmpi.type_rules = [](const Operation &op, Problems &out) {
    check_cmp(op, out, false);
  };
  d.ops.push_back(cmpi);
  auto cast = pure(make("arith.index_cast", {1, 1}, {1, 1}));
  cast.type_rules = [](const Operation &op, Problems &out) {
    if (op.num_operands() != 1 || op.num_results() != 1 || !op.operand(0))
      return;
    const Type &from = op.operand(0)->type();
    const Type &to = op.result(0)->type();
    if (!from.is_int_like() || !to.is_int_like() ||
        (from.is_index() == to.is_index()))
      out.push_back("index_cast converts between index and an integer type, "
                    "got " + from.str() + " to " + to.str());
  };
  d.ops.push_back(cast);
  return d;
}

DialectDef scf_dialect() {
  DialectDef d{"scf", {}};
  auto for_op = make("scf.for", {3, 3}, {0, 0}, {1, 1});
  for_op.terminator = "scf.yield";
  for_op.type_rules = [](const Operation &op, Problems &out) {
    if (!all_index(op, 0, 3))
      out.push_back("scf.for bounds and step must be index");
    if (auto step = constant_int(op.num_operands() == 3 ? op.operand(2) : nullptr);
        step && *step <= 0)
      out.push_back("scf.for step must be positive");
  };
  for_op.verify = [](const Operation &op, Problems &out) {
    check_single_index_body(op, out, 1);
  };
  d.ops.push_back(for_op);

  auto if_op = make("scf.if", {1, 1}, {0, 0}, {1, 2});
  if_op.terminator = "scf.yield";
  if_op.type_rules = [](const Operation &op, Problems &out) {
    if (op.num_operands() == 1 && op.operand(0) &&
        op.operand(0)->type().kind() != TypeKind::I1)
      out.push_back("scf.if condition must be i1, got " + ty(op.operand(0)));
  };
  if_op.verify = [](const Operation &op, Problems &out) {
    for (std::size_t r = 0; r < op.num_regions(); ++r)
      if (!op.region(r).empty() && op.region(r).block().num_arguments() != 0)
        out.push_back("scf.if regions take no arguments");
  };
  d.ops.push_back(if_op);

  auto par = make("scf.parallel", {3, -1}, {0, 0}, {1, 1});
  par.terminator = "scf.yield";
  par.type_rules = [](const Operation &op, Problems &out) {
    if (op.num_operands() % 3 != 0 || op.num_operands() == 0) {
      out.push_back("scf.parallel needs equal numbers of lbs/ubs/steps");
      return;
    }
    if (!all_index(op, 0, op.num_operands()))
      out.push_back("scf.parallel bounds and steps must be index");
    if (const Attribute *m = op.attr("mapping")) {
      if (!m->is_string() ||
          (m->as_string() != "blocks" && m->as_string() != "threads" &&
           m->as_string() != "sequential"))
        out.push_back("mapping must be \"blocks\", \"threads\" or "
                      "\"sequential\"");
    }
  };
  par.verify = [](const Operation &op, Problems &out) {
    check_single_index_body(op, out, op.num_operands() / 3);
  };
  d.ops.push_back(par);

  auto yield = pure(make("scf.yield", {0, 0}, {0, 0}));
  yield.is_terminator = true;
  d.ops.push_back(yield);
  return d;
}

DialectDef affine_dialect() {
  DialectDef d{"affine", {}};
  auto for_op = make("affine.for", {0, 0}, {0, 0}, {1, 1});
  for_op.terminator = "affine.yield";
  for_op.required_attrs = {"lower_bound", "upper_bound", "step"};
  for_op.type_rules = [](const Operation &op, Problems &out) {
    const Attribute *lb = op.attr("lower_bound");
    const Attribute *ub = op.attr("upper_bound");
    const Attribute *st = op.attr("step");
    if (!lb || !ub || !st)
      return;
    if (!lb->is_int() || !ub->is_int() || !st->is_int()) {
      out.push_back("affine.for bounds must be integer literals");
      return;
    }
    if (st->as_int() < 1)
      out.push_back("affine.for step must be >= 1");
    if (ub->as_int() < lb->as_int())
      out.push_back("affine.for upper bound below lower bound");
  };
  for_op.verify = [](const Operation &op, Problems &out) {
    check_single_index_body(op, out, 1);
  };
  d.ops.push_back(for_op);
  auto yield = pure(make("affine.yield", {0, 0}, {0, 0}));
  yield.is_terminator = true;
  d.ops.push_back(yield);
  return d;
}

DialectDef memref_dialect() {
  DialectDef d{"memref", {}};
  for (const char *n : {"memref.alloc", "memref.alloca"}) {
    auto s = pure(make(n, {0, 0}, {1, 1}));
    s.type_rules = [](const Operation &op, Problems &out) {
      if (op.num_results() == 1 && !op.result(0)->type().is_memref())
        out.push_back("allocation result must be a memref");
    };
    d.ops.push_back(s);
  }
  auto dealloc = make("memref.dealloc", {1, 1}, {0, 0});
  dealloc.type_rules = [](const Operation &op, Problems &out) {
    if (op.num_operands() == 1 && op.operand(0) &&
        !op.operand(0)->type().is_memref())
      out.push_back("dealloc expects a memref");
  };
  d.ops.push_back(dealloc);

  auto load = pure(make("memref.load", {1, -1}, {1, 1}));
  load.type_rules = [](const Operation &op, Problems &out) {
    check_memref_indices(op, out, 0);
    if (op.num_operands() >= 1 && op.operand(0) &&
        op.operand(0)->type().is_memref() && op.num_results() == 1 &&
        !(op.result(0)->type() == op.operand(0)->type().element()))
      out.push_back("load result must be the element type");
  };
  d.ops.push_back(load);

  auto store = make("memref.store", {2, -1}, {0, 0});
  store.type_rules = [](const Operation &op, Problems &out) {
    check_memref_indices(op, out, 1);
    if (op.num_operands() >= 2 && op.operand(0) && op.operand(1) &&
        op.operand(1)->type().is_memref() &&
        !(op.operand(0)->type() == op.operand(1)->type().element()))
      out.push_back("stored value type " + ty(op.operand(0)) +
                    " does not match element type " +
                    op.operand(1)->type().element().str());
  };
  d.ops.push_back(store);
  return d;
}

DialectDef func_dialect() {
  DialectDef d{"func", {}};
  auto func = make("func.func", {0, 0}, {0, 0}, {1, 1});
  func.terminator = "func.return";
  func.isolated_from_above = true;
  func.required_attrs = {"sym_name"};
  func.type_rules = check_func_like_body;
  d.ops.push_back(func);

  auto ret = make("func.return", {0, -1}, {0, 0});
  ret.is_terminator = true;
  ret.verify = [](const Operation &op, Problems &out) {
    const Operation *fn = op.parent_op();
    if (!fn || !fn->is("func.func")) {
      out.push_back("func.return must be directly inside func.func");
      return;
    }
    auto expected = func_result_types(*fn);
    if (expected.size() != op.num_operands()) {
      out.push_back("func.return has " + std::to_string(op.num_operands()) +
                    " operands, function returns " +
                    std::to_string(expected.size()));
      return;
    }
    for (std::size_t i = 0; i < expected.size(); ++i)
      if (op.operand(i) && !(op.operand(i)->type() == expected[i]))
        out.push_back("func.return operand #" + std::to_string(i) +
                      " type mismatch");
  };
  d.ops.push_back(ret);

  auto call = make("func.call", {0, -1}, {0, -1});
  call.required_attrs = {"callee"};
  call.verify = [](const Operation &op, Problems &out) {
    const Attribute *c = op.attr("callee");
    if (!c || !c->is_symbol() || c->as_symbol().path.size() != 1) {
      out.push_back("callee must be a flat symbol reference");
      return;
    }
    const Operation *module = enclosing_module(op);
    Operation *fn = lookup_symbol(*module, c->as_symbol().path[0]);
    if (!fn || !fn->is("func.func")) {
      out.push_back("call to undeclared function '@" +
                    c->as_symbol().path[0] + "'");
      return;
    }
    auto params = func_param_types(*fn);
    auto results = func_result_types(*fn);
    bool ok = params.size() == op.num_operands() &&
              results.size() == op.num_results();
    for (std::size_t i = 0; ok && i < params.size(); ++i)
      ok = op.operand(i) && op.operand(i)->type() == params[i];
    for (std::size_t i = 0; ok && i < results.size(); ++i)
      ok = op.result(i)->type() == results[i];
    if (!ok)
      out.push_back("call signature does not match '@" +
                    c->as_symbol().path[0] + "'");
  };
  d.ops.push_back(call);
  return d;
}

DialectDef gpu_dialect() {
  DialectDef d{"gpu", {}};
  auto module = make("gpu.module", {0, 0}, {0, 0}, {1, 1});
  module.isolated_from_above = true;
  module.required_attrs = {"sym_name"};
  module.type_rules = check_func_like_body;
  module.verify = check_unique_symbols;
  d.ops.push_back(module);

  auto func = make("gpu.func", {0, 0}, {0, 0}, {1, 1});
  func.terminator = "gpu.return";
  func.isolated_from_above = true;
  func.required_attrs = {"sym_name", "kernel"};
  func.type_rules = check_func_like_body;
  func.verify = [](const Operation &op, Problems &out) {
    const Operation *p = op.parent_op();
    if (!p || !p->is("gpu.module"))
      out.push_back("gpu.func must be directly inside gpu.module");
  };
  d.ops.push_back(func);

  auto ret = make("gpu.return", {0, 0}, {0, 0});
  ret.is_terminator = true;
  d.ops.push_back(ret);

  for (const char *n : {"gpu.block_id", "gpu.thread_id"}) {
    auto s = pure(make(n, {0, 0}, {1, 1}));
    s.required_attrs = {"dimension"};
    s.type_rules = [](const Operation &op, Problems &out) {
      const Attribute *dim = op.attr("dimension");
      if (dim && (!dim->is_string() ||
                  (dim->as_string() != "x" && dim->as_string() != "y" &&
                   dim->as_string() != "z")))
        out.push_back("dimension must be x, y or z");
      if (op.num_results() == 1 && !op.result(0)->type().is_index())
        out.push_back("result must be index");
    };
    s.verify = [](const Operation &op, Problems &out) {
      const Operation *fn = parent_func_like(op);
      if (!fn || !fn->is("gpu.func"))
        out.push_back(op.name() + " is only valid inside a gpu.func");
    };
    d.ops.push_back(s);
  }

  auto launch = make("gpu.launch_func", {6, -1}, {0, 0});
  launch.required_attrs = {"kernel"};
  launch.type_rules = [](const Operation &op, Problems &out) {
    if (!all_index(op, 0, 6))
      out.push_back("grid and block sizes must be index");
  };
  launch.verify = [](const Operation &op, Problems &out) {
    const Attribute *k = op.attr("kernel");
    if (!k || !k->is_symbol()) {
      out.push_back("kernel must be a symbol reference");
      return;
    }
    Operation *fn = resolve_kernel(*enclosing_module(op), k->as_symbol());
    if (!fn) {
      out.push_back("launch of unknown kernel " + k->str());
      return;
    }
    auto params = func_param_types(*fn);
    bool ok = params.size() + 6 == op.num_operands();
    for (std::size_t i = 0; ok && i < params.size(); ++i)
      ok = op.operand(i + 6) && op.operand(i + 6)->type() == params[i];
    if (!ok)
      out.push_back("launch arguments do not match kernel signature");
  };
  d.ops.push_back(launch);
  return d;
}

DialectDef builtin_dialect() {
  DialectDef d{"builtin", {}};
  auto module = make("builtin.module", {0, 0}, {0, 0}, {1, 1});
  module.isolated_from_above = true;
  module.verify = check_unique_symbols;
  d.ops.push_back(module);
  return d;
}

} // namespace

namespace detail {
void register_builtin_dialects(DialectRegistry &registry) {
  registry.register_dialect(arith_dialect());
  registry.register_dialect(scf_dialect());
  registry.register_dialect(affine_dialect());
  registry.register_dialect(memref_dialect());
  registry.register_dialect(func_dialect());
  registry.register_dialect(gpu_dialect());
  registry.register_dialect(builtin_dialect());
}
} // namespace detail

//===----------------------------------------------------------------------===//
// OpBuilder
//===----------------------------------------------------------------------===//

void OpBuilder::set_insertion_point_to_end(Block &block) {
  block_ = &block;
  index_ = block.terminator() ? block.size() - 1 : block.size();
}

void OpBuilder::set_insertion_point_before(Operation &op) {
  block_ = op.parent_block();
  index_ = op.index_in_block();
}

void OpBuilder::set_insertion_point_after(Operation &op) {
  block_ = op.parent_block();
  index_ = op.index_in_block() + 1;
}

Operation &OpBuilder::create(std::string name, std::vector<Value *> operands,
                             const std::vector<Type> &result_types,
                             std::map<std::string, Attribute> attributes,
                             std::size_t region_count) {
  if (!block_)
    throw Error(ErrorCode::HostError, "builder has no insertion point", loc_);
  Operation &op = create_op(*block_, index_, std::move(name),
                            std::move(operands), std::move(attributes),
                            result_types, region_count, loc_);
  index_ = op.index_in_block() + 1;
  return op;
}

Value *OpBuilder::constant_float(double value, Type type) {
  if (!type.is_float())
    throw Error(ErrorCode::TypeMismatch,
                "float constant needs a float type, got " + type.str(), loc_);
  if (type.kind() == TypeKind::F32)
    value = static_cast<float>(value);
  return create("arith.constant", {}, {type},
                {{"value", Attribute::real(value, type.kind())}})
      .result(0);
}

Value *OpBuilder::constant_int(std::int64_t value, Type type) {
  if (!type.is_int_like())
    throw Error(ErrorCode::TypeMismatch,
                "integer constant needs an integer type, got " + type.str(),
                loc_);
  if (type.kind() == TypeKind::I32)
    value = static_cast<std::int32_t>(value);
  else if (type.kind() == TypeKind::I1)
    value = value & 1;
  return create("arith.constant", {}, {type},
                {{"value", Attribute::integer(value)}})
      .result(0);
}

Value *OpBuilder::arith(ArithKind kind, Value *lhs, Value *rhs) {
  if (!(lhs->type() == rhs->type()))
    throw Error(ErrorCode::TypeMismatch,
                "arithmetic on mismatched types " + lhs->type().str() +
                    " and " + rhs->type().str(),
                loc_);
  const Type &t = lhs->type();
  std::string name;
  if (t.is_float()) {
    static const char *names[] = {"arith.addf", "arith.subf", "arith.mulf",
                                  "arith.divf"};
    name = names[static_cast<int>(kind)];
  } else if (t.is_int_like() && t.kind() != TypeKind::I1) {
    if (kind == ArithKind::Div)
      throw Error(ErrorCode::TypeMismatch, "integer division is not supported",
                  loc_);
    static const char *names[] = {"arith.addi", "arith.subi", "arith.muli"};
    name = names[static_cast<int>(kind)];
  } else {
    throw Error(ErrorCode::TypeMismatch,
                "arithmetic is not defined on " + t.str(), loc_);
  }
  return create(name, {lhs, rhs}, {t}).result(0);
}

Value *OpBuilder::cmp(CmpKind kind, Value *lhs, Value *rhs) {
  if (!(lhs->type() == rhs->type()))
    throw Error(ErrorCode::TypeMismatch,
                "comparison of mismatched types " + lhs->type().str() +
                    " and " + rhs->type().str(),
                loc_);
  bool is_float = lhs->type().is_float();
  if (!is_float && !lhs->type().is_int_like())
    throw Error(ErrorCode::TypeMismatch,
                "comparison is not defined on " + lhs->type().str(), loc_);
  return create(is_float ? "arith.cmpf" : "arith.cmpi", {lhs, rhs},
                {Type::i1()},
                {{"predicate", Attribute::string(cmp_predicate(kind, is_float))}})
      .result(0);
}

Value *OpBuilder::index_cast(Value *v, Type to) {
  return create("arith.index_cast", {v}, {to}).result(0);
}

static void require_index(Value *v, const char *what, const Location &loc) {
  if (!v || !v->type().is_index())
    throw Error(ErrorCode::TypeMismatch,
                std::string(what) + " must be index, got " +
                    (v ? v->type().str() : "<null>"),
                loc);
}

Operation &OpBuilder::build_scf_for(Value *lb, Value *ub, Value *step) {
  require_index(lb, "scf.for lower bound", loc_);
  require_index(ub, "scf.for upper bound", loc_);
  require_index(step, "scf.for step", loc_);
  if (auto s = staircase::constant_int(step); s && *s <= 0)
    throw Error(ErrorCode::InvalidBound, "scf.for step must be positive", loc_);
  Operation &loop = create("scf.for", {lb, ub, step}, {}, {}, 1);
  Block &body = loop.region(0).block();
  body.add_argument(Type::index());
  body.push_back(Operation::create(*ctx_, "scf.yield", {}, {}, {}, 0, loc_));
  return loop;
}

Operation &OpBuilder::build_affine_for(std::int64_t lb, std::int64_t ub,
                                       std::int64_t step) {
  if (step < 1)
    throw Error(ErrorCode::InvalidBound, "affine.for step must be >= 1", loc_);
  if (ub < lb)
    throw Error(ErrorCode::InvalidBound,
                "affine.for upper bound " + std::to_string(ub) +
                    " is below lower bound " + std::to_string(lb),
                loc_);
  Operation &loop = create("affine.for", {}, {},
                           {{"lower_bound", Attribute::integer(lb)},
                            {"upper_bound", Attribute::integer(ub)},
                            {"step", Attribute::integer(step)}},
                           1);
  Block &body = loop.region(0).block();
  body.add_argument(Type::index());
  body.push_back(
      Operation::create(*ctx_, "affine.yield", {}, {}, {}, 0, loc_));
  return loop;
}

Operation &OpBuilder::build_scf_if(Value *cond, bool with_else) {
  if (!cond || cond->type().kind() != TypeKind::I1)
    throw Error(ErrorCode::TypeMismatch,
                "scf.if condition must be i1, got " +
                    (cond ? cond->type().str() : std::string("<null>")),
                loc_);
  Operation &op = create("scf.if", {cond}, {}, {}, with_else ? 2 : 1);
  for (std::size_t r = 0; r < op.num_regions(); ++r)
    op.region(r).block().push_back(
        Operation::create(*ctx_, "scf.yield", {}, {}, {}, 0, loc_));
  return op;
}

Block &OpBuilder::add_else_region(Operation &if_op) {
  if (!if_op.is("scf.if") || if_op.num_regions() != 1)
    throw Error(ErrorCode::ArityMismatch, "scf.if already has an else region",
                if_op.location());
  Block &b = if_op.add_region().add_block();
  b.push_back(Operation::create(if_op.context(), "scf.yield", {}, {}, {}, 0,
                                if_op.location()));
  return b;
}

Operation &OpBuilder::build_scf_parallel(const std::vector<Value *> &lbs,
                                         const std::vector<Value *> &ubs,
                                         const std::vector<Value *> &steps) {
  if (lbs.empty() || lbs.size() != ubs.size() || lbs.size() != steps.size())
    throw Error(ErrorCode::ArityMismatch,
                "scf.parallel needs equal non-zero numbers of bounds and "
                "steps, got " +
                    std::to_string(lbs.size()) + "/" +
                    std::to_string(ubs.size()) + "/" +
                    std::to_string(steps.size()),
                loc_);
  std::vector<Value *> operands;
  for (auto *v : lbs) {
    require_index(v, "scf.parallel lower bound", loc_);
    operands.push_back(v);
  }
  for (auto *v : ubs) {
    require_index(v, "scf.parallel upper bound", loc_);
    operands.push_back(v);
  }
  for (auto *v : steps) {
    require_index(v, "scf.parallel step", loc_);
    if (auto s = staircase::constant_int(v); s && *s <= 0)
      throw Error(ErrorCode::InvalidBound, "scf.parallel step must be positive",
                  loc_);
    operands.push_back(v);
  }
  Operation &op = create("scf.parallel", operands, {}, {}, 1);
  Block &body = op.region(0).block();
  for (std::size_t i = 0; i < lbs.size(); ++i)
    body.add_argument(Type::index());
  body.push_back(Operation::create(*ctx_, "scf.yield", {}, {}, {}, 0, loc_));
  return op;
}

Value *OpBuilder::alloc(Type memref_type, bool on_stack) {
  if (!memref_type.is_memref())
    throw Error(ErrorCode::TypeMismatch, "allocation needs a memref type",
                loc_);
  return create(on_stack ? "memref.alloca" : "memref.alloc", {},
                {memref_type})
      .result(0);
}

void OpBuilder::dealloc(Value *memref) { create("memref.dealloc", {memref}, {}); }

Operation &OpBuilder::build_memref_access(MemAccess kind, Value *buffer,
                                          const std::vector<Value *> &indices,
                                          Value *stored) {
  if (!buffer || !buffer->type().is_memref())
    throw Error(ErrorCode::TypeMismatch, "subscript of a non-memref value",
                loc_);
  const Type &mt = buffer->type();
  if (indices.size() != mt.rank())
    throw Error(ErrorCode::RankMismatch,
                std::to_string(indices.size()) + " indices for " + mt.str(),
                loc_);
  for (auto *i : indices)
    require_index(i, "memref index", loc_);
  if (kind == MemAccess::Load) {
    std::vector<Value *> operands{buffer};
    operands.insert(operands.end(), indices.begin(), indices.end());
    return create("memref.load", operands, {mt.element()});
  }
  if (!stored || !(stored->type() == mt.element()))
    throw Error(ErrorCode::TypeMismatch,
                "cannot store " +
                    (stored ? stored->type().str() : std::string("<null>")) +
                    " into " + mt.str(),
                loc_);
  std::vector<Value *> operands{stored, buffer};
  operands.insert(operands.end(), indices.begin(), indices.end());
  return create("memref.store", operands, {});
}

Operation &OpBuilder::func_return(const std::vector<Value *> &values) {
  return create("func.return", values, {});
}

std::vector<Value *> OpBuilder::call(const std::string &callee,
                                     const std::vector<Value *> &args) {
  const Operation *module = enclosing_module(*block_->parent_op());
  Operation *fn = lookup_symbol(*module, callee);
  if (!fn || !fn->is("func.func"))
    throw Error(ErrorCode::UnknownSymbol, "no function '@" + callee + "'",
                loc_);
  auto params = func_param_types(*fn);
  bool ok = params.size() == args.size();
  for (std::size_t i = 0; ok && i < args.size(); ++i)
    ok = args[i]->type() == params[i];
  if (!ok)
    throw Error(ErrorCode::SignatureMismatch,
                "arguments do not match '@" + callee + "'", loc_);
  return create("func.call", args, func_result_types(*fn),
                {{"callee", Attribute::symbol({callee})}})
      .results();
}

Value *OpBuilder::gpu_id(bool thread, int dim) {
  static const char *dims[] = {"x", "y", "z"};
  return create(thread ? "gpu.thread_id" : "gpu.block_id", {}, {Type::index()},
                {{"dimension", Attribute::string(dims[dim])}})
      .result(0);
}

Operation &OpBuilder::build_gpu_launch(const std::string &module_sym,
                                       const std::string &kernel_sym,
                                       const std::array<Value *, 3> &grid,
                                       const std::array<Value *, 3> &blocks,
                                       const std::vector<Value *> &args) {
  const Operation *module = enclosing_module(*block_->parent_op());
  SymbolRef ref{{module_sym, kernel_sym}};
  Operation *kernel = resolve_kernel(*module, ref);
  if (!kernel)
    throw Error(ErrorCode::UnknownSymbol,
                "no gpu.func '@" + module_sym + "::@" + kernel_sym + "'", loc_);
  auto params = func_param_types(*kernel);
  if (params.size() != args.size())
    throw Error(ErrorCode::SignatureMismatch,
                "kernel '@" + kernel_sym + "' takes " +
                    std::to_string(params.size()) + " arguments, got " +
                    std::to_string(args.size()),
                loc_);
  for (std::size_t i = 0; i < args.size(); ++i)
    if (!(args[i]->type() == params[i]))
      throw Error(ErrorCode::SignatureMismatch,
                  "kernel argument #" + std::to_string(i) + " is " +
                      args[i]->type().str() + ", expected " + params[i].str(),
                  loc_);
  std::vector<Value *> operands(grid.begin(), grid.end());
  operands.insert(operands.end(), blocks.begin(), blocks.end());
  for (auto *v : operands)
    require_index(v, "launch size", loc_);
  operands.insert(operands.end(), args.begin(), args.end());
  return create("gpu.launch_func", operands, {},
                {{"kernel", Attribute::symbol({module_sym, kernel_sym})}});
}

//===----------------------------------------------------------------------===//
// Symbol-defining builders
//===----------------------------------------------------------------------===//

Operation &build_func(Operation &module, const std::string &name,
                      const std::vector<Type> &param_types,
                      const std::vector<Type> &result_types, Location loc) {
  if (lookup_symbol(module, name))
    throw Error(ErrorCode::DuplicateSymbol,
                "symbol '@" + name + "' already defined", loc);
  Block &body = module.region(0).block();
  Operation &fn = create_op(body, body.size(), "func.func", {},
                            {{"sym_name", Attribute::string(name)}}, {}, 1, loc);
  set_func_result_types(fn, result_types);
  Block &entry = fn.region(0).block();
  for (const auto &t : param_types)
    entry.add_argument(t);
  if (result_types.empty())
    entry.push_back(Operation::create(module.context(), "func.return", {}, {},
                                      {}, 0, loc));
  return fn;
}

Operation &build_gpu_module(Operation &module, const std::string &name,
                            Location loc) {
  if (lookup_symbol(module, name))
    throw Error(ErrorCode::DuplicateSymbol,
                "symbol '@" + name + "' already defined", loc);
  Block &body = module.region(0).block();
  Operation &gm = create_op(body, body.size(), "gpu.module", {},
                            {{"sym_name", Attribute::string(name)}}, {}, 1, loc);
  module.set_attr("gpu.container_module", Attribute::unit());
  return gm;
}

Operation &build_gpu_func(Operation &gpu_module, const std::string &name,
                          const std::vector<Type> &param_types,
                          const Attribute::Dict &extra_attrs, Location loc) {
  if (lookup_symbol(gpu_module, name))
    throw Error(ErrorCode::DuplicateSymbol,
                "symbol '@" + name + "' already defined", loc);
  std::map<std::string, Attribute> attrs = extra_attrs;
  attrs["sym_name"] = Attribute::string(name);
  attrs["kernel"] = Attribute::unit();
  Block &body = gpu_module.region(0).block();
  Operation &fn = create_op(body, body.size(), "gpu.func", {}, std::move(attrs),
                            {}, 1, loc);
  Block &entry = fn.region(0).block();
  for (const auto &t : param_types)
    entry.add_argument(t);
  entry.push_back(Operation::create(gpu_module.context(), "gpu.return", {}, {},
                                    {}, 0, loc));
  return fn;
}

} // namespace staircase
