#include "vm.hpp"

#include "staircase/frontend/rewrite.hpp"

#include <fstream>
#include <mutex>
#include <set>
#include <sstream>

namespace staircase {

void CaptureConfig::validate() const {
  if (rewrite_executable && !rewrite_ast)
    throw Error(ErrorCode::UnsupportedConstruct,
                "rewrite_executable requires rewrite_ast");
}

namespace host {

namespace {

using K = HostValue::Kind;

/// Yields its single value once: the marker-driven loops run their body a
/// single time, emitting it into the region the marker pushed.
struct OnceIterator : HostObject {
  std::optional<HostValue> value;
  std::string type_name() const override { return "region iterator"; }
  bool is_iterator() const override { return true; }
  std::optional<HostValue> next(VM &) override {
    auto v = std::move(value);
    value.reset();
    return v;
  }
};

/// Returned by scf_if; always truthy.
struct Token : HostObject {
  std::string type_name() const override { return "scf_if token"; }
};

struct Namespace_ : HostObject {
  std::string name;
  std::map<std::string, HostValue> attrs;
  std::string type_name() const override { return "namespace " + name; }
  std::optional<HostValue> getattr(VM &, const std::string &a) override {
    auto it = attrs.find(a);
    if (it == attrs.end())
      return std::nullopt;
    return it->second;
  }
};

struct Decorator : HostObject {
  CaptureConfig config;
  std::string type_name() const override { return "mlir_func decorator"; }
  HostValue call(VM &vm, CallArgs &args) override;
};

HostValue builtin(const std::string &name, Builtin::Fn fn) {
  return HostValue::object(std::make_shared<Builtin>(name, std::move(fn)));
}

void expect_args(VM &vm, const CallArgs &args, std::size_t lo, std::size_t hi,
                 const std::string &name) {
  if (args.pos.size() < lo || args.pos.size() > hi)
    vm.fail(ErrorCode::HostError, name + "() takes " + std::to_string(lo) +
                                      (hi != lo ? "-" + std::to_string(hi) : "") +
                                      " arguments, got " +
                                      std::to_string(args.pos.size()));
}

staircase::Type expect_type(VM &vm, const HostValue &v, const std::string &what) {
  if (!v.is(K::Type))
    vm.fail(ErrorCode::InvalidType, what + " must be a type, got " + v.type_name());
  return v.type;
}

std::vector<std::int64_t> expect_shape(VM &vm, const HostValue &v) {
  std::vector<HostValue> dims;
  if (v.is_sequence())
    dims = *v.items;
  else
    dims = {v};
  std::vector<std::int64_t> shape;
  for (const auto &d : dims) {
    if (!d.is(K::Int) || d.i <= 0)
      vm.fail(ErrorCode::InvalidType,
              "memref dimensions must be positive integers, got " + d.repr());
    shape.push_back(d.i);
  }
  return shape;
}

struct MemRefCtor : HostObject {
  std::string type_name() const override { return "MemRef"; }

  HostValue getitem(VM &vm, const HostValue &key) override {
    if (!key.is(K::Tuple) || key.items->size() != 2)
      vm.fail(ErrorCode::InvalidType, "MemRef[...] takes a shape and a type");
    staircase::Type elem = expect_type(vm, (*key.items)[1], "memref element");
    if (elem.is_memref())
      vm.fail(ErrorCode::InvalidType, "memref element must be a scalar type");
    return HostValue::of(
        staircase::Type::memref(expect_shape(vm, (*key.items)[0]), elem));
  }

  std::optional<HostValue> getattr(VM &, const std::string &name) override {
    if (name != "alloca" && name != "alloc")
      return std::nullopt;
    bool on_stack = name == "alloca";
    return builtin("MemRef." + name, [on_stack, name](VM &vm, CallArgs &a) {
      expect_args(vm, a, 2, 2, "MemRef." + name);
      CaptureState &st = vm.require_capture("MemRef." + name);
      staircase::Type elem = expect_type(vm, a.pos[1], "memref element");
      return HostValue::of(st.builder.alloc(
          staircase::Type::memref(expect_shape(vm, a.pos[0]), elem), on_stack));
    });
  }
};

CaptureConfig apply_config(VM &vm, CaptureConfig cfg, const CallArgs &args) {
  bool exec_given = false;
  for (const auto &[k, v] : args.kw) {
    if (k == "range_ctor") {
      if (!v.is(K::Str) || (v.s != "scf_for" && v.s != "affine_for"))
        vm.fail(ErrorCode::HostError, "range_ctor must be scf_for or affine_for");
      cfg.range_ctor = v.s == "affine_for" ? RangeCtor::Affine : RangeCtor::Scf;
    } else if (k == "rewrite_ast" || k == "rewrite_ast_") {
      cfg.rewrite_ast = vm.truthy(v);
    } else if (k == "rewrite_executable" || k == "rewrite_executable_") {
      cfg.rewrite_executable = vm.truthy(v);
      exec_given = true;
    } else {
      vm.fail(ErrorCode::HostError, "unknown mlir_func option '" + k + "'");
    }
  }
  // Turning the source rewrite off implies no executable rewrite unless the
  // caller asks for both explicitly.
  if (!cfg.rewrite_ast && !exec_given)
    cfg.rewrite_executable = false;
  try {
    cfg.validate();
  } catch (const Error &e) {
    vm.fail(e.code(), e.detail());
  }
  return cfg;
}

HostValue make_capturable(VM &vm, const HostValue &f, const CaptureConfig &cfg) {
  auto fn = std::dynamic_pointer_cast<HostFunction>(f.obj);
  if (!fn)
    vm.fail(ErrorCode::HostError, "mlir_func decorates functions only");
  auto c = std::make_shared<CapturableFunction>();
  c->fn = fn;
  c->config = cfg;
  return HostValue::object(c);
}

HostValue Decorator::call(VM &vm, CallArgs &args) {
  expect_args(vm, args, 1, 1, "mlir_func");
  return make_capturable(vm, args.pos[0], config);
}

Value *index_or_literal(VM &vm, const HostValue &v) { return vm.as_index(v); }

std::vector<HostValue> as_list(const HostValue &v) {
  if (v.is_sequence())
    return *v.items;
  return {v};
}

} // namespace

NamespacePtr make_builtins() {
  auto ns = std::make_shared<Namespace>();
  auto def = [&](const std::string &name, Builtin::Fn fn) {
    ns->set(name, builtin(name, std::move(fn)));
  };

  ns->set("F32", HostValue::of(staircase::Type::f32()));
  ns->set("F64", HostValue::of(staircase::Type::f64()));
  ns->set("I1", HostValue::of(staircase::Type::i1()));
  ns->set("I32", HostValue::of(staircase::Type::i32()));
  ns->set("I64", HostValue::of(staircase::Type::i64()));
  ns->set("Index", HostValue::of(staircase::Type::index()));
  ns->set("scf_for", HostValue::str("scf_for"));
  ns->set("affine_for", HostValue::str("affine_for"));
  ns->set("MemRef", HostValue::object(std::make_shared<MemRefCtor>()));

  auto gpu_base = std::make_shared<ClassObject>();
  gpu_base->name = "GPUModule";
  gpu_base->ns = std::make_shared<Namespace>();
  gpu_base->gpu = true;
  ns->set("GPUModule", HostValue::object(gpu_base));

  auto spirv = std::make_shared<Namespace_>();
  spirv->name = "spirv";
  spirv->attrs["entry_point_abi"] =
      builtin("spirv.entry_point_abi", [](VM &vm, CallArgs &a) {
        expect_args(vm, a, 0, 0, "spirv.entry_point_abi");
        std::vector<HostValue> kv;
        for (const auto &[k, v] : a.kw) {
          kv.push_back(HostValue::str(k));
          kv.push_back(v);
        }
        return HostValue::dict(std::move(kv));
      });
  ns->set("spirv", HostValue::object(spirv));

  def("mlir_func", [](VM &vm, CallArgs &a) {
    expect_args(vm, a, 0, 1, "mlir_func");
    CaptureConfig cfg = apply_config(vm, CaptureConfig{}, a);
    if (a.pos.size() == 1)
      return make_capturable(vm, a.pos[0], cfg);
    auto d = std::make_shared<Decorator>();
    d->config = cfg;
    return HostValue::object(d);
  });

  def("len", [](VM &vm, CallArgs &a) {
    expect_args(vm, a, 1, 1, "len");
    const HostValue &v = a.pos[0];
    if (v.is_sequence())
      return HostValue::integer(static_cast<std::int64_t>(v.items->size()));
    if (v.is(K::Dict))
      return HostValue::integer(static_cast<std::int64_t>(v.items->size() / 2));
    if (v.is(K::Str))
      return HostValue::integer(static_cast<std::int64_t>(v.s.size()));
    vm.fail(ErrorCode::HostError, "object of type " + v.type_name() + " has no len()");
  });

  def("range", [](VM &vm, CallArgs &a) {
    expect_args(vm, a, 1, 3, "range");
    std::int64_t b[3] = {0, 0, 1};
    for (const auto &v : a.pos)
      if (!v.is(K::Int))
        vm.fail(ErrorCode::UnsupportedConstruct,
                "host range() needs integers; loops over IR values need the "
                "source rewrite");
    if (a.pos.size() == 1) {
      b[1] = a.pos[0].i;
    } else {
      b[0] = a.pos[0].i;
      b[1] = a.pos[1].i;
      if (a.pos.size() == 3)
        b[2] = a.pos[2].i;
    }
    if (b[2] == 0)
      vm.fail(ErrorCode::HostError, "range() step must not be zero");
    std::vector<HostValue> items;
    for (std::int64_t x = b[0]; b[2] > 0 ? x < b[1] : x > b[1]; x += b[2])
      items.push_back(HostValue::integer(x));
    return HostValue::list(std::move(items));
  });

  def("parallel", [](VM &vm, CallArgs &) -> HostValue {
    vm.fail(ErrorCode::UnsupportedConstruct,
            "parallel() is only valid as the iterable of a for loop");
  });

  def("constant", [](VM &vm, CallArgs &a) {
    expect_args(vm, a, 1, 2, "constant");
    CaptureState &st = vm.require_capture("constant()");
    const HostValue &x = a.pos[0];
    if (!x.is_number())
      vm.fail(ErrorCode::TypeMismatch, "constant() takes a number, got " + x.type_name());
    staircase::Type t = a.pos.size() == 2
                            ? expect_type(vm, a.pos[1], "constant type")
                            : (x.is(K::Float) ? staircase::Type::f64()
                                              : staircase::Type::i64());
    if (t.is_float())
      return HostValue::of(st.builder.constant_float(x.as_double(), t));
    if (x.is(K::Float))
      vm.fail(ErrorCode::TypeMismatch, "float constant of integer type " + t.str());
    return HostValue::of(
        st.builder.constant_int(x.is(K::Int) ? x.i : x.b, t));
  });

  def("index_cast", [](VM &vm, CallArgs &a) {
    expect_args(vm, a, 2, 2, "index_cast");
    CaptureState &st = vm.require_capture("index_cast()");
    if (!a.pos[0].is(K::Proxy))
      vm.fail(ErrorCode::TypeMismatch, "index_cast() takes an IR value");
    vm.check_visible({a.pos[0].proxy});
    return HostValue::of(st.builder.index_cast(
        a.pos[0].proxy, expect_type(vm, a.pos[1], "index_cast target")));
  });

  def("dealloc", [](VM &vm, CallArgs &a) {
    expect_args(vm, a, 1, 1, "dealloc");
    CaptureState &st = vm.require_capture("dealloc()");
    if (!a.pos[0].is(K::Proxy))
      vm.fail(ErrorCode::TypeMismatch, "dealloc() takes a memref");
    vm.check_visible({a.pos[0].proxy});
    st.builder.dealloc(a.pos[0].proxy);
    return HostValue::none();
  });

  def("emit_op", [](VM &vm, CallArgs &a) {
    expect_args(vm, a, 1, 2, "emit_op");
    CaptureState &st = vm.require_capture("emit_op()");
    if (!a.pos[0].is(K::Str))
      vm.fail(ErrorCode::HostError, "emit_op() needs an op name");
    std::vector<Value *> operands;
    if (a.pos.size() == 2)
      for (const auto &v : as_list(a.pos[1])) {
        if (!v.is(K::Proxy))
          vm.fail(ErrorCode::TypeMismatch, "emit_op() operands must be IR values");
        operands.push_back(v.proxy);
      }
    std::vector<staircase::Type> results;
    std::map<std::string, Attribute> attrs;
    for (const auto &[k, v] : a.kw) {
      if (k == "results") {
        for (const auto &t : as_list(v))
          results.push_back(expect_type(vm, t, "result"));
      } else if (k == "attrs") {
        Attribute d = vm.to_attribute(v);
        if (!d.is_dict())
          vm.fail(ErrorCode::TypeMismatch, "attrs must be a dict");
        attrs = d.as_dict();
      } else {
        vm.fail(ErrorCode::HostError, "unexpected keyword '" + k + "'");
      }
    }
    vm.check_visible(operands);
    Operation &op = st.builder.create(a.pos[0].s, operands, results, attrs);
    if (op.num_results() == 0)
      return HostValue::none();
    if (op.num_results() == 1)
      return HostValue::of(op.result(0));
    std::vector<HostValue> rs;
    for (auto *r : op.results())
      rs.push_back(HostValue::of(r));
    return HostValue::tuple(std::move(rs));
  });

  // Region markers.
  def("scf_range", [](VM &vm, CallArgs &a) {
    expect_args(vm, a, 1, 3, "scf_range");
    CaptureState &st = vm.require_capture("scf_range()");
    HostValue lb = HostValue::integer(0), ub, step = HostValue::integer(1);
    if (a.pos.size() == 1) {
      ub = a.pos[0];
    } else {
      lb = a.pos[0];
      ub = a.pos[1];
      if (a.pos.size() == 3)
        step = a.pos[2];
    }
    if (step.is(K::Int) && step.i <= 0)
      vm.fail(ErrorCode::UnsupportedConstruct,
              "loop step must be positive, got " + std::to_string(step.i));
    Value *l = index_or_literal(vm, lb);
    Value *u = index_or_literal(vm, ub);
    Value *s = index_or_literal(vm, step);
    vm.check_visible({l, u, s});
    Operation &loop = st.builder.build_scf_for(l, u, s);
    Block &body = loop.region(0).block();
    st.push(body);
    auto it = std::make_shared<OnceIterator>();
    it->value = HostValue::of(body.argument(0));
    return HostValue::object(it);
  });

  def("affine_range", [](VM &vm, CallArgs &a) {
    expect_args(vm, a, 1, 3, "affine_range");
    CaptureState &st = vm.require_capture("affine_range()");
    for (const auto &v : a.pos)
      if (!v.is(K::Int))
        vm.fail(ErrorCode::UnsupportedConstruct,
                "affine loop bounds must be host integers, got " + v.type_name());
    std::int64_t lb = 0, ub, step = 1;
    if (a.pos.size() == 1) {
      ub = a.pos[0].i;
    } else {
      lb = a.pos[0].i;
      ub = a.pos[1].i;
      if (a.pos.size() == 3)
        step = a.pos[2].i;
    }
    if (step <= 0)
      vm.fail(ErrorCode::UnsupportedConstruct,
              "loop step must be positive, got " + std::to_string(step));
    Operation &loop = st.builder.build_affine_for(lb, ub, step);
    Block &body = loop.region(0).block();
    st.push(body);
    auto it = std::make_shared<OnceIterator>();
    it->value = HostValue::of(body.argument(0));
    return HostValue::object(it);
  });

  def("scf_parallel", [](VM &vm, CallArgs &a) {
    expect_args(vm, a, 2, 3, "scf_parallel");
    CaptureState &st = vm.require_capture("scf_parallel()");
    auto lbs = as_list(a.pos[0]);
    auto ubs = as_list(a.pos[1]);
    std::vector<HostValue> steps(lbs.size(), HostValue::integer(1));
    if (a.pos.size() == 3)
      steps = as_list(a.pos[2]);
    for (const auto &s : steps)
      if (s.is(K::Int) && s.i <= 0)
        vm.fail(ErrorCode::UnsupportedConstruct, "loop step must be positive");
    std::vector<Value *> l, u, s, all;
    for (const auto &v : lbs)
      l.push_back(index_or_literal(vm, v));
    for (const auto &v : ubs)
      u.push_back(index_or_literal(vm, v));
    for (const auto &v : steps)
      s.push_back(index_or_literal(vm, v));
    for (auto *vs : {&l, &u, &s})
      all.insert(all.end(), vs->begin(), vs->end());
    vm.check_visible(all);
    Operation &loop = st.builder.build_scf_parallel(l, u, s);
    Block &body = loop.region(0).block();
    st.push(body);
    auto it = std::make_shared<OnceIterator>();
    if (body.num_arguments() == 1) {
      it->value = HostValue::of(body.argument(0));
    } else {
      std::vector<HostValue> ivs;
      for (auto *arg : body.arguments())
        ivs.push_back(HostValue::of(arg));
      it->value = HostValue::tuple(std::move(ivs));
    }
    return HostValue::object(it);
  });

  for (const char *end : {"scf_endfor", "affine_endfor", "scf_endparallel",
                          "scf_endif_branch"}) {
    std::string name = end;
    def(name, [name](VM &vm, CallArgs &a) {
      expect_args(vm, a, 0, 0, name);
      vm.require_capture(name + "()").pop(name.c_str());
      return HostValue::none();
    });
  }

  def("scf_if", [](VM &vm, CallArgs &a) {
    expect_args(vm, a, 1, 1, "scf_if");
    CaptureState &st = vm.require_capture("scf_if()");
    const HostValue &c = a.pos[0];
    if (!c.is(K::Proxy))
      vm.fail(ErrorCode::UnsupportedConstruct,
              "conditions must be IR values, got host " + c.type_name());
    vm.check_visible({c.proxy});
    Operation &op = st.builder.build_scf_if(c.proxy, false);
    st.pending_ifs.push_back(&op);
    st.push(op.region(0).block());
    return HostValue::object(std::make_shared<Token>());
  });

  def("scf_else", [](VM &vm, CallArgs &a) {
    expect_args(vm, a, 0, 0, "scf_else");
    CaptureState &st = vm.require_capture("scf_else()");
    if (st.pending_ifs.empty())
      vm.fail(ErrorCode::UnbalancedMarkers, "scf_else() outside a conditional");
    st.push(OpBuilder::add_else_region(*st.pending_ifs.back()));
    return HostValue::none();
  });

  def("scf_endif", [](VM &vm, CallArgs &a) {
    expect_args(vm, a, 0, 0, "scf_endif");
    CaptureState &st = vm.require_capture("scf_endif()");
    if (st.pending_ifs.empty())
      vm.fail(ErrorCode::UnbalancedMarkers, "scf_endif() outside a conditional");
    st.pending_ifs.pop_back();
    return HostValue::none();
  });

  const char *dims = "xyz";
  for (int d = 0; d < 3; ++d)
    for (bool thread : {false, true}) {
      std::string name =
          std::string(thread ? "thread_id_" : "block_id_") + dims[d];
      def(name, [name, thread, d](VM &vm, CallArgs &a) {
        expect_args(vm, a, 0, 0, name);
        CaptureState &st = vm.require_capture(name + "()");
        if (!st.in_kernel)
          vm.fail(ErrorCode::UnsupportedConstruct,
                  name + "() is only valid inside a GPU kernel");
        return HostValue::of(st.builder.gpu_id(thread, d));
      });
    }
  return ns;
}

//===----------------------------------------------------------------------===//
// Capture driver
//===----------------------------------------------------------------------===//

namespace {

std::mutex g_active_mu;
std::set<const Context *> g_active;

struct ActiveCapture {
  const Context *ctx;
  explicit ActiveCapture(const Context &c) : ctx(&c) {
    std::lock_guard<std::mutex> lock(g_active_mu);
    if (!g_active.insert(ctx).second)
      throw Error(ErrorCode::UnsupportedConstruct,
                  "a capture is already active on this context");
  }
  ~ActiveCapture() {
    std::lock_guard<std::mutex> lock(g_active_mu);
    g_active.erase(ctx);
  }
};

std::vector<staircase::Type> param_types(const HostFunction &fn, bool method,
                                         const std::string &file) {
  const Stmt &def = *fn.code->def;
  std::vector<staircase::Type> types;
  for (std::size_t k = method ? 1 : 0; k < def.params.size(); ++k) {
    const HostValue &ann = fn.annotations[k];
    Location loc{file, def.params[k].line, 0};
    if (ann.is_none())
      throw Error(ErrorCode::UnannotatedParameter,
                  "parameter '" + def.params[k].name + "' of '" + def.name +
                      "' has no type annotation",
                  loc);
    if (!ann.is(K::Type))
      throw Error(ErrorCode::UnannotatedParameter,
                  "annotation of parameter '" + def.params[k].name +
                      "' is not a type",
                  loc);
    types.push_back(ann.type);
  }
  return types;
}

CodePtr prepare(const HostFunction &fn, const CaptureConfig &cfg,
                CaptureInfo &info, const std::string &file) {
  const StmtPtr &def = fn.code->def;
  check_supported(*def, file);
  if (!cfg.rewrite_ast) {
    CodePtr code = compile_function(def, file);
    info.bytecode = disassemble(*code);
    return code;
  }
  RewriteOptions opts;
  opts.affine = cfg.range_ctor == RangeCtor::Affine;
  StmtPtr rewritten = rewrite_ast(*def, opts);
  CodePtr code = compile_function(rewritten, file);
  if (cfg.rewrite_executable) {
    try {
      info.conditionals_elided = elide_conditional_jumps(*code);
    } catch (const Error &e) {
      if (e.code() != ErrorCode::RewriteUnsupported)
        throw;
      opts.flatten_ifs = true;
      rewritten = rewrite_ast(*def, opts);
      code = compile_function(rewritten, file);
      info.flattened = true;
    }
  }
  info.rewritten_source = unparse(rewritten);
  info.bytecode = disassemble(*code);
  return code;
}

/// Runs a prepared body over the entry block of `fn_op`; returns the
/// function's host return value.
HostValue run_body(VM &vm, CaptureState &st, Operation &fn_op,
                   const CodePtr &code, std::vector<HostValue> args,
                   const NamespacePtr &globals, CaptureInfo &info) {
  Block &entry = fn_op.region(0).block();
  st.push(entry);
  info.stack_depth_before = st.stack.size();
  st.builder.set_location(fn_op.location());
  for (auto *arg : entry.arguments())
    args.push_back(HostValue::of(arg));
  vm.capture = &st;
  struct Reset {
    VM &vm;
    ~Reset() { vm.capture = nullptr; }
  } reset{vm};
  HostValue r = vm.run_function(*code, std::move(args), globals, true);
  info.stack_depth_after = st.stack.size();
  if (st.stack.size() != info.stack_depth_before)
    throw Error(ErrorCode::UnbalancedMarkers,
                "region markers left " +
                    std::to_string(st.stack.size() - info.stack_depth_before) +
                    " region(s) open",
                Location{code->filename, code->def->end_line, 0});
  return r;
}

void emit_gpu_module(VM &vm, Context &ctx, Operation &module,
                     const GPUInstance &inst, const std::string &file) {
  const ClassObject &spec = *inst.spec;
  Operation &gm = build_gpu_module(module, spec.name, Location{file, spec.line, 0});
  for (const auto &[name, fn] : inst.kernels()) {
    Location loc{file, fn->code->def->line, 0};
    Operation &gf = build_gpu_func(gm, name, param_types(*fn, true, file),
                                   inst.func_attributes, loc);
    CaptureInfo info;
    CodePtr code = prepare(*fn, CaptureConfig{}, info, file);
    CaptureState st(ctx);
    st.in_kernel = true;
    std::vector<HostValue> args{HostValue::object(
        std::const_pointer_cast<GPUInstance>(
            std::static_pointer_cast<const GPUInstance>(inst.shared_from_this())))};
    HostValue r = run_body(vm, st, gf, code, std::move(args), fn->globals, info);
    if (!r.is_none())
      throw Error(ErrorCode::UnsupportedConstruct,
                  "GPU kernels cannot return values",
                  Location{file, st.return_line, 0});
    gf.region(0).block().terminator()->set_location(
        Location{file, st.return_line, 0});
  }
}

Operation &emit_function(VM &vm, Context &ctx, Operation &module,
                         const std::string &name, const HostFunction &fn,
                         const CaptureConfig &cfg, CaptureInfo &info,
                         const std::string &file) {
  Location loc{file, fn.code->def->line, 0};
  Operation &func = build_func(module, name, param_types(fn, false, file), {}, loc);
  CodePtr code = prepare(fn, cfg, info, file);
  CaptureState st(ctx);
  HostValue r = run_body(vm, st, func, code, {}, fn.globals, info);
  Block &entry = func.region(0).block();
  Location ret_loc{file, st.return_line, 0};
  Operation *ret = entry.terminator();
  if (r.is_none()) {
    ret->set_location(ret_loc);
    return func;
  }
  std::vector<Value *> values;
  for (const auto &v : r.is(K::Tuple) ? *r.items : std::vector<HostValue>{r}) {
    if (!v.is(K::Proxy))
      throw Error(ErrorCode::UnsupportedConstruct,
                  "only IR values can be returned, got " + v.type_name(),
                  ret_loc);
    values.push_back(v.proxy);
  }
  for (Value *v : values)
    if (!is_visible_at(*v, entry, entry.size() - 1))
      throw Error(ErrorCode::CaptureLeak,
                  "returned value is defined inside a closed region", ret_loc);
  std::vector<staircase::Type> types;
  for (Value *v : values)
    types.push_back(v->type());
  erase_op(*ret);
  set_func_result_types(func, types);
  st.builder.set_insertion_point(entry, entry.size());
  st.builder.set_location(ret_loc);
  st.builder.func_return(values);
  return func;
}

void verify_or_throw(const Operation &module) {
  auto diags = verify(module);
  if (diags.empty())
    return;
  std::string msg;
  for (const auto &d : diags)
    msg += (msg.empty() ? "" : "\n") + d.str();
  throw Error(ErrorCode::VerificationFailed, msg, diags.front().loc);
}

struct Resolved {
  std::shared_ptr<HostFunction> fn;
  CaptureConfig config;
};

Resolved resolve(const ProgramState &ps, const std::string &name) {
  const HostValue *v = ps.globals->get(name);
  if (v && v->is(K::Object)) {
    if (auto *c = v->as<CapturableFunction>())
      return {c->fn, c->config};
    if (auto fn = std::dynamic_pointer_cast<HostFunction>(v->obj))
      return {fn, CaptureConfig{}};
  }
  throw Error(ErrorCode::UnknownSymbol,
              "no function '" + name + "' in " + ps.filename);
}

/// Creates a module in `ctx`, runs `fill` on it, verifies it, and drops the
/// module again if anything fails.
template <typename Fill>
Operation &build_module(const ProgramState &ps, Context &ctx, Fill fill) {
  ActiveCapture active(ctx);
  Operation &module = ctx.create_module(Location{ps.filename, 1, 0});
  try {
    VM vm(ps.builtins, ps.filename);
    fill(vm, module);
    verify_or_throw(module);
  } catch (...) {
    ctx.release_module(module);
    throw;
  }
  return module;
}

} // namespace

} // namespace host

using host::HostValue;

Program Program::from_source(std::string_view source, const std::string &filename) {
  Program p;
  auto ps = std::make_shared<host::ProgramState>();
  ps->filename = filename;
  ps->ast = host::parse(source, filename);
  ps->code = host::compile_module(ps->ast);
  ps->globals = std::make_shared<host::Namespace>();
  ps->builtins = host::make_builtins();
  host::VM vm(ps->builtins, filename);
  vm.run_module(*ps->code, ps->globals);
  for (const auto &inst : vm.created_instances) {
    std::string bound;
    for (const auto &name : ps->globals->order) {
      const HostValue &v = *ps->globals->get(name);
      if (v.is(HostValue::Kind::Object) && v.obj == inst) {
        bound = name;
        break;
      }
    }
    ps->instances.emplace_back(bound, inst);
  }
  p.state_ = std::move(ps);
  return p;
}

Program Program::from_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(ErrorCode::IOError, "cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return from_source(ss.str(), path);
}

const std::string &Program::filename() const { return state_->filename; }

std::vector<std::string> Program::functions() const {
  std::vector<std::string> out;
  for (const auto &name : state_->globals->order) {
    const HostValue &v = *state_->globals->get(name);
    if (v.is(HostValue::Kind::Object) && v.as<host::CapturableFunction>())
      out.push_back(name);
  }
  return out;
}

std::vector<std::string> Program::gpu_modules() const {
  std::vector<std::string> out;
  for (const auto &[name, inst] : state_->instances)
    out.push_back(name);
  return out;
}

CaptureConfig Program::config(const std::string &function) const {
  return host::resolve(*state_, function).config;
}

CaptureResult capture(const Program &program, const std::string &function,
                      Context &ctx, std::optional<CaptureConfig> config) {
  const auto &ps = program.state();
  host::Resolved r = host::resolve(ps, function);
  CaptureConfig cfg = config ? *config : r.config;
  cfg.validate();
  CaptureResult result;
  Operation &module = host::build_module(ps, ctx, [&](host::VM &vm, Operation &m) {
    for (const auto &[name, inst] : ps.instances)
      host::emit_gpu_module(vm, ctx, m, *inst, ps.filename);
    result.func = &host::emit_function(vm, ctx, m, function, *r.fn, cfg,
                                       result.info, ps.filename);
  });
  result.module = &module;
  return result;
}

Operation &capture_program(const Program &program, Context &ctx) {
  const auto &ps = program.state();
  return host::build_module(ps, ctx, [&](host::VM &vm, Operation &m) {
    for (const auto &[name, inst] : ps.instances)
      host::emit_gpu_module(vm, ctx, m, *inst, ps.filename);
    for (const auto &name : program.functions()) {
      host::Resolved r = host::resolve(ps, name);
      CaptureInfo info;
      host::emit_function(vm, ctx, m, name, *r.fn, r.config, info, ps.filename);
    }
  });
}

Operation &capture_gpu_module(const Program &program, const std::string &instance,
                              Context &ctx) {
  const auto &ps = program.state();
  const host::GPUInstance *found = nullptr;
  for (const auto &[name, inst] : ps.instances)
    if (name == instance)
      found = inst.get();
  if (!found)
    throw Error(ErrorCode::UnknownSymbol,
                "no GPU module instance '" + instance + "' in " + ps.filename);
  Operation &module = host::build_module(ps, ctx, [&](host::VM &vm, Operation &m) {
    host::emit_gpu_module(vm, ctx, m, *found, ps.filename);
  });
  return module.region(0).block().front();
}

} // namespace staircase
