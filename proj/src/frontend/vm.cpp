#include "vm.hpp"

#include <cmath>
#include <cstdio>

namespace staircase::host {

//===----------------------------------------------------------------------===//
// Host values
//===----------------------------------------------------------------------===//

HostValue HostValue::boolean(bool v) {
  HostValue h;
  h.kind = Kind::Bool;
  h.b = v;
  return h;
}
HostValue HostValue::integer(std::int64_t v) {
  HostValue h;
  h.kind = Kind::Int;
  h.i = v;
  return h;
}
HostValue HostValue::real(double v) {
  HostValue h;
  h.kind = Kind::Float;
  h.f = v;
  return h;
}
HostValue HostValue::str(std::string v) {
  HostValue h;
  h.kind = Kind::Str;
  h.s = std::move(v);
  return h;
}
HostValue HostValue::tuple(std::vector<HostValue> v) {
  HostValue h;
  h.kind = Kind::Tuple;
  h.items = std::make_shared<std::vector<HostValue>>(std::move(v));
  return h;
}
HostValue HostValue::list(std::vector<HostValue> v) {
  HostValue h = tuple(std::move(v));
  h.kind = Kind::List;
  return h;
}
HostValue HostValue::dict(std::vector<HostValue> kv) {
  HostValue h = tuple(std::move(kv));
  h.kind = Kind::Dict;
  return h;
}
HostValue HostValue::of(Value *v) {
  HostValue h;
  h.kind = Kind::Proxy;
  h.proxy = v;
  return h;
}
HostValue HostValue::of(staircase::Type t) {
  HostValue h;
  h.kind = Kind::Type;
  h.type = std::move(t);
  return h;
}
HostValue HostValue::object(std::shared_ptr<HostObject> o) {
  HostValue h;
  h.kind = Kind::Object;
  h.obj = std::move(o);
  return h;
}

double HostValue::as_double() const {
  switch (kind) {
  case Kind::Bool:
    return b ? 1.0 : 0.0;
  case Kind::Int:
    return static_cast<double>(i);
  default:
    return f;
  }
}

std::string HostValue::type_name() const {
  switch (kind) {
  case Kind::None:
    return "NoneType";
  case Kind::Bool:
    return "bool";
  case Kind::Int:
    return "int";
  case Kind::Float:
    return "float";
  case Kind::Str:
    return "str";
  case Kind::Tuple:
    return "tuple";
  case Kind::List:
    return "list";
  case Kind::Dict:
    return "dict";
  case Kind::Proxy:
    return "value of type " + proxy->type().str();
  case Kind::Type:
    return "type";
  case Kind::Object:
    return obj->type_name();
  }
  return "?";
}

std::string HostValue::repr() const {
  switch (kind) {
  case Kind::None:
    return "None";
  case Kind::Bool:
    return b ? "True" : "False";
  case Kind::Int:
    return std::to_string(i);
  case Kind::Float: {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", f);
    return buf;
  }
  case Kind::Str:
    return "'" + s + "'";
  case Kind::Tuple:
  case Kind::List: {
    std::string out = kind == Kind::Tuple ? "(" : "[";
    for (std::size_t k = 0; k < items->size(); ++k)
      out += (k ? ", " : "") + (*items)[k].repr();
    return out + (kind == Kind::Tuple ? ")" : "]");
  }
  case Kind::Dict: {
    std::string out = "{";
    for (std::size_t k = 0; k + 1 < items->size(); k += 2)
      out += (k ? ", " : "") + (*items)[k].repr() + ": " +
             (*items)[k + 1].repr();
    return out + "}";
  }
  case Kind::Type:
    return type.str();
  default:
    return "<" + type_name() + ">";
  }
}

//===----------------------------------------------------------------------===//
// Objects
//===----------------------------------------------------------------------===//

HostValue HostObject::call(VM &vm, CallArgs &) {
  vm.fail(ErrorCode::HostError, "'" + type_name() + "' object is not callable");
}

std::optional<HostValue> HostObject::getattr(VM &, const std::string &) {
  return std::nullopt;
}

HostValue HostObject::getitem(VM &vm, const HostValue &) {
  vm.fail(ErrorCode::HostError,
          "'" + type_name() + "' object is not subscriptable");
}

std::optional<HostValue> HostObject::next(VM &vm) {
  vm.fail(ErrorCode::HostError, "'" + type_name() + "' object is not iterable");
}

namespace {

struct SequenceIterator : HostObject {
  std::shared_ptr<std::vector<HostValue>> items;
  std::size_t pos = 0;
  std::string type_name() const override { return "iterator"; }
  bool is_iterator() const override { return true; }
  std::optional<HostValue> next(VM &) override {
    if (pos >= items->size())
      return std::nullopt;
    return (*items)[pos++];
  }
};

} // namespace

HostValue HostFunction::call(VM &vm, CallArgs &args) {
  if (!args.kw.empty())
    vm.fail(ErrorCode::HostError,
            "keyword arguments to '" + code->name + "' are not supported");
  if (args.pos.size() != code->argcount)
    vm.fail(ErrorCode::HostError,
            "'" + code->name + "' takes " + std::to_string(code->argcount) +
                " arguments, got " + std::to_string(args.pos.size()));
  if (code->code.empty()) // deferred compile error: raise it now
    compile_function(code->def, code->filename);
  return vm.run_function(*code, std::move(args.pos), globals, false);
}

HostValue CapturableFunction::call(VM &vm, CallArgs &) {
  vm.fail(ErrorCode::UnsupportedConstruct,
          "captured function '" + fn->code->name +
              "' cannot be called from host code");
}

HostValue ClassObject::call(VM &vm, CallArgs &args) {
  if (!gpu || name == "GPUModule")
    vm.fail(ErrorCode::UnsupportedConstruct,
            "only subclasses of GPUModule can be instantiated");
  if (!args.pos.empty())
    vm.fail(ErrorCode::HostError,
            "'" + name + "' takes only the func_attributes keyword");
  auto inst = std::make_shared<GPUInstance>();
  inst->spec = std::static_pointer_cast<ClassObject>(shared_from_this());
  for (const auto &[k, v] : args.kw) {
    if (k != "func_attributes")
      vm.fail(ErrorCode::HostError, "unexpected keyword '" + k + "'");
    Attribute a = vm.to_attribute(v);
    if (!a.is_dict())
      vm.fail(ErrorCode::TypeMismatch, "func_attributes must be a dict");
    inst->func_attributes = a.as_dict();
  }
  if (!vm.capture)
    vm.created_instances.push_back(inst);
  return HostValue::object(inst);
}

std::optional<HostValue> ClassObject::getattr(VM &, const std::string &attr) {
  if (const HostValue *v = ns->get(attr))
    return *v;
  return std::nullopt;
}

namespace {

/// `instance.kernel` inside a capture: calling it emits gpu.launch_func.
struct BoundKernel : HostObject {
  std::shared_ptr<GPUInstance> instance;
  std::string kernel;
  std::string type_name() const override { return "bound kernel " + kernel; }

  HostValue call(VM &vm, CallArgs &args) override {
    CaptureState &st = vm.require_capture("kernel launch");
    if (st.in_kernel)
      vm.fail(ErrorCode::UnsupportedConstruct,
              "kernels cannot be launched from inside a kernel");
    std::vector<Value *> operands;
    for (const auto &a : args.pos) {
      if (!a.is(HostValue::Kind::Proxy))
        vm.fail(ErrorCode::TypeMismatch,
                "kernel arguments must be IR values, got " + a.type_name());
      operands.push_back(a.proxy);
    }
    auto sizes = [&](const char *key) {
      std::array<HostValue, 3> dims{HostValue::integer(1), HostValue::integer(1),
                                    HostValue::integer(1)};
      for (const auto &[k, v] : args.kw) {
        if (k != "grid_size" && k != "block_size")
          vm.fail(ErrorCode::HostError, "unexpected keyword '" + k + "'");
        if (k != key)
          continue;
        if (!v.is_sequence() || v.items->size() > 3)
          vm.fail(ErrorCode::TypeMismatch,
                  std::string(key) + " must be a list of up to 3 sizes");
        for (std::size_t d = 0; d < v.items->size(); ++d)
          dims[d] = (*v.items)[d];
      }
      return dims;
    };
    auto grid_sizes = sizes("grid_size");
    auto block_sizes = sizes("block_size");
    std::array<Value *, 3> grid{}, blocks{};
    for (int d = 0; d < 3; ++d)
      grid[d] = vm.as_index(grid_sizes[d]);
    for (int d = 0; d < 3; ++d)
      blocks[d] = vm.as_index(block_sizes[d]);
    std::vector<Value *> all(grid.begin(), grid.end());
    all.insert(all.end(), blocks.begin(), blocks.end());
    all.insert(all.end(), operands.begin(), operands.end());
    vm.check_visible(all);
    st.builder.build_gpu_launch(instance->spec->name, kernel, grid, blocks,
                                operands);
    return HostValue::none();
  }
};

struct CodeConst : HostObject {
  CodePtr code;
  std::string type_name() const override { return "code"; }
};

} // namespace

std::optional<HostValue> GPUInstance::getattr(VM &, const std::string &attr) {
  for (const auto &[name, fn] : kernels())
    if (name == attr) {
      auto bk = std::make_shared<BoundKernel>();
      bk->instance = std::static_pointer_cast<GPUInstance>(shared_from_this());
      bk->kernel = name;
      return HostValue::object(bk);
    }
  return std::nullopt;
}

std::vector<std::pair<std::string, std::shared_ptr<HostFunction>>>
GPUInstance::kernels() const {
  std::vector<std::pair<std::string, std::shared_ptr<HostFunction>>> out;
  for (const auto &name : spec->ns->order) {
    const HostValue &v = *spec->ns->get(name);
    if (v.is(HostValue::Kind::Object))
      if (auto fn = std::dynamic_pointer_cast<HostFunction>(v.obj))
        out.emplace_back(name, fn);
  }
  return out;
}

//===----------------------------------------------------------------------===//
// Capture state
//===----------------------------------------------------------------------===//

void CaptureState::push(Block &b) {
  stack.push_back(&b);
  builder.set_insertion_point_to_end(b);
}

void CaptureState::pop(const char *marker) {
  if (stack.size() <= 1)
    throw Error(ErrorCode::UnbalancedMarkers,
                std::string(marker) + "() without a matching region entry",
                builder.location());
  stack.pop_back();
  builder.set_insertion_point_to_end(*stack.back());
}

//===----------------------------------------------------------------------===//
// VM
//===----------------------------------------------------------------------===//

struct VM::Frame {
  const CodeObject *code = nullptr;
  std::vector<HostValue> locals;
  std::vector<char> bound;
  NamespacePtr globals;
  NamespacePtr names; // module or class namespace
  std::vector<HostValue> stack;
  bool capture_frame = false;
};

VM::VM(NamespacePtr builtins, std::string filename)
    : builtins_(std::move(builtins)), file_(std::move(filename)) {}

void VM::fail(ErrorCode code, const std::string &msg) const {
  throw Error(code, msg, location());
}

CaptureState &VM::require_capture(const std::string &what) const {
  if (!capture)
    fail(ErrorCode::UnsupportedConstruct,
         what + " is only valid inside a captured function");
  return *capture;
}

void VM::check_visible(const std::vector<Value *> &values) const {
  const CaptureState &st = *capture;
  for (Value *v : values)
    if (!is_visible_at(*v, *st.builder.block(), st.builder.index()))
      fail(ErrorCode::CaptureLeak,
           "a value of type " + v->type().str() +
               " defined inside a closed region is used outside it");
}

Value *VM::materialize(const HostValue &v, const staircase::Type &like) {
  if (v.is(HostValue::Kind::Proxy))
    return v.proxy;
  CaptureState &st = require_capture("IR arithmetic");
  if (like.is_memref())
    fail(ErrorCode::TypeMismatch, "cannot combine a literal with a memref");
  if (v.is(HostValue::Kind::Float)) {
    if (!like.is_float())
      fail(ErrorCode::TypeMismatch,
           "float literal used with a value of type " + like.str());
    return st.builder.constant_float(v.f, like);
  }
  if (v.is(HostValue::Kind::Int) || v.is(HostValue::Kind::Bool)) {
    std::int64_t x = v.is(HostValue::Kind::Int) ? v.i : v.b;
    if (like.is_float())
      return st.builder.constant_float(static_cast<double>(x), like);
    return st.builder.constant_int(x, like);
  }
  fail(ErrorCode::TypeMismatch,
       "cannot use " + v.type_name() + " as a value of type " + like.str());
}

Value *VM::as_index(const HostValue &v) {
  if (v.is(HostValue::Kind::Proxy))
    return v.proxy;
  if (v.is(HostValue::Kind::Int))
    return require_capture("IR indexing").builder.constant_index(v.i);
  fail(ErrorCode::TypeMismatch, "expected an index, got " + v.type_name());
}

bool VM::truthy(const HostValue &v) const {
  switch (v.kind) {
  case HostValue::Kind::None:
    return false;
  case HostValue::Kind::Bool:
    return v.b;
  case HostValue::Kind::Int:
    return v.i != 0;
  case HostValue::Kind::Float:
    return v.f != 0.0;
  case HostValue::Kind::Str:
    return !v.s.empty();
  case HostValue::Kind::Tuple:
  case HostValue::Kind::List:
  case HostValue::Kind::Dict:
    return !v.items->empty();
  case HostValue::Kind::Proxy:
    fail(ErrorCode::UnsupportedConstruct,
         "branching on an IR value needs scf_if (enable the source rewrite)");
  default:
    return true;
  }
}

namespace {

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0)))
    --q;
  return q;
}

} // namespace

HostValue VM::binary(BinaryOp op, const HostValue &a, const HostValue &b) {
  using K = HostValue::Kind;
  if (a.is(K::Proxy) || b.is(K::Proxy)) {
    const staircase::Type &like = a.is(K::Proxy) ? a.proxy->type() : b.proxy->type();
    static const ArithKind kinds[] = {ArithKind::Add, ArithKind::Sub,
                                      ArithKind::Mul, ArithKind::Div};
    if (static_cast<int>(op) > 3)
      fail(ErrorCode::UnsupportedConstruct,
           "this operator is not supported on IR values");
    Value *lhs = materialize(a, like);
    Value *rhs = materialize(b, like);
    check_visible({lhs, rhs});
    return HostValue::of(
        capture->builder.arith(kinds[static_cast<int>(op)], lhs, rhs));
  }
  if (a.is_number() && b.is_number()) {
    bool ints = !a.is(K::Float) && !b.is(K::Float);
    if (ints) {
      std::int64_t x = a.is(K::Int) ? a.i : a.b, y = b.is(K::Int) ? b.i : b.b;
      switch (op) {
      case BinaryOp::Add:
        return HostValue::integer(x + y);
      case BinaryOp::Sub:
        return HostValue::integer(x - y);
      case BinaryOp::Mul:
        return HostValue::integer(x * y);
      case BinaryOp::Div:
        if (y == 0)
          fail(ErrorCode::HostError, "division by zero");
        return HostValue::real(static_cast<double>(x) / static_cast<double>(y));
      case BinaryOp::FloorDiv:
      case BinaryOp::Mod: {
        if (y == 0)
          fail(ErrorCode::HostError, "division by zero");
        std::int64_t q = floor_div(x, y);
        return HostValue::integer(op == BinaryOp::FloorDiv ? q : x - q * y);
      }
      case BinaryOp::Pow: {
        if (y < 0)
          return HostValue::real(std::pow(static_cast<double>(x),
                                          static_cast<double>(y)));
        std::int64_t r = 1;
        for (std::int64_t k = 0; k < y; ++k)
          r *= x;
        return HostValue::integer(r);
      }
      }
    }
    double x = a.as_double(), y = b.as_double();
    switch (op) {
    case BinaryOp::Add:
      return HostValue::real(x + y);
    case BinaryOp::Sub:
      return HostValue::real(x - y);
    case BinaryOp::Mul:
      return HostValue::real(x * y);
    case BinaryOp::Div:
      if (y == 0.0)
        fail(ErrorCode::HostError, "division by zero");
      return HostValue::real(x / y);
    case BinaryOp::FloorDiv:
      return HostValue::real(std::floor(x / y));
    case BinaryOp::Mod:
      return HostValue::real(x - std::floor(x / y) * y);
    case BinaryOp::Pow:
      return HostValue::real(std::pow(x, y));
    }
  }
  if (op == BinaryOp::Add && a.is(K::Str) && b.is(K::Str))
    return HostValue::str(a.s + b.s);
  if (op == BinaryOp::Add && a.is_sequence() && b.kind == a.kind) {
    std::vector<HostValue> items = *a.items;
    items.insert(items.end(), b.items->begin(), b.items->end());
    HostValue r = HostValue::tuple(std::move(items));
    r.kind = a.kind;
    return r;
  }
  if (op == BinaryOp::Mul && a.is_sequence() && b.is(K::Int)) {
    std::vector<HostValue> items;
    for (std::int64_t k = 0; k < b.i; ++k)
      items.insert(items.end(), a.items->begin(), a.items->end());
    HostValue r = HostValue::tuple(std::move(items));
    r.kind = a.kind;
    return r;
  }
  fail(ErrorCode::HostError, "unsupported operand types " + a.type_name() +
                                 " and " + b.type_name());
}

namespace {

bool host_equal(const HostValue &a, const HostValue &b) {
  using K = HostValue::Kind;
  if (a.is_number() && b.is_number())
    return a.as_double() == b.as_double() &&
           (a.is(K::Float) || b.is(K::Float) || a.i == b.i || a.is(K::Bool) ||
            b.is(K::Bool));
  if (a.kind != b.kind)
    return false;
  switch (a.kind) {
  case K::None:
    return true;
  case K::Str:
    return a.s == b.s;
  case K::Tuple:
  case K::List:
  case K::Dict:
    if (a.items->size() != b.items->size())
      return false;
    for (std::size_t k = 0; k < a.items->size(); ++k)
      if (!host_equal((*a.items)[k], (*b.items)[k]))
        return false;
    return true;
  case K::Type:
    return a.type == b.type;
  case K::Object:
    return a.obj == b.obj;
  default:
    return false;
  }
}

} // namespace

HostValue VM::compare(CompareOp op, const HostValue &a, const HostValue &b) {
  using K = HostValue::Kind;
  if (a.is(K::Proxy) || b.is(K::Proxy)) {
    const staircase::Type &like = a.is(K::Proxy) ? a.proxy->type() : b.proxy->type();
    Value *lhs = materialize(a, like);
    Value *rhs = materialize(b, like);
    check_visible({lhs, rhs});
    static const CmpKind kinds[] = {CmpKind::Lt, CmpKind::Le, CmpKind::Gt,
                                    CmpKind::Ge, CmpKind::Eq, CmpKind::Ne};
    return HostValue::of(
        capture->builder.cmp(kinds[static_cast<int>(op)], lhs, rhs));
  }
  if (op == CompareOp::Eq)
    return HostValue::boolean(host_equal(a, b));
  if (op == CompareOp::Ne)
    return HostValue::boolean(!host_equal(a, b));
  int c = 0;
  if (a.is_number() && b.is_number()) {
    double x = a.as_double(), y = b.as_double();
    c = x < y ? -1 : x > y ? 1 : 0;
  } else if (a.is(K::Str) && b.is(K::Str)) {
    c = a.s.compare(b.s);
  } else {
    fail(ErrorCode::HostError, "cannot order " + a.type_name() + " and " +
                                   b.type_name());
  }
  switch (op) {
  case CompareOp::Lt:
    return HostValue::boolean(c < 0);
  case CompareOp::Le:
    return HostValue::boolean(c <= 0);
  case CompareOp::Gt:
    return HostValue::boolean(c > 0);
  default:
    return HostValue::boolean(c >= 0);
  }
}

namespace {

std::vector<HostValue> index_elements(const HostValue &key) {
  if (key.is(HostValue::Kind::Tuple))
    return *key.items;
  return {key};
}

} // namespace

HostValue VM::subscript(const HostValue &container, const HostValue &key) {
  using K = HostValue::Kind;
  switch (container.kind) {
  case K::Proxy: {
    CaptureState &st = require_capture("memref load");
    std::vector<Value *> idx;
    for (const auto &k : index_elements(key))
      idx.push_back(as_index(k));
    std::vector<Value *> all = idx;
    all.push_back(container.proxy);
    check_visible(all);
    return HostValue::of(st.builder.load(container.proxy, idx));
  }
  case K::Tuple:
  case K::List: {
    if (!key.is(K::Int))
      fail(ErrorCode::HostError, "sequence indices must be integers");
    auto n = static_cast<std::int64_t>(container.items->size());
    std::int64_t k = key.i < 0 ? key.i + n : key.i;
    if (k < 0 || k >= n)
      fail(ErrorCode::HostError, "index out of range");
    return (*container.items)[static_cast<std::size_t>(k)];
  }
  case K::Dict:
    for (std::size_t k = 0; k + 1 < container.items->size(); k += 2)
      if (host_equal((*container.items)[k], key))
        return (*container.items)[k + 1];
    fail(ErrorCode::HostError, "key " + key.repr() + " not found");
  case K::Object:
    return container.obj->getitem(*this, key);
  default:
    fail(ErrorCode::HostError,
         "'" + container.type_name() + "' object is not subscriptable");
  }
}

void VM::store_subscript(const HostValue &container, const HostValue &key,
                         const HostValue &value) {
  using K = HostValue::Kind;
  switch (container.kind) {
  case K::Proxy: {
    CaptureState &st = require_capture("memref store");
    const staircase::Type &t = container.proxy->type();
    if (!t.is_memref())
      fail(ErrorCode::TypeMismatch, "subscript of a non-memref value");
    std::vector<Value *> idx;
    for (const auto &k : index_elements(key))
      idx.push_back(as_index(k));
    Value *v = materialize(value, t.element());
    std::vector<Value *> all = idx;
    all.push_back(container.proxy);
    all.push_back(v);
    check_visible(all);
    st.builder.store(v, container.proxy, idx);
    return;
  }
  case K::List: {
    if (!key.is(K::Int))
      fail(ErrorCode::HostError, "list indices must be integers");
    auto n = static_cast<std::int64_t>(container.items->size());
    std::int64_t k = key.i < 0 ? key.i + n : key.i;
    if (k < 0 || k >= n)
      fail(ErrorCode::HostError, "index out of range");
    (*container.items)[static_cast<std::size_t>(k)] = value;
    return;
  }
  case K::Dict:
    for (std::size_t k = 0; k + 1 < container.items->size(); k += 2)
      if (host_equal((*container.items)[k], key)) {
        (*container.items)[k + 1] = value;
        return;
      }
    container.items->push_back(key);
    container.items->push_back(value);
    return;
  default:
    fail(ErrorCode::HostError, "'" + container.type_name() +
                                   "' object does not support item assignment");
  }
}

HostValue VM::call(const HostValue &callee, CallArgs &args) {
  if (!callee.is(HostValue::Kind::Object))
    fail(ErrorCode::HostError,
         "'" + callee.type_name() + "' object is not callable");
  return callee.obj->call(*this, args);
}

HostValue VM::getattr(const HostValue &obj, const std::string &name) {
  if (obj.is(HostValue::Kind::Object))
    if (auto v = obj.obj->getattr(*this, name))
      return *v;
  fail(ErrorCode::HostError,
       "'" + obj.type_name() + "' object has no attribute '" + name + "'");
}

Attribute VM::to_attribute(const HostValue &v) const {
  using K = HostValue::Kind;
  switch (v.kind) {
  case K::None:
    return Attribute::unit();
  case K::Bool:
    return Attribute::integer(v.b ? 1 : 0);
  case K::Int:
    return Attribute::integer(v.i);
  case K::Float:
    return Attribute::real(v.f);
  case K::Str:
    return Attribute::string(v.s);
  case K::Type:
    return Attribute::type(v.type);
  case K::Tuple:
  case K::List: {
    Attribute::Array a;
    for (const auto &x : *v.items)
      a.push_back(to_attribute(x));
    return Attribute::array(std::move(a));
  }
  case K::Dict: {
    Attribute::Dict d;
    for (std::size_t k = 0; k + 1 < v.items->size(); k += 2) {
      const HostValue &key = (*v.items)[k];
      if (!key.is(K::Str))
        fail(ErrorCode::TypeMismatch, "attribute dictionary keys must be strings");
      d[key.s] = to_attribute((*v.items)[k + 1]);
    }
    return Attribute::dict(std::move(d));
  }
  default:
    fail(ErrorCode::TypeMismatch,
         "cannot use " + v.type_name() + " as an attribute");
  }
}

void VM::run_module(const CodeObject &code, const NamespacePtr &ns) {
  Frame f;
  f.code = &code;
  f.globals = ns;
  f.names = ns;
  execute(f);
}

NamespacePtr VM::run_class_body(const CodeObject &code,
                                const NamespacePtr &globals) {
  Frame f;
  f.code = &code;
  f.globals = globals;
  f.names = std::make_shared<Namespace>();
  execute(f);
  return f.names;
}

HostValue VM::run_function(const CodeObject &code, std::vector<HostValue> args,
                           const NamespacePtr &globals, bool capture_frame) {
  Frame f;
  f.code = &code;
  f.globals = globals;
  f.capture_frame = capture_frame;
  f.locals.resize(code.varnames.size());
  f.bound.assign(code.varnames.size(), 0);
  for (std::size_t k = 0; k < args.size() && k < f.locals.size(); ++k) {
    f.locals[k] = std::move(args[k]);
    f.bound[k] = 1;
  }
  return execute(f);
}

namespace {

HostValue from_const(const Const &c) {
  struct V {
    HostValue operator()(std::monostate) const { return HostValue::none(); }
    HostValue operator()(bool b) const { return HostValue::boolean(b); }
    HostValue operator()(std::int64_t i) const { return HostValue::integer(i); }
    HostValue operator()(double d) const { return HostValue::real(d); }
    HostValue operator()(const std::string &s) const { return HostValue::str(s); }
    HostValue operator()(const CodePtr &code) const {
      auto cc = std::make_shared<CodeConst>();
      cc->code = code;
      return HostValue::object(cc);
    }
    HostValue operator()(const std::vector<std::string> &names) const {
      std::vector<HostValue> items;
      for (const auto &n : names)
        items.push_back(HostValue::str(n));
      return HostValue::tuple(std::move(items));
    }
  };
  return std::visit(V{}, c);
}

} // namespace

HostValue VM::execute(Frame &f) {
  if (++depth_ > 200) {
    --depth_;
    fail(ErrorCode::HostError, "maximum call depth exceeded");
  }
  struct DepthGuard {
    int &d;
    ~DepthGuard() { --d; }
  } guard{depth_};

  const CodeObject &code = *f.code;
  auto &st = f.stack;
  auto pop = [&st]() {
    HostValue v = std::move(st.back());
    st.pop_back();
    return v;
  };
  std::size_t pc = 0;
  while (pc < code.code.size()) {
    const Instr ins = code.code[pc];
    line_ = code.line_at(pc);
    if (capture && capture->builder.location().line != line_)
      capture->builder.set_location(location());
    std::size_t next_pc = pc + 1;
    try {
      switch (ins.op) {
      case Opcode::NOP:
        break;
      case Opcode::POP_TOP:
        pop();
        break;
      case Opcode::DUP_TOP:
        st.push_back(st.back());
        break;
      case Opcode::ROT_TWO:
        std::swap(st[st.size() - 1], st[st.size() - 2]);
        break;
      case Opcode::LOAD_CONST:
        st.push_back(from_const(code.consts[static_cast<std::size_t>(ins.arg)]));
        break;
      case Opcode::LOAD_FAST: {
        auto k = static_cast<std::size_t>(ins.arg);
        if (!f.bound[k])
          fail(ErrorCode::HostError,
               "local variable '" + code.varnames[k] +
                   "' referenced before assignment");
        st.push_back(f.locals[k]);
        break;
      }
      case Opcode::STORE_FAST: {
        auto k = static_cast<std::size_t>(ins.arg);
        HostValue v = pop();
        if (f.capture_frame && capture && v.is(HostValue::Kind::Float))
          v = HostValue::of(capture->builder.constant_float(v.f));
        f.locals[k] = std::move(v);
        f.bound[k] = 1;
        break;
      }
      case Opcode::LOAD_GLOBAL:
      case Opcode::LOAD_NAME: {
        const std::string &n = code.names[static_cast<std::size_t>(ins.arg)];
        const HostValue *v = nullptr;
        if (ins.op == Opcode::LOAD_NAME && f.names)
          v = f.names->get(n);
        if (!v)
          v = f.globals->get(n);
        if (!v)
          v = builtins_->get(n);
        if (!v)
          fail(ErrorCode::HostError, "name '" + n + "' is not defined");
        st.push_back(*v);
        break;
      }
      case Opcode::STORE_NAME:
        f.names->set(code.names[static_cast<std::size_t>(ins.arg)], pop());
        break;
      case Opcode::LOAD_ATTR: {
        HostValue obj = pop();
        st.push_back(getattr(obj, code.names[static_cast<std::size_t>(ins.arg)]));
        break;
      }
      case Opcode::BINARY_SUBSCR: {
        HostValue key = pop();
        HostValue container = pop();
        st.push_back(subscript(container, key));
        break;
      }
      case Opcode::STORE_SUBSCR: {
        HostValue key = pop();
        HostValue container = pop();
        HostValue value = pop();
        store_subscript(container, key, value);
        break;
      }
      case Opcode::AUG_SUBSCR: {
        HostValue key = pop();
        HostValue container = pop();
        HostValue rhs = pop();
        HostValue current = subscript(container, key);
        store_subscript(container, key,
                        binary(static_cast<BinaryOp>(ins.arg), current, rhs));
        break;
      }
      case Opcode::BINARY_OP: {
        HostValue b = pop();
        HostValue a = pop();
        st.push_back(binary(static_cast<BinaryOp>(ins.arg), a, b));
        break;
      }
      case Opcode::UNARY_NEGATIVE: {
        HostValue a = pop();
        if (a.is(HostValue::Kind::Proxy))
          st.push_back(binary(BinaryOp::Sub, HostValue::integer(0), a));
        else if (a.is(HostValue::Kind::Float))
          st.push_back(HostValue::real(-a.f));
        else if (a.is_number())
          st.push_back(HostValue::integer(-(a.is(HostValue::Kind::Int) ? a.i : a.b)));
        else
          fail(ErrorCode::HostError, "bad operand type for unary -");
        break;
      }
      case Opcode::UNARY_NOT: {
        HostValue a = pop();
        st.push_back(HostValue::boolean(!truthy(a)));
        break;
      }
      case Opcode::COMPARE_OP: {
        HostValue b = pop();
        HostValue a = pop();
        st.push_back(compare(static_cast<CompareOp>(ins.arg), a, b));
        break;
      }
      case Opcode::BUILD_TUPLE:
      case Opcode::BUILD_LIST:
      case Opcode::BUILD_MAP: {
        std::size_t n = static_cast<std::size_t>(ins.arg) *
                        (ins.op == Opcode::BUILD_MAP ? 2 : 1);
        std::vector<HostValue> items(st.end() - static_cast<std::ptrdiff_t>(n),
                                     st.end());
        st.resize(st.size() - n);
        if (ins.op == Opcode::BUILD_TUPLE)
          st.push_back(HostValue::tuple(std::move(items)));
        else if (ins.op == Opcode::BUILD_LIST)
          st.push_back(HostValue::list(std::move(items)));
        else
          st.push_back(HostValue::dict(std::move(items)));
        break;
      }
      case Opcode::UNPACK_SEQUENCE: {
        HostValue seq = pop();
        if (!seq.is_sequence())
          fail(ErrorCode::HostError,
               "cannot unpack a " + seq.type_name() + " value");
        if (seq.items->size() != static_cast<std::size_t>(ins.arg))
          fail(ErrorCode::HostError,
               "expected " + std::to_string(ins.arg) + " values to unpack, got " +
                   std::to_string(seq.items->size()));
        for (auto it = seq.items->rbegin(); it != seq.items->rend(); ++it)
          st.push_back(*it);
        break;
      }
      case Opcode::CALL_FUNCTION:
      case Opcode::CALL_FUNCTION_KW: {
        CallArgs args;
        std::vector<std::string> names;
        if (ins.op == Opcode::CALL_FUNCTION_KW) {
          HostValue kw = pop();
          for (const auto &n : *kw.items)
            names.push_back(n.s);
        }
        auto n = static_cast<std::size_t>(ins.arg);
        std::size_t npos = n - names.size();
        std::size_t base = st.size() - n;
        for (std::size_t k = 0; k < npos; ++k)
          args.pos.push_back(std::move(st[base + k]));
        for (std::size_t k = 0; k < names.size(); ++k)
          args.kw.emplace_back(names[k], std::move(st[base + npos + k]));
        st.resize(base);
        HostValue callee = pop();
        HostValue r = call(callee, args);
        line_ = code.line_at(pc);
        if (capture && capture->builder.location().line != line_)
          capture->builder.set_location(location());
        st.push_back(std::move(r));
        break;
      }
      case Opcode::GET_ITER: {
        HostValue v = pop();
        if (v.is_sequence()) {
          auto it = std::make_shared<SequenceIterator>();
          it->items = v.items;
          st.push_back(HostValue::object(it));
        } else if (v.is(HostValue::Kind::Object) && v.obj->is_iterator()) {
          st.push_back(v);
        } else if (v.is(HostValue::Kind::Proxy)) {
          fail(ErrorCode::UnsupportedConstruct,
               "iterating over an IR value is not supported");
        } else {
          fail(ErrorCode::HostError,
               "'" + v.type_name() + "' object is not iterable");
        }
        break;
      }
      case Opcode::FOR_ITER: {
        auto next = st.back().obj->next(*this);
        if (next) {
          st.push_back(std::move(*next));
        } else {
          pop();
          next_pc = static_cast<std::size_t>(ins.arg);
        }
        break;
      }
      case Opcode::JUMP_FORWARD:
      case Opcode::JUMP_ABSOLUTE:
        next_pc = static_cast<std::size_t>(ins.arg);
        break;
      case Opcode::POP_JUMP_IF_FALSE: {
        HostValue v = pop();
        if (!truthy(v))
          next_pc = static_cast<std::size_t>(ins.arg);
        break;
      }
      case Opcode::RETURN_VALUE:
        if (f.capture_frame && capture)
          capture->return_line = line_;
        return pop();
      case Opcode::MAKE_FUNCTION: {
        HostValue c = pop();
        HostValue annotations = pop();
        auto fn = std::make_shared<HostFunction>();
        fn->code = c.as<CodeConst>()->code;
        fn->annotations = *annotations.items;
        fn->globals = f.globals;
        st.push_back(HostValue::object(fn));
        break;
      }
      case Opcode::MAKE_CLASS: {
        HostValue c = pop();
        auto n = static_cast<std::size_t>(ins.arg);
        std::vector<HostValue> bases(st.end() - static_cast<std::ptrdiff_t>(n),
                                     st.end());
        st.resize(st.size() - n);
        auto cls = std::make_shared<ClassObject>();
        const CodeObject &body = *c.as<CodeConst>()->code;
        cls->name = body.name;
        cls->line = body.first_line;
        for (const auto &b : bases) {
          auto *base = b.as<ClassObject>();
          if (!base)
            fail(ErrorCode::HostError, "base class must be a class");
          cls->gpu = cls->gpu || base->gpu;
        }
        cls->ns = run_class_body(body, f.globals);
        line_ = code.line_at(pc);
        st.push_back(HostValue::object(cls));
        break;
      }
      }
    } catch (const Error &e) {
      if (!e.location() || e.location()->file == Location::unknown().file)
        throw Error(e.code(), e.detail(), location());
      throw;
    }
    pc = next_pc;
  }
  return HostValue::none();
}

} // namespace staircase::host
