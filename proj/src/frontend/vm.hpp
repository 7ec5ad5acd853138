#pragma once

#include "staircase/dialects.hpp"
#include "staircase/frontend.hpp"
#include "staircase/frontend/bytecode.hpp"

#include <functional>
#include <map>
#include <memory>
#include <optional>

namespace staircase::host {

struct HostObject;

struct HostValue {
  enum class Kind { None, Bool, Int, Float, Str, Tuple, List, Dict, Proxy, Type, Object };

  Kind kind = Kind::None;
  bool b = false;
  std::int64_t i = 0;
  double f = 0.0;
  std::string s;
  /// Tuple/List elements; Dict keys and values interleaved.
  std::shared_ptr<std::vector<HostValue>> items;
  Value *proxy = nullptr;
  staircase::Type type;
  std::shared_ptr<HostObject> obj;

  static HostValue none() { return {}; }
  static HostValue boolean(bool v);
  static HostValue integer(std::int64_t v);
  static HostValue real(double v);
  static HostValue str(std::string v);
  static HostValue tuple(std::vector<HostValue> v);
  static HostValue list(std::vector<HostValue> v);
  static HostValue dict(std::vector<HostValue> kv);
  static HostValue of(Value *v);
  static HostValue of(staircase::Type t);
  static HostValue object(std::shared_ptr<HostObject> o);

  bool is(Kind k) const { return kind == k; }
  bool is_none() const { return kind == Kind::None; }
  bool is_number() const {
    return kind == Kind::Int || kind == Kind::Float || kind == Kind::Bool;
  }
  bool is_sequence() const { return kind == Kind::Tuple || kind == Kind::List; }
  double as_double() const;
  std::string type_name() const;
  std::string repr() const;

  template <typename T> T *as() const { return dynamic_cast<T *>(obj.get()); }
};

struct Namespace {
  std::map<std::string, HostValue> values;
  std::vector<std::string> order;

  void set(const std::string &name, HostValue v) {
    if (!values.count(name))
      order.push_back(name);
    values[name] = std::move(v);
  }
  const HostValue *get(const std::string &name) const {
    auto it = values.find(name);
    return it == values.end() ? nullptr : &it->second;
  }
};
using NamespacePtr = std::shared_ptr<Namespace>;

struct CallArgs {
  std::vector<HostValue> pos;
  std::vector<std::pair<std::string, HostValue>> kw;

  const HostValue *keyword(std::string_view name) const {
    for (const auto &[k, v] : kw)
      if (k == name)
        return &v;
    return nullptr;
  }
};

class VM;

struct HostObject : std::enable_shared_from_this<HostObject> {
  virtual ~HostObject() = default;
  virtual std::string type_name() const = 0;
  virtual HostValue call(VM &vm, CallArgs &args);
  virtual std::optional<HostValue> getattr(VM &vm, const std::string &name);
  virtual HostValue getitem(VM &vm, const HostValue &key);
  /// Iterators return the next element or nullopt when exhausted.
  virtual bool is_iterator() const { return false; }
  virtual std::optional<HostValue> next(VM &vm);
};

struct Builtin : HostObject {
  using Fn = std::function<HostValue(VM &, CallArgs &)>;
  std::string name;
  Fn fn;
  Builtin(std::string n, Fn f) : name(std::move(n)), fn(std::move(f)) {}
  std::string type_name() const override { return "builtin " + name; }
  HostValue call(VM &vm, CallArgs &args) override { return fn(vm, args); }
};

struct HostFunction : HostObject {
  CodePtr code;
  std::vector<HostValue> annotations;
  NamespacePtr globals;
  std::string type_name() const override { return "function " + code->name; }
  HostValue call(VM &vm, CallArgs &args) override;
};

/// A function marked with @mlir_func.
struct CapturableFunction : HostObject {
  std::shared_ptr<HostFunction> fn;
  CaptureConfig config;
  std::string type_name() const override { return "mlir_func " + fn->code->name; }
  HostValue call(VM &vm, CallArgs &args) override;
};

/// Class object. `gpu` classes derive from GPUModule; calling one creates a
/// GPUInstance.
struct ClassObject : HostObject {
  std::string name;
  NamespacePtr ns;
  bool gpu = false;
  int line = 0;
  std::string type_name() const override { return "class " + name; }
  HostValue call(VM &vm, CallArgs &args) override;
  std::optional<HostValue> getattr(VM &vm, const std::string &attr) override;
};

struct GPUInstance : HostObject {
  std::shared_ptr<ClassObject> spec;
  Attribute::Dict func_attributes;
  std::string type_name() const override { return spec->name + " instance"; }
  std::optional<HostValue> getattr(VM &vm, const std::string &attr) override;
  /// Kernels (functions in the class body) in definition order.
  std::vector<std::pair<std::string, std::shared_ptr<HostFunction>>>
  kernels() const;
};

/// Capture-time state: the builder and the marker-managed insertion stack.
struct CaptureState {
  explicit CaptureState(Context &ctx) : builder(ctx) {}
  OpBuilder builder;
  std::vector<Block *> stack;
  std::vector<Operation *> pending_ifs;
  bool in_kernel = false;
  int return_line = 0;

  void push(Block &b);
  void pop(const char *marker);
  Block &top() const { return *stack.back(); }
};

struct ProgramState {
  std::string filename;
  Module ast;
  CodePtr code;
  NamespacePtr globals;
  NamespacePtr builtins;
  /// Top-level GPU module instances and the global name bound to each.
  std::vector<std::pair<std::string, std::shared_ptr<GPUInstance>>> instances;
};

class VM {
public:
  VM(NamespacePtr builtins, std::string filename);

  /// Runs module-level code with `ns` as the global namespace.
  void run_module(const CodeObject &code, const NamespacePtr &ns);
  /// Runs a class body; returns its namespace.
  NamespacePtr run_class_body(const CodeObject &code, const NamespacePtr &globals);
  /// Calls a function body with positional arguments bound to parameters.
  /// `capture_frame` materializes float literals assigned to locals.
  HostValue run_function(const CodeObject &code, std::vector<HostValue> args,
                         const NamespacePtr &globals, bool capture_frame);

  CaptureState *capture = nullptr;
  /// Instances created while running top-level code.
  std::vector<std::shared_ptr<GPUInstance>> created_instances;

  Location location() const { return Location{file_, line_, 0}; }
  [[noreturn]] void fail(ErrorCode code, const std::string &msg) const;

  /// IR helpers that honor region locality and the current location.
  CaptureState &require_capture(const std::string &what) const;
  void check_visible(const std::vector<Value *> &values) const;
  Value *materialize(const HostValue &v, const staircase::Type &like);
  Value *as_index(const HostValue &v);

  bool truthy(const HostValue &v) const;
  HostValue binary(BinaryOp op, const HostValue &a, const HostValue &b);
  HostValue compare(CompareOp op, const HostValue &a, const HostValue &b);
  HostValue subscript(const HostValue &container, const HostValue &key);
  void store_subscript(const HostValue &container, const HostValue &key,
                       const HostValue &value);
  HostValue call(const HostValue &callee, CallArgs &args);
  HostValue getattr(const HostValue &obj, const std::string &name);
  Attribute to_attribute(const HostValue &v) const;

private:
  struct Frame;
  HostValue execute(Frame &frame);

  NamespacePtr builtins_;
  std::string file_;
  int line_ = 1;
  int depth_ = 0;
};

/// Builtins of the host language (types, markers, MemRef, GPU support).
NamespacePtr make_builtins();

} // namespace staircase::host
