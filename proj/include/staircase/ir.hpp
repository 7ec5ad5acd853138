#pragma once

// Core SSA region-based IR: types, attributes, values, operations, blocks,
// regions, the dialect registry and the owning Context.

#include "staircase/error.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

namespace staircase {

class Block;
class Context;
class Operation;
class Region;
class Value;

//===----------------------------------------------------------------------===//
// Types
//===----------------------------------------------------------------------===//

enum class TypeKind : std::uint8_t { Index, I1, I32, I64, F32, F64, MemRef };

/// Structural IR type. Scalars carry only a kind; memrefs carry a static
/// shape and a scalar element kind.
class Type {
public:
  Type() = default;

  static Type index() { return Type(TypeKind::Index); }
  static Type i1() { return Type(TypeKind::I1); }
  static Type i32() { return Type(TypeKind::I32); }
  static Type i64() { return Type(TypeKind::I64); }
  static Type f32() { return Type(TypeKind::F32); }
  static Type f64() { return Type(TypeKind::F64); }
  static Type scalar(TypeKind kind);
  /// Throws InvalidType for empty/non-positive extents or a non-scalar element.
  static Type memref(std::vector<std::int64_t> shape, Type element);

  TypeKind kind() const { return kind_; }
  bool is_float() const {
    return kind_ == TypeKind::F32 || kind_ == TypeKind::F64;
  }
  bool is_integer() const {
    return kind_ == TypeKind::I1 || kind_ == TypeKind::I32 ||
           kind_ == TypeKind::I64;
  }
  bool is_index() const { return kind_ == TypeKind::Index; }
  bool is_int_like() const { return is_integer() || is_index(); }
  bool is_memref() const { return kind_ == TypeKind::MemRef; }
  bool is_scalar() const { return !is_memref(); }

  const std::vector<std::int64_t> &shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::int64_t num_elements() const;
  Type element() const { return Type(element_); }
  /// Bit width of a scalar; index is 64.
  int bit_width() const;

  std::string str() const;

  friend bool operator==(const Type &, const Type &) = default;

private:
  explicit Type(TypeKind kind) : kind_(kind), element_(kind) {}

  TypeKind kind_ = TypeKind::Index;
  TypeKind element_ = TypeKind::Index;
  std::vector<std::int64_t> shape_;
};

const char *to_string(TypeKind kind);

//===----------------------------------------------------------------------===//
// Attributes
//===----------------------------------------------------------------------===//

struct UnitAttr {
  friend bool operator==(const UnitAttr &, const UnitAttr &) = default;
};

struct FloatAttr {
  double value = 0.0;
  TypeKind width = TypeKind::F64;
  friend bool operator==(const FloatAttr &a, const FloatAttr &b);
};

/// `@a` or nested `@a::@b`.
struct SymbolRef {
  std::vector<std::string> path;
  friend bool operator==(const SymbolRef &, const SymbolRef &) = default;
};

/// Immutable tagged-union attribute value. Copies share storage.
class Attribute {
public:
  using Array = std::vector<Attribute>;
  using Dict = std::map<std::string, Attribute>;
  using Storage = std::variant<UnitAttr, std::int64_t, FloatAttr, std::string,
                               Type, Array, Dict, SymbolRef>;

  Attribute();

  static Attribute unit() { return Attribute(); }
  static Attribute integer(std::int64_t v) { return Attribute(Storage(v)); }
  static Attribute real(double v, TypeKind width = TypeKind::F64) {
    return Attribute(Storage(FloatAttr{v, width}));
  }
  static Attribute string(std::string v) {
    return Attribute(Storage(std::move(v)));
  }
  static Attribute type(Type t) { return Attribute(Storage(std::move(t))); }
  static Attribute array(Array a) { return Attribute(Storage(std::move(a))); }
  static Attribute dict(Dict d) { return Attribute(Storage(std::move(d))); }
  static Attribute symbol(std::vector<std::string> path) {
    return Attribute(Storage(SymbolRef{std::move(path)}));
  }

  bool is_unit() const { return holds<UnitAttr>(); }
  bool is_int() const { return holds<std::int64_t>(); }
  bool is_float() const { return holds<FloatAttr>(); }
  bool is_string() const { return holds<std::string>(); }
  bool is_type() const { return holds<Type>(); }
  bool is_array() const { return holds<Array>(); }
  bool is_dict() const { return holds<Dict>(); }
  bool is_symbol() const { return holds<SymbolRef>(); }

  std::int64_t as_int() const { return std::get<std::int64_t>(*data_); }
  const FloatAttr &as_float() const { return std::get<FloatAttr>(*data_); }
  const std::string &as_string() const { return std::get<std::string>(*data_); }
  const Type &as_type() const { return std::get<Type>(*data_); }
  const Array &as_array() const { return std::get<Array>(*data_); }
  const Dict &as_dict() const { return std::get<Dict>(*data_); }
  const SymbolRef &as_symbol() const { return std::get<SymbolRef>(*data_); }

  const Storage &storage() const { return *data_; }

  /// Textual form used by the printer (dictionary keys sorted).
  std::string str() const;

  friend bool operator==(const Attribute &a, const Attribute &b) {
    return a.data_ == b.data_ || *a.data_ == *b.data_;
  }

private:
  explicit Attribute(Storage s)
      : data_(std::make_shared<const Storage>(std::move(s))) {}
  template <typename T> bool holds() const {
    return std::holds_alternative<T>(*data_);
  }

  std::shared_ptr<const Storage> data_;
};

/// Shortest decimal text that reads back to the same value at `width`
/// precision; always contains '.', 'e', "inf" or "nan".
std::string format_float(double value, TypeKind width);

//===----------------------------------------------------------------------===//
// Values
//===----------------------------------------------------------------------===//

/// An SSA value: either an operation result or a block argument.
class Value {
public:
  Value(const Value &) = delete;
  Value &operator=(const Value &) = delete;
  ~Value();

  std::int64_t id() const { return id_; }
  const Type &type() const { return type_; }

  bool is_block_argument() const { return op_ == nullptr; }
  /// Defining op, or null for block arguments.
  Operation *defining_op() const { return op_; }
  /// Owning block for block arguments, or null.
  Block *owner_block() const { return block_; }
  /// Result index or argument index.
  unsigned index() const { return index_; }
  /// Block in which this value is defined.
  Block *parent_block() const;

  /// One entry per operand slot that references this value.
  const std::vector<Operation *> &users() const { return users_; }
  std::size_t use_count() const { return users_.size(); }
  bool has_uses() const { return !users_.empty(); }

private:
  friend class Block;
  friend class Operation;

  Value(std::int64_t id, Type type, Operation *op, Block *block,
        unsigned index)
      : id_(id), type_(std::move(type)), op_(op), block_(block),
        index_(index) {}

  void add_user(Operation *op) { users_.push_back(op); }
  void remove_user(Operation *op);

  std::int64_t id_;
  Type type_;
  Operation *op_;
  Block *block_;
  unsigned index_;
  std::vector<Operation *> users_;
};

/// Old-to-new value correspondence used while cloning.
class IRMapping {
public:
  void map(const Value *from, Value *to) { map_[from] = to; }
  Value *lookup_or_self(Value *v) const {
    auto it = map_.find(v);
    return it == map_.end() ? v : it->second;
  }
  bool contains(const Value *v) const { return map_.count(v) != 0; }

private:
  std::unordered_map<const Value *, Value *> map_;
};

//===----------------------------------------------------------------------===//
// Dialect registry
//===----------------------------------------------------------------------===//

/// Per-op schema. Arity bounds use -1 for "unbounded".
struct OpSchema {
  struct Arity {
    int min = 0;
    int max = 0;
    bool accepts(std::size_t n) const {
      return static_cast<int>(n) >= min && (max < 0 || static_cast<int>(n) <= max);
    }
  };

  std::string name;
  Arity operands;
  Arity results;
  Arity regions;
  /// Name of the op that must end every region's block; empty for none.
  std::string terminator;
  bool is_terminator = false;
  bool has_side_effects = true;
  bool isolated_from_above = false;
  std::vector<std::string> required_attrs;
  using Check = std::function<void(const Operation &, std::vector<std::string> &)>;
  /// Operand/result/attribute rules; also checked when an op is created.
  Check type_rules;
  /// Rules over regions, block arguments and symbols; verify-time only.
  Check verify;
};

struct DialectDef {
  std::string name;
  std::vector<OpSchema> ops;
};

class DialectRegistry {
public:
  /// Throws DuplicateDialect if the name is already registered.
  void register_dialect(DialectDef def);
  bool has_dialect(std::string_view name) const;
  /// Null when either the dialect or the op is unknown.
  const OpSchema *lookup(std::string_view op_name) const;
  std::vector<std::string> dialect_names() const;
  std::size_t size() const { return dialects_.size(); }

private:
  std::map<std::string, std::map<std::string, OpSchema, std::less<>>,
           std::less<>>
      dialects_;
};

//===----------------------------------------------------------------------===//
// Operations, blocks, regions
//===----------------------------------------------------------------------===//

class Operation {
public:
  Operation(const Operation &) = delete;
  Operation &operator=(const Operation &) = delete;
  ~Operation();

  /// Creates a detached op. Only the schema lookup is checked here; see
  /// `create_op` for the fully checked insertion path.
  static std::unique_ptr<Operation>
  create(Context &ctx, std::string name, std::vector<Value *> operands,
         const std::vector<Type> &result_types,
         std::map<std::string, Attribute> attributes = {},
         std::size_t num_regions = 0, Location loc = Location::unknown());

  const std::string &name() const { return name_; }
  std::string_view dialect() const;
  Context &context() const { return *ctx_; }
  const OpSchema *schema() const { return schema_; }
  bool is(std::string_view name) const { return name_ == name; }

  std::size_t num_operands() const { return operands_.size(); }
  Value *operand(std::size_t i) const { return operands_[i]; }
  std::span<Value *const> operands() const { return operands_; }
  void set_operand(std::size_t i, Value *v);
  void set_operands(std::vector<Value *> values);

  std::size_t num_results() const { return results_.size(); }
  Value *result(std::size_t i) const { return results_[i].get(); }
  std::vector<Value *> results() const;

  const std::map<std::string, Attribute> &attributes() const { return attrs_; }
  const Attribute *attr(std::string_view key) const;
  bool has_attr(std::string_view key) const { return attr(key) != nullptr; }
  void set_attr(const std::string &key, Attribute value);
  void remove_attr(const std::string &key);

  std::size_t num_regions() const { return regions_.size(); }
  Region &region(std::size_t i) const { return *regions_[i]; }
  Region &add_region();

  Block *parent_block() const { return parent_; }
  Region *parent_region() const;
  Operation *parent_op() const;
  std::size_t index_in_block() const;
  /// True if `other` is nested (at any depth) inside this op, or is this op.
  bool is_ancestor_of(const Operation *other) const;

  const Location &location() const { return loc_; }
  void set_location(Location loc) { loc_ = std::move(loc); }

  /// Deep copy with operands remapped through `mapping`; new results and
  /// block arguments are recorded into `mapping`.
  std::unique_ptr<Operation> clone(IRMapping &mapping) const;
  std::unique_ptr<Operation> clone() const {
    IRMapping m;
    return clone(m);
  }

  /// Exchanges attributes and regions with `other` (same op name required).
  void swap_contents(Operation &other);

private:
  friend class Block;
  friend class Value;

  Operation(Context &ctx, std::string name, const OpSchema *schema, Location loc)
      : ctx_(&ctx), name_(std::move(name)), schema_(schema),
        loc_(std::move(loc)) {}

  Context *ctx_;
  std::string name_;
  const OpSchema *schema_;
  std::vector<Value *> operands_;
  std::vector<std::unique_ptr<Value>> results_;
  std::map<std::string, Attribute> attrs_;
  std::vector<std::unique_ptr<Region>> regions_;
  Block *parent_ = nullptr;
  Location loc_;
};

class Block {
public:
  explicit Block(Region *parent) : parent_(parent) {}
  Block(const Block &) = delete;
  Block &operator=(const Block &) = delete;
  ~Block();

  Region *parent_region() const { return parent_; }
  Operation *parent_op() const;

  std::size_t num_arguments() const { return args_.size(); }
  Value *argument(std::size_t i) const { return args_[i].get(); }
  std::vector<Value *> arguments() const;
  Value *add_argument(Type type);

  std::size_t size() const { return ops_.size(); }
  bool empty() const { return ops_.empty(); }
  Operation &op(std::size_t i) const { return *ops_[i]; }
  Operation &front() const { return *ops_.front(); }
  Operation &back() const { return *ops_.back(); }
  const std::vector<std::unique_ptr<Operation>> &operations() const {
    return ops_;
  }

  Operation &insert(std::size_t index, std::unique_ptr<Operation> op);
  Operation &push_back(std::unique_ptr<Operation> op) {
    return insert(ops_.size(), std::move(op));
  }
  /// Detaches the op at `index` without touching its use lists.
  std::unique_ptr<Operation> take(std::size_t index);
  std::size_t index_of(const Operation *op) const;

  /// Last op if its schema marks it as a terminator, else null.
  Operation *terminator() const;

private:
  friend class Operation;

  Region *parent_;
  std::vector<std::unique_ptr<Value>> args_;
  std::vector<std::unique_ptr<Operation>> ops_;
};

/// Ordered list of blocks; within this kit always exactly one.
class Region {
public:
  explicit Region(Operation *parent) : parent_(parent) {}
  Region(const Region &) = delete;
  Region &operator=(const Region &) = delete;

  Operation *parent_op() const { return parent_; }
  bool empty() const { return blocks_.empty(); }
  std::size_t num_blocks() const { return blocks_.size(); }
  Block &block(std::size_t i = 0) const { return *blocks_[i]; }
  Block &add_block();

private:
  friend class Operation;

  Operation *parent_;
  std::vector<std::unique_ptr<Block>> blocks_;
};

//===----------------------------------------------------------------------===//
// Context
//===----------------------------------------------------------------------===//

/// Owns the dialect registry, top-level modules and the value-id counter.
/// Confined to one thread at a time; independent Contexts may run in
/// parallel.
class Context {
public:
  Context();
  Context(const Context &) = delete;
  Context &operator=(const Context &) = delete;
  ~Context();

  DialectRegistry &registry() { return registry_; }
  const DialectRegistry &registry() const { return registry_; }

  /// Fresh empty `builtin.module` owned by this context.
  Operation &create_module(Location loc = Location::unknown());
  Operation &adopt_module(std::unique_ptr<Operation> module);
  std::unique_ptr<Operation> release_module(const Operation &module);
  const std::vector<std::unique_ptr<Operation>> &modules() const {
    return modules_;
  }

  std::int64_t next_value_id() { return next_value_id_++; }

private:
  DialectRegistry registry_;
  std::vector<std::unique_ptr<Operation>> modules_;
  std::int64_t next_value_id_ = 0;
};

/// Same as `Context{}`; every built-in dialect is registered.
std::unique_ptr<Context> create_context();

/// Adds `def` to `ctx`'s registry (DuplicateDialect on a name clash).
void register_dialect(Context &ctx, DialectDef def);

//===----------------------------------------------------------------------===//
// Checked construction, verification, traversal, mutation
//===----------------------------------------------------------------------===//

/// Whether `v` may be used by an op placed at `index` in `block`.
bool is_visible_at(const Value &v, const Block &block, std::size_t index);

/// Creates `name` at `insert_index` of `block`. Throws UnknownOperation,
/// ArityMismatch, TypeMismatch (schema rules) or DominanceViolation.
Operation &create_op(Block &block, std::size_t insert_index, std::string name,
                     std::vector<Value *> operands,
                     std::map<std::string, Attribute> attributes,
                     const std::vector<Type> &result_types,
                     std::size_t region_count, Location loc);

struct Diagnostic {
  std::string message;
  std::string op_name;
  Location loc;
  std::string str() const;
};

/// Structural verification of a `builtin.module`. Never throws.
std::vector<Diagnostic> verify(const Operation &module);

enum class WalkOrder { Pre, Post };

/// Dispatches visited ops to the handler registered for their dialect,
/// falling back to a generic handler.
class DialectVisitor {
public:
  using Handler = std::function<void(Operation &)>;

  DialectVisitor &on(std::string dialect, Handler handler);
  DialectVisitor &otherwise(Handler handler);
  void operator()(Operation &op) const;

private:
  std::map<std::string, Handler, std::less<>> handlers_;
  Handler fallback_;
};

/// Visits `root` and every nested op. In post order the callback may erase
/// the op it is handed; in pre order it must not.
void walk(Operation &root, const std::function<void(Operation &)> &fn,
          WalkOrder order = WalkOrder::Post);

std::size_t count_ops(const Operation &root);

/// Redirects every use of `from` to `to`. Returns the number of operand
/// slots rewritten. Throws TypeMismatch or DominanceViolation.
std::size_t replace_all_uses_with(Value &from, Value &to);

/// Removes `op` from its block. Throws HasUses if any result is used.
void erase_op(Operation &op);

/// Nearest enclosing op whose schema is isolated from above, or the
/// outermost op.
const Operation *isolation_scope(const Operation &op);

/// `sym_name` lookup among the direct children of `scope`'s body.
Operation *lookup_symbol(const Operation &scope, std::string_view name);

} // namespace staircase
