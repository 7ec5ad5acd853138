#include "staircase/ir.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <sstream>

namespace staircase {

namespace detail {
void register_builtin_dialects(DialectRegistry &registry);
} // namespace detail

//===----------------------------------------------------------------------===//
// Errors and locations
//===----------------------------------------------------------------------===//

std::string Location::str() const {
  return file + ":" + std::to_string(line) + ":" + std::to_string(column);
}

const char *to_string(ErrorCode code) {
  switch (code) {
  case ErrorCode::DuplicateDialect: return "DuplicateDialect";
  case ErrorCode::UnknownOperation: return "UnknownOperation";
  case ErrorCode::InvalidType: return "InvalidType";
  case ErrorCode::TypeMismatch: return "TypeMismatch";
  case ErrorCode::DominanceViolation: return "DominanceViolation";
  case ErrorCode::HasUses: return "HasUses";
  case ErrorCode::InvalidBound: return "InvalidBound";
  case ErrorCode::ArityMismatch: return "ArityMismatch";
  case ErrorCode::RankMismatch: return "RankMismatch";
  case ErrorCode::DuplicateSymbol: return "DuplicateSymbol";
  case ErrorCode::UnknownSymbol: return "UnknownSymbol";
  case ErrorCode::SignatureMismatch: return "SignatureMismatch";
  case ErrorCode::UnannotatedParameter: return "UnannotatedParameter";
  case ErrorCode::UnsupportedConstruct: return "UnsupportedConstruct";
  case ErrorCode::CaptureLeak: return "CaptureLeak";
  case ErrorCode::VerificationFailed: return "VerificationFailed";
  case ErrorCode::UnbalancedMarkers: return "UnbalancedMarkers";
  case ErrorCode::RewriteUnsupported: return "RewriteUnsupported";
  case ErrorCode::SyntaxError: return "SyntaxError";
  case ErrorCode::UnknownPass: return "UnknownPass";
  case ErrorCode::PassFailure: return "PassFailure";
  case ErrorCode::InvalidFactor: return "InvalidFactor";
  case ErrorCode::OutliningUnsupported: return "OutliningUnsupported";
  case ErrorCode::OutOfBounds: return "OutOfBounds";
  case ErrorCode::MissingMain: return "MissingMain";
  case ErrorCode::ModeUnsupported: return "ModeUnsupported";
  case ErrorCode::EmptySpace: return "EmptySpace";
  case ErrorCode::IOError: return "IOError";
  case ErrorCode::MalformedLine: return "MalformedLine";
  case ErrorCode::HostError: return "HostError";
  }
  return "Error";
}

static std::string format_error(ErrorCode code, const std::string &detail,
                                const std::optional<Location> &loc) {
  std::string out;
  if (loc)
    out += loc->str() + ": ";
  out += to_string(code);
  out += ": ";
  out += detail;
  return out;
}

Error::Error(ErrorCode code, std::string detail, std::optional<Location> loc)
    : std::runtime_error(format_error(code, detail, loc)), code_(code),
      detail_(std::move(detail)), loc_(std::move(loc)) {}

//===----------------------------------------------------------------------===//
// Types
//===----------------------------------------------------------------------===//

const char *to_string(TypeKind kind) {
  switch (kind) {
  case TypeKind::Index: return "index";
  case TypeKind::I1: return "i1";
  case TypeKind::I32: return "i32";
  case TypeKind::I64: return "i64";
  case TypeKind::F32: return "f32";
  case TypeKind::F64: return "f64";
  case TypeKind::MemRef: return "memref";
  }
  return "?";
}

Type Type::scalar(TypeKind kind) {
  if (kind == TypeKind::MemRef)
    throw Error(ErrorCode::InvalidType, "memref is not a scalar kind");
  return Type(kind);
}

Type Type::memref(std::vector<std::int64_t> shape, Type element) {
  if (shape.empty())
    throw Error(ErrorCode::InvalidType, "memref must have rank >= 1");
  for (auto extent : shape)
    if (extent < 1)
      throw Error(ErrorCode::InvalidType,
                  "memref extents must be static and >= 1, got " +
                      std::to_string(extent));
  if (!element.is_scalar())
    throw Error(ErrorCode::InvalidType, "memref element must be a scalar");
  Type t(TypeKind::MemRef);
  t.element_ = element.kind();
  t.shape_ = std::move(shape);
  return t;
}

std::int64_t Type::num_elements() const {
  std::int64_t n = 1;
  for (auto e : shape_)
    n *= e;
  return n;
}

int Type::bit_width() const {
  switch (kind_) {
  case TypeKind::I1: return 1;
  case TypeKind::I32:
  case TypeKind::F32: return 32;
  case TypeKind::I64:
  case TypeKind::F64:
  case TypeKind::Index: return 64;
  case TypeKind::MemRef: return 0;
  }
  return 0;
}

std::string Type::str() const {
  if (kind_ != TypeKind::MemRef)
    return to_string(kind_);
  std::string s = "memref<";
  for (auto e : shape_)
    s += std::to_string(e) + "x";
  s += to_string(element_);
  s += ">";
  return s;
}

//===----------------------------------------------------------------------===//
// Attributes
//===----------------------------------------------------------------------===//

bool operator==(const FloatAttr &a, const FloatAttr &b) {
  return a.width == b.width &&
         std::bit_cast<std::uint64_t>(a.value) ==
             std::bit_cast<std::uint64_t>(b.value);
}

Attribute::Attribute()
    : data_(std::make_shared<const Storage>(UnitAttr{})) {}

std::string format_float(double value, TypeKind width) {
  if (std::isnan(value))
    return "nan";
  if (std::isinf(value))
    return value < 0 ? "-inf" : "inf";
  char buf[64];
  std::to_chars_result res;
  if (width == TypeKind::F32)
    res = std::to_chars(buf, buf + sizeof(buf), static_cast<float>(value));
  else
    res = std::to_chars(buf, buf + sizeof(buf), value);
  std::string s(buf, res.ptr);
  if (s.find_first_of(".e") == std::string::npos)
    s += ".0";
  return s;
}

static bool is_bare_key(const std::string &key) {
  if (key.empty() || !(std::isalpha(static_cast<unsigned char>(key[0])) ||
                       key[0] == '_'))
    return false;
  return std::all_of(key.begin(), key.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' ||
           c == '.' || c == '$';
  });
}

static std::string quote(const std::string &s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
    case '"': out += "\\\""; break;
    case '\\': out += "\\\\"; break;
    case '\n': out += "\\n"; break;
    case '\t': out += "\\t"; break;
    default: out += c;
    }
  }
  out += "\"";
  return out;
}

std::string Attribute::str() const {
  return std::visit(
      [](const auto &v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, UnitAttr>) {
          return "unit";
        } else if constexpr (std::is_same_v<T, std::int64_t>) {
          return std::to_string(v);
        } else if constexpr (std::is_same_v<T, FloatAttr>) {
          std::string s = format_float(v.value, v.width);
          if (v.width == TypeKind::F32)
            s += " : f32";
          return s;
        } else if constexpr (std::is_same_v<T, std::string>) {
          return quote(v);
        } else if constexpr (std::is_same_v<T, Type>) {
          return v.str();
        } else if constexpr (std::is_same_v<T, Array>) {
          std::string s = "[";
          for (std::size_t i = 0; i < v.size(); ++i) {
            if (i)
              s += ", ";
            s += v[i].str();
          }
          return s + "]";
        } else if constexpr (std::is_same_v<T, Dict>) {
          std::string s = "{";
          bool first = true;
          for (const auto &[key, val] : v) {
            if (!first)
              s += ", ";
            first = false;
            s += is_bare_key(key) ? key : quote(key);
            if (!val.is_unit())
              s += " = " + val.str();
          }
          return s + "}";
        } else {
          std::string s;
          for (std::size_t i = 0; i < v.path.size(); ++i) {
            if (i)
              s += "::";
            s += "@" + v.path[i];
          }
          return s;
        }
      },
      *data_);
}

//===----------------------------------------------------------------------===//
// Values
//===----------------------------------------------------------------------===//

Value::~Value() {
  // Users that outlive this value see a null operand instead of a dangling
  // pointer.
  for (Operation *user : users_)
    for (std::size_t i = 0; i < user->num_operands(); ++i)
      if (user->operand(i) == this)
        user->operands_[i] = nullptr;
}

Block *Value::parent_block() const {
  return op_ ? op_->parent_block() : block_;
}

void Value::remove_user(Operation *op) {
  auto it = std::find(users_.begin(), users_.end(), op);
  if (it != users_.end())
    users_.erase(it);
}

//===----------------------------------------------------------------------===//
// Registry
//===----------------------------------------------------------------------===//

void DialectRegistry::register_dialect(DialectDef def) {
  if (dialects_.count(def.name))
    throw Error(ErrorCode::DuplicateDialect,
                "dialect '" + def.name + "' is already registered");
  auto &ops = dialects_[def.name];
  for (auto &schema : def.ops) {
    std::string key = schema.name;
    if (key.rfind(def.name + ".", 0) != 0)
      key = def.name + "." + key;
    schema.name = key;
    ops.emplace(key, std::move(schema));
  }
}

bool DialectRegistry::has_dialect(std::string_view name) const {
  return dialects_.find(name) != dialects_.end();
}

const OpSchema *DialectRegistry::lookup(std::string_view op_name) const {
  auto dot = op_name.find('.');
  if (dot == std::string_view::npos)
    return nullptr;
  auto d = dialects_.find(op_name.substr(0, dot));
  if (d == dialects_.end())
    return nullptr;
  auto o = d->second.find(op_name);
  return o == d->second.end() ? nullptr : &o->second;
}

std::vector<std::string> DialectRegistry::dialect_names() const {
  std::vector<std::string> names;
  for (const auto &[name, _] : dialects_)
    names.push_back(name);
  return names;
}

//===----------------------------------------------------------------------===//
// Operation
//===----------------------------------------------------------------------===//

std::unique_ptr<Operation>
Operation::create(Context &ctx, std::string name, std::vector<Value *> operands,
                  const std::vector<Type> &result_types,
                  std::map<std::string, Attribute> attributes,
                  std::size_t num_regions, Location loc) {
  const OpSchema *schema = ctx.registry().lookup(name);
  if (!schema)
    throw Error(ErrorCode::UnknownOperation,
                "operation '" + name + "' is not registered", loc);
  std::unique_ptr<Operation> op(
      new Operation(ctx, std::move(name), schema, std::move(loc)));
  op->operands_ = std::move(operands);
  for (Value *v : op->operands_)
    if (v)
      v->add_user(op.get());
  for (std::size_t i = 0; i < result_types.size(); ++i)
    op->results_.emplace_back(new Value(ctx.next_value_id(), result_types[i],
                                        op.get(), nullptr,
                                        static_cast<unsigned>(i)));
  op->attrs_ = std::move(attributes);
  for (std::size_t i = 0; i < num_regions; ++i)
    op->add_region().add_block();
  return op;
}

Operation::~Operation() {
  regions_.clear();
  for (Value *v : operands_)
    if (v)
      v->remove_user(this);
}

std::string_view Operation::dialect() const {
  std::string_view n = name_;
  return n.substr(0, n.find('.'));
}

void Operation::set_operand(std::size_t i, Value *v) {
  if (operands_[i] == v)
    return;
  if (operands_[i])
    operands_[i]->remove_user(this);
  operands_[i] = v;
  if (v)
    v->add_user(this);
}

void Operation::set_operands(std::vector<Value *> values) {
  for (Value *v : operands_)
    if (v)
      v->remove_user(this);
  operands_ = std::move(values);
  for (Value *v : operands_)
    if (v)
      v->add_user(this);
}

std::vector<Value *> Operation::results() const {
  std::vector<Value *> out;
  out.reserve(results_.size());
  for (const auto &r : results_)
    out.push_back(r.get());
  return out;
}

const Attribute *Operation::attr(std::string_view key) const {
  auto it = attrs_.find(std::string(key));
  return it == attrs_.end() ? nullptr : &it->second;
}

void Operation::set_attr(const std::string &key, Attribute value) {
  attrs_.insert_or_assign(key, std::move(value));
}

void Operation::remove_attr(const std::string &key) { attrs_.erase(key); }

Region &Operation::add_region() {
  regions_.push_back(std::make_unique<Region>(this));
  return *regions_.back();
}

Region *Operation::parent_region() const {
  return parent_ ? parent_->parent_region() : nullptr;
}

Operation *Operation::parent_op() const {
  return parent_ ? parent_->parent_op() : nullptr;
}

std::size_t Operation::index_in_block() const {
  return parent_ ? parent_->index_of(this) : 0;
}

bool Operation::is_ancestor_of(const Operation *other) const {
  for (const Operation *cur = other; cur; cur = cur->parent_op())
    if (cur == this)
      return true;
  return false;
}

std::unique_ptr<Operation> Operation::clone(IRMapping &mapping) const {
  std::unique_ptr<Operation> op(new Operation(*ctx_, name_, schema_, loc_));
  for (Value *v : operands_) {
    Value *nv = v ? mapping.lookup_or_self(v) : nullptr;
    op->operands_.push_back(nv);
    if (nv)
      nv->add_user(op.get());
  }
  for (std::size_t i = 0; i < results_.size(); ++i) {
    op->results_.emplace_back(new Value(ctx_->next_value_id(),
                                        results_[i]->type(), op.get(), nullptr,
                                        static_cast<unsigned>(i)));
    mapping.map(results_[i].get(), op->results_.back().get());
  }
  op->attrs_ = attrs_;
  for (const auto &region : regions_) {
    Region &nr = op->add_region();
    for (const auto &block : region->blocks_) {
      Block &nb = nr.add_block();
      for (const auto &arg : block->args_)
        mapping.map(arg.get(), nb.add_argument(arg->type()));
      for (const auto &child : block->ops_)
        nb.push_back(child->clone(mapping));
    }
  }
  return op;
}

void Operation::swap_contents(Operation &other) {
  std::swap(attrs_, other.attrs_);
  std::swap(regions_, other.regions_);
  for (auto &r : regions_)
    r->parent_ = this;
  for (auto &r : other.regions_)
    r->parent_ = &other;
}

//===----------------------------------------------------------------------===//
// Block / Region
//===----------------------------------------------------------------------===//

Block::~Block() {
  // Users are destroyed before the definitions they reference.
  while (!ops_.empty())
    ops_.pop_back();
  args_.clear();
}

Operation *Block::parent_op() const {
  return parent_ ? parent_->parent_op() : nullptr;
}

std::vector<Value *> Block::arguments() const {
  std::vector<Value *> out;
  for (const auto &a : args_)
    out.push_back(a.get());
  return out;
}

Value *Block::add_argument(Type type) {
  Operation *owner = parent_op();
  if (!owner)
    throw Error(ErrorCode::HostError, "block argument on a detached block");
  args_.emplace_back(new Value(owner->context().next_value_id(),
                               std::move(type), nullptr, this,
                               static_cast<unsigned>(args_.size())));
  return args_.back().get();
}

Operation &Block::insert(std::size_t index, std::unique_ptr<Operation> op) {
  op->parent_ = this;
  auto it = ops_.insert(ops_.begin() + static_cast<std::ptrdiff_t>(
                                           std::min(index, ops_.size())),
                        std::move(op));
  return **it;
}

std::unique_ptr<Operation> Block::take(std::size_t index) {
  auto op = std::move(ops_[index]);
  ops_.erase(ops_.begin() + static_cast<std::ptrdiff_t>(index));
  op->parent_ = nullptr;
  return op;
}

std::size_t Block::index_of(const Operation *op) const {
  for (std::size_t i = 0; i < ops_.size(); ++i)
    if (ops_[i].get() == op)
      return i;
  return ops_.size();
}

Operation *Block::terminator() const {
  if (ops_.empty())
    return nullptr;
  Operation *last = ops_.back().get();
  return last->schema() && last->schema()->is_terminator ? last : nullptr;
}

Block &Region::add_block() {
  blocks_.push_back(std::make_unique<Block>(this));
  return *blocks_.back();
}

//===----------------------------------------------------------------------===//
// Context
//===----------------------------------------------------------------------===//

Context::Context() { detail::register_builtin_dialects(registry_); }

Context::~Context() {
  while (!modules_.empty())
    modules_.pop_back();
}

Operation &Context::create_module(Location loc) {
  return adopt_module(
      Operation::create(*this, "builtin.module", {}, {}, {}, 1, std::move(loc)));
}

Operation &Context::adopt_module(std::unique_ptr<Operation> module) {
  modules_.push_back(std::move(module));
  return *modules_.back();
}

std::unique_ptr<Operation> Context::release_module(const Operation &module) {
  for (auto it = modules_.begin(); it != modules_.end(); ++it) {
    if (it->get() == &module) {
      auto out = std::move(*it);
      modules_.erase(it);
      return out;
    }
  }
  return nullptr;
}

std::unique_ptr<Context> create_context() { return std::make_unique<Context>(); }

void register_dialect(Context &ctx, DialectDef def) {
  ctx.registry().register_dialect(std::move(def));
}

//===----------------------------------------------------------------------===//
// Checked construction and mutation
//===----------------------------------------------------------------------===//

bool is_visible_at(const Value &v, const Block &block, std::size_t index) {
  const Block *def_block = v.parent_block();
  if (!def_block)
    return false;
  const Block *b = &block;
  std::size_t pos = index;
  while (true) {
    if (b == def_block) {
      if (v.is_block_argument())
        return true;
      return def_block->index_of(v.defining_op()) < pos;
    }
    const Operation *parent = b->parent_op();
    if (!parent)
      return false;
    if (parent->schema() && parent->schema()->isolated_from_above)
      return false;
    const Block *pb = parent->parent_block();
    if (!pb)
      return false;
    pos = pb->index_of(parent);
    b = pb;
  }
}

static std::string join(const std::vector<std::string> &parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i)
      out += "; ";
    out += parts[i];
  }
  return out;
}

Operation &create_op(Block &block, std::size_t insert_index, std::string name,
                     std::vector<Value *> operands,
                     std::map<std::string, Attribute> attributes,
                     const std::vector<Type> &result_types,
                     std::size_t region_count, Location loc) {
  Operation *owner = block.parent_op();
  if (!owner)
    throw Error(ErrorCode::HostError, "insertion block is detached", loc);
  const OpSchema *schema = owner->context().registry().lookup(name);
  if (!schema)
    throw Error(ErrorCode::UnknownOperation,
                "operation '" + name + "' is not registered", loc);
  if (!schema->operands.accepts(operands.size()) ||
      !schema->results.accepts(result_types.size()) ||
      !schema->regions.accepts(region_count))
    throw Error(ErrorCode::ArityMismatch,
                "'" + name + "' got " + std::to_string(operands.size()) +
                    " operands, " + std::to_string(result_types.size()) +
                    " results, " + std::to_string(region_count) + " regions",
                loc);
  insert_index = std::min(insert_index, block.size());
  for (std::size_t i = 0; i < operands.size(); ++i) {
    if (!operands[i])
      throw Error(ErrorCode::TypeMismatch,
                  "'" + name + "' operand #" + std::to_string(i) + " is null",
                  loc);
    if (!is_visible_at(*operands[i], block, insert_index))
      throw Error(ErrorCode::DominanceViolation,
                  "'" + name + "' operand #" + std::to_string(i) +
                      " does not dominate the insertion point",
                  loc);
  }
  auto op = Operation::create(owner->context(), std::move(name),
                              std::move(operands), result_types,
                              std::move(attributes), region_count, loc);
  if (schema->type_rules) {
    std::vector<std::string> problems;
    schema->type_rules(*op, problems);
    if (!problems.empty())
      throw Error(ErrorCode::TypeMismatch, join(problems), loc);
  }
  return block.insert(insert_index, std::move(op));
}

std::string Diagnostic::str() const {
  return loc.str() + ": error: " + message +
         (op_name.empty() ? "" : " [" + op_name + "]");
}

DialectVisitor &DialectVisitor::on(std::string dialect, Handler handler) {
  handlers_[std::move(dialect)] = std::move(handler);
  return *this;
}

DialectVisitor &DialectVisitor::otherwise(Handler handler) {
  fallback_ = std::move(handler);
  return *this;
}

void DialectVisitor::operator()(Operation &op) const {
  auto it = handlers_.find(op.dialect());
  if (it != handlers_.end())
    it->second(op);
  else if (fallback_)
    fallback_(op);
}

static void walk_post(Operation &op, const std::function<void(Operation &)> &fn) {
  for (std::size_t r = 0; r < op.num_regions(); ++r) {
    Region &region = op.region(r);
    for (std::size_t b = 0; b < region.num_blocks(); ++b) {
      Block &block = region.block(b);
      for (std::size_t i = 0; i < block.size();) {
        Operation *cur = &block.op(i);
        walk_post(*cur, fn);
        if (i < block.size() && &block.op(i) == cur)
          ++i;
      }
    }
  }
  fn(op);
}

static void walk_pre(Operation &op, const std::function<void(Operation &)> &fn) {
  fn(op);
  for (std::size_t r = 0; r < op.num_regions(); ++r) {
    Region &region = op.region(r);
    for (std::size_t b = 0; b < region.num_blocks(); ++b) {
      Block &block = region.block(b);
      for (std::size_t i = 0; i < block.size(); ++i)
        walk_pre(block.op(i), fn);
    }
  }
}

void walk(Operation &root, const std::function<void(Operation &)> &fn,
          WalkOrder order) {
  if (order == WalkOrder::Pre)
    walk_pre(root, fn);
  else
    walk_post(root, fn);
}

std::size_t count_ops(const Operation &root) {
  std::size_t n = 1;
  for (std::size_t r = 0; r < root.num_regions(); ++r)
    for (std::size_t b = 0; b < root.region(r).num_blocks(); ++b)
      for (const auto &op : root.region(r).block(b).operations())
        n += count_ops(*op);
  return n;
}

std::size_t replace_all_uses_with(Value &from, Value &to) {
  if (&from == &to)
    return 0;
  if (!(from.type() == to.type()))
    throw Error(ErrorCode::TypeMismatch, "cannot replace a value of type " +
                                             from.type().str() +
                                             " with one of type " +
                                             to.type().str());
  std::vector<Operation *> users = from.users();
  std::sort(users.begin(), users.end());
  users.erase(std::unique(users.begin(), users.end()), users.end());
  for (Operation *user : users) {
    Block *b = user->parent_block();
    if (!b || !is_visible_at(to, *b, b->index_of(user)))
      throw Error(ErrorCode::DominanceViolation,
                  "replacement value does not dominate a use in '" +
                      user->name() + "'",
                  user->location());
  }
  std::size_t count = 0;
  for (Operation *user : users)
    for (std::size_t i = 0; i < user->num_operands(); ++i)
      if (user->operand(i) == &from) {
        user->set_operand(i, &to);
        ++count;
      }
  return count;
}

void erase_op(Operation &op) {
  for (std::size_t i = 0; i < op.num_results(); ++i)
    if (op.result(i)->has_uses())
      throw Error(ErrorCode::HasUses,
                  "'" + op.name() + "' result #" + std::to_string(i) +
                      " still has " +
                      std::to_string(op.result(i)->use_count()) + " use(s)",
                  op.location());
  Block *parent = op.parent_block();
  if (!parent)
    throw Error(ErrorCode::HostError, "cannot erase a detached operation");
  parent->take(parent->index_of(&op));
}

const Operation *isolation_scope(const Operation &op) {
  const Operation *cur = op.parent_op();
  const Operation *last = &op;
  while (cur) {
    if (cur->schema() && cur->schema()->isolated_from_above)
      return cur;
    last = cur;
    cur = cur->parent_op();
  }
  return last;
}

Operation *lookup_symbol(const Operation &scope, std::string_view name) {
  if (scope.num_regions() == 0 || scope.region(0).empty())
    return nullptr;
  for (const auto &child : scope.region(0).block().operations()) {
    const Attribute *sym = child->attr("sym_name");
    if (sym && sym->is_string() && sym->as_string() == name)
      return child.get();
  }
  return nullptr;
}

} // namespace staircase
