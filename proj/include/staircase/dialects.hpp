#pragma once

// Op schemas for the built-in dialects (arith, scf, affine, memref, func,
// gpu, builtin) and a typed builder over them.

#include "staircase/ir.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace staircase {

enum class CmpKind { Lt, Le, Gt, Ge, Eq, Ne };

/// "olt"/"ole"/... for floats, "slt"/"sle"/... for integers and index.
std::string cmp_predicate(CmpKind kind, bool is_float);

enum class ArithKind { Add, Sub, Mul, Div };

enum class MemAccess { Load, Store };

/// Constant integer payload of `v` if it is produced by `arith.constant`.
std::optional<std::int64_t> constant_int(const Value *v);
std::optional<double> constant_float(const Value *v);

/// Trip count of a loop with constant bounds, or nullopt.
std::optional<std::int64_t> trip_count(std::int64_t lb, std::int64_t ub,
                                       std::int64_t step);

/// Loop bounds of an `scf.for` whose operands are all constants.
struct ConstBounds {
  std::int64_t lb, ub, step;
  std::int64_t trips() const { return *trip_count(lb, ub, step); }
};
std::optional<ConstBounds> constant_bounds(const Operation &loop);

/// Insertion-point-carrying builder. Body-creating builders auto-insert the
/// region terminator; `set_insertion_point_to_end` keeps new ops before it.
class OpBuilder {
public:
  explicit OpBuilder(Context &ctx) : ctx_(&ctx) {}
  OpBuilder(Context &ctx, Block &block, std::size_t index)
      : ctx_(&ctx), block_(&block), index_(index) {}

  Context &context() const { return *ctx_; }
  Block *block() const { return block_; }
  std::size_t index() const { return index_; }

  void set_insertion_point(Block &block, std::size_t index) {
    block_ = &block;
    index_ = index;
  }
  /// End of `block`, before its terminator if it has one.
  void set_insertion_point_to_end(Block &block);
  void set_insertion_point_before(Operation &op);
  void set_insertion_point_after(Operation &op);

  const Location &location() const { return loc_; }
  void set_location(Location loc) { loc_ = std::move(loc); }

  /// Generic checked creation at the insertion point; advances past the op.
  Operation &create(std::string name, std::vector<Value *> operands,
                    const std::vector<Type> &result_types,
                    std::map<std::string, Attribute> attributes = {},
                    std::size_t region_count = 0);

  // arith
  Value *constant_float(double value, Type type = Type::f64());
  Value *constant_int(std::int64_t value, Type type = Type::i64());
  Value *constant_index(std::int64_t value) {
    return constant_int(value, Type::index());
  }
  Value *arith(ArithKind kind, Value *lhs, Value *rhs);
  Value *cmp(CmpKind kind, Value *lhs, Value *rhs);
  Value *index_cast(Value *v, Type to);

  // scf / affine
  Operation &build_scf_for(Value *lb, Value *ub, Value *step);
  Operation &build_affine_for(std::int64_t lb, std::int64_t ub,
                              std::int64_t step);
  Operation &build_scf_if(Value *cond, bool with_else);
  /// Appends an auto-terminated else region to a one-region `scf.if`.
  static Block &add_else_region(Operation &if_op);
  Operation &build_scf_parallel(const std::vector<Value *> &lbs,
                                const std::vector<Value *> &ubs,
                                const std::vector<Value *> &steps);

  // memref
  Value *alloc(Type memref_type, bool on_stack = false);
  void dealloc(Value *memref);
  Operation &build_memref_access(MemAccess kind, Value *buffer,
                                 const std::vector<Value *> &indices,
                                 Value *stored = nullptr);
  Value *load(Value *buffer, const std::vector<Value *> &indices) {
    return build_memref_access(MemAccess::Load, buffer, indices).result(0);
  }
  void store(Value *value, Value *buffer, const std::vector<Value *> &indices) {
    build_memref_access(MemAccess::Store, buffer, indices, value);
  }

  // func
  Operation &func_return(const std::vector<Value *> &values = {});
  std::vector<Value *> call(const std::string &callee,
                            const std::vector<Value *> &args);

  // gpu
  Value *gpu_id(bool thread, int dim);
  Operation &build_gpu_launch(const std::string &module_sym,
                              const std::string &kernel_sym,
                              const std::array<Value *, 3> &grid,
                              const std::array<Value *, 3> &blocks,
                              const std::vector<Value *> &args);

private:
  Context *ctx_;
  Block *block_ = nullptr;
  std::size_t index_ = 0;
  Location loc_ = Location::unknown();
};

/// Appends a `func.func` to `module`. Functions without results get an
/// empty `func.return`. Throws DuplicateSymbol.
Operation &build_func(Operation &module, const std::string &name,
                      const std::vector<Type> &param_types,
                      const std::vector<Type> &result_types,
                      Location loc = Location::unknown());

Operation &build_gpu_module(Operation &module, const std::string &name,
                            Location loc = Location::unknown());

/// Appends a kernel `gpu.func` (with `gpu.return`) to `gpu_module`.
Operation &build_gpu_func(Operation &gpu_module, const std::string &name,
                          const std::vector<Type> &param_types,
                          const Attribute::Dict &extra_attrs = {},
                          Location loc = Location::unknown());

/// Parameter and result types of a func.func / gpu.func.
std::vector<Type> func_param_types(const Operation &func);
std::vector<Type> func_result_types(const Operation &func);
void set_func_result_types(Operation &func, const std::vector<Type> &types);

/// Nearest enclosing builtin.module (or `op` itself).
const Operation *enclosing_module(const Operation &op);

/// Resolves `@module::@kernel` to a gpu.func, or null.
Operation *resolve_kernel(const Operation &module, const SymbolRef &ref);

/// Whether erasing an unused instance of this op is semantically safe.
bool is_side_effect_free(const Operation &op);

} // namespace staircase
