#include "staircase/ir.hpp"

#include <unordered_map>

namespace staircase {

namespace {

/// Structural verifier. Op positions are cached per block so dominance
/// queries stay linear in module size.
class Verifier {
public:
  explicit Verifier(std::vector<Diagnostic> &diags) : diags_(diags) {}

  void verify_op(const Operation &op) {
    const OpSchema *schema = op.schema();
    if (!schema) {
      report(op, "operation '" + op.name() + "' is not registered");
      return;
    }
    if (!schema->operands.accepts(op.num_operands()))
      report(op, "expected " + arity_str(schema->operands) + " operands, got " +
                     std::to_string(op.num_operands()));
    if (!schema->results.accepts(op.num_results()))
      report(op, "expected " + arity_str(schema->results) + " results, got " +
                     std::to_string(op.num_results()));
    if (!schema->regions.accepts(op.num_regions()))
      report(op, "expected " + arity_str(schema->regions) + " regions, got " +
                     std::to_string(op.num_regions()));
    for (const auto &key : schema->required_attrs)
      if (!op.has_attr(key))
        report(op, "missing required attribute '" + key + "'");

    std::string late;
    for (std::size_t i = 0; i < op.num_operands(); ++i) {
      const Value *v = op.operand(i);
      if (!v) {
        report(op, "operand #" + std::to_string(i) + " is null");
        continue;
      }
      if (!visible(*v, op))
        late += (late.empty() ? "#" : ", #") + std::to_string(i);
    }
    if (!late.empty())
      report(op, "operand " + late + " does not dominate its use");

    if (schema->is_terminator) {
      const Block *b = op.parent_block();
      if (b && &b->back() != &op)
        report(op, "terminator '" + op.name() + "' must end its block");
    }

    for (std::size_t r = 0; r < op.num_regions(); ++r) {
      const Region &region = op.region(r);
      if (region.num_blocks() != 1) {
        report(op, "region #" + std::to_string(r) +
                       " must have exactly one block");
        continue;
      }
      const Block &block = region.block();
      if (!schema->terminator.empty()) {
        if (block.empty() || block.back().name() != schema->terminator)
          report(op, "region #" + std::to_string(r) +
                         " is missing terminator '" + schema->terminator + "'");
      }
      for (const auto &child : block.operations())
        verify_op(*child);
    }

    if (schema->type_rules || schema->verify) {
      std::vector<std::string> problems;
      if (schema->type_rules)
        schema->type_rules(op, problems);
      if (schema->verify)
        schema->verify(op, problems);
      for (auto &p : problems)
        report(op, std::move(p));
    }
  }

private:
  static std::string arity_str(const OpSchema::Arity &a) {
    if (a.max < 0)
      return "at least " + std::to_string(a.min);
    if (a.min == a.max)
      return std::to_string(a.min);
    return std::to_string(a.min) + ".." + std::to_string(a.max);
  }

  std::size_t position(const Operation &op) {
    auto it = positions_.find(&op);
    if (it != positions_.end())
      return it->second;
    const Block *b = op.parent_block();
    for (std::size_t i = 0; i < b->size(); ++i)
      positions_[&b->op(i)] = i;
    return positions_[&op];
  }

  bool visible(const Value &v, const Operation &user) {
    const Block *def_block = v.parent_block();
    const Operation *cur = &user;
    while (cur) {
      const Block *b = cur->parent_block();
      if (!b)
        return false;
      if (b == def_block)
        return v.is_block_argument() ||
               position(*v.defining_op()) < position(*cur);
      const Operation *parent = b->parent_op();
      if (!parent || (parent->schema() && parent->schema()->isolated_from_above))
        return false;
      cur = parent;
    }
    return false;
  }

  void report(const Operation &op, std::string message) {
    diags_.push_back(Diagnostic{std::move(message), op.name(), op.location()});
  }

  std::vector<Diagnostic> &diags_;
  std::unordered_map<const Operation *, std::size_t> positions_;
};

} // namespace

std::vector<Diagnostic> verify(const Operation &module) {
  std::vector<Diagnostic> diags;
  if (module.name() != "builtin.module") {
    diags.push_back(Diagnostic{"verify expects a builtin.module, got '" +
                                   module.name() + "'",
                               module.name(), module.location()});
    return diags;
  }
  Verifier(diags).verify_op(module);
  return diags;
}

} // namespace staircase
