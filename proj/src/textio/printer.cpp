#include "staircase/textio.hpp"

#include "staircase/dialects.hpp"

#include <set>
#include <sstream>
#include <unordered_map>

namespace staircase {

namespace {

// Attributes folded into an op's custom syntax.
const std::set<std::string, std::less<>> &elided_attrs(const Operation &op) {
  static const std::set<std::string, std::less<>> none;
  static const std::set<std::string, std::less<>> constant{"value"};
  static const std::set<std::string, std::less<>> cmp{"predicate"};
  static const std::set<std::string, std::less<>> affine{"lower_bound",
                                                         "upper_bound", "step"};
  static const std::set<std::string, std::less<>> func{"sym_name",
                                                       "result_types"};
  static const std::set<std::string, std::less<>> gpu_func{"sym_name",
                                                           "kernel"};
  static const std::set<std::string, std::less<>> sym{"sym_name"};
  static const std::set<std::string, std::less<>> callee{"callee"};
  static const std::set<std::string, std::less<>> kernel{"kernel"};
  static const std::set<std::string, std::less<>> dim{"dimension"};
  const std::string &n = op.name();
  if (n == "arith.constant")
    return constant;
  if (n == "arith.cmpf" || n == "arith.cmpi")
    return cmp;
  if (n == "affine.for")
    return affine;
  if (n == "func.func")
    return func;
  if (n == "gpu.func")
    return gpu_func;
  if (n == "gpu.module")
    return sym;
  if (n == "func.call")
    return callee;
  if (n == "gpu.launch_func")
    return kernel;
  if (n == "gpu.block_id" || n == "gpu.thread_id")
    return dim;
  return none;
}

class Printer {
public:
  explicit Printer(std::ostream &os) : os_(os) {}

  void print_top(const Operation &op) {
    Scope scope(*this);
    print_op(op, 0);
  }

private:
  struct Counters {
    int results = 0;
    int args = 0;
  };

  // Isolated ops restart SSA numbering.
  struct Scope {
    explicit Scope(Printer &p) : p(p), saved(p.counters_) {
      p.counters_ = Counters{};
    }
    ~Scope() { p.counters_ = saved; }
    Printer &p;
    Counters saved;
  };

  void indent(int depth) {
    for (int i = 0; i < depth; ++i)
      os_ << "  ";
  }

  const std::string &name(const Value *v) {
    auto it = names_.find(v);
    if (it != names_.end())
      return it->second;
    static const std::string invalid = "%<null>";
    return v ? (names_[v] = "%<undef" + std::to_string(v->id()) + ">")
             : invalid;
  }

  void define_results(const Operation &op) {
    if (op.num_results() == 0)
      return;
    for (std::size_t i = 0; i < op.num_results(); ++i) {
      if (i)
        os_ << ", ";
      std::string n = "%" + std::to_string(counters_.results++);
      names_[op.result(i)] = n;
      os_ << n;
    }
    os_ << " = ";
  }

  std::string define_arg(const Value *v) {
    std::string n = "%arg" + std::to_string(counters_.args++);
    names_[v] = n;
    return n;
  }

  std::string operand_list(std::span<Value *const> vals) {
    std::string s;
    for (std::size_t i = 0; i < vals.size(); ++i) {
      if (i)
        s += ", ";
      s += name(vals[i]);
    }
    return s;
  }

  static std::string type_list(const std::vector<Type> &types) {
    std::string s;
    for (std::size_t i = 0; i < types.size(); ++i) {
      if (i)
        s += ", ";
      s += types[i].str();
    }
    return s;
  }

  /// Remaining attributes as `{k = v, ...}`, or empty.
  std::string extra_attrs(const Operation &op) {
    const auto &skip = elided_attrs(op);
    Attribute::Dict rest;
    for (const auto &[k, v] : op.attributes())
      if (!skip.count(k))
        rest.emplace(k, v);
    if (rest.empty())
      return "";
    return Attribute::dict(std::move(rest)).str();
  }

  void attr_suffix(const Operation &op) {
    std::string a = extra_attrs(op);
    if (!a.empty())
      os_ << " " << a;
  }

  void region_attr_suffix(const Operation &op) {
    std::string a = extra_attrs(op);
    if (!a.empty())
      os_ << " attributes " << a;
  }

  void print_block_body(const Block &b, int depth) {
    for (const auto &child : b.operations())
      print_op(*child, depth);
  }

  void print_region(const Region &r, int depth) {
    os_ << "{\n";
    print_block_body(r.block(), depth + 1);
    indent(depth);
    os_ << "}";
  }

  void print_op(const Operation &op, int depth) {
    indent(depth);
    const std::string &n = op.name();
    bool isolated = op.schema() && op.schema()->isolated_from_above;
    std::optional<Scope> scope;
    if (isolated && depth > 0)
      scope.emplace(*this);

    if (n == "builtin.module") {
      os_ << "module";
      region_attr_suffix(op);
      os_ << " ";
      print_region(op.region(0), depth);
    } else if (n == "arith.constant") {
      define_results(op);
      const Attribute *v = op.attr("value");
      os_ << n << " ";
      if (v && v->is_float())
        os_ << format_float(v->as_float().value, v->as_float().width);
      else if (v && v->is_int())
        os_ << v->as_int();
      else
        os_ << "<invalid>";
      attr_suffix(op);
      os_ << " : " << op.result(0)->type().str();
    } else if (n == "arith.cmpf" || n == "arith.cmpi") {
      define_results(op);
      const Attribute *p = op.attr("predicate");
      os_ << n << " " << (p && p->is_string() ? p->as_string() : "?") << ", "
          << operand_list(op.operands());
      attr_suffix(op);
      os_ << " : " << op.operand(0)->type().str();
    } else if (n == "arith.index_cast") {
      define_results(op);
      os_ << n << " " << name(op.operand(0));
      attr_suffix(op);
      os_ << " : " << op.operand(0)->type().str() << " to "
          << op.result(0)->type().str();
    } else if (op.dialect() == "arith" && op.num_operands() == 2 &&
               op.num_results() == 1) {
      define_results(op);
      os_ << n << " " << operand_list(op.operands());
      attr_suffix(op);
      os_ << " : " << op.result(0)->type().str();
    } else if (n == "scf.for") {
      const Block &body = op.region(0).block();
      std::string iv = body.num_arguments() ? define_arg(body.argument(0))
                                            : std::string("%<noarg>");
      os_ << n << " " << iv << " = " << name(op.operand(0)) << " to "
          << name(op.operand(1)) << " step " << name(op.operand(2));
      region_attr_suffix(op);
      os_ << " ";
      print_region(op.region(0), depth);
    } else if (n == "affine.for") {
      const Block &body = op.region(0).block();
      std::string iv = body.num_arguments() ? define_arg(body.argument(0))
                                            : std::string("%<noarg>");
      os_ << n << " " << iv << " = " << op.attr("lower_bound")->as_int()
          << " to " << op.attr("upper_bound")->as_int();
      if (std::int64_t step = op.attr("step")->as_int(); step != 1)
        os_ << " step " << step;
      region_attr_suffix(op);
      os_ << " ";
      print_region(op.region(0), depth);
    } else if (n == "scf.if") {
      os_ << n << " " << name(op.operand(0));
      region_attr_suffix(op);
      os_ << " ";
      print_region(op.region(0), depth);
      if (op.num_regions() > 1) {
        os_ << " else ";
        print_region(op.region(1), depth);
      }
    } else if (n == "scf.parallel") {
      std::size_t k = op.num_operands() / 3;
      const Block &body = op.region(0).block();
      std::string ivs;
      for (std::size_t i = 0; i < body.num_arguments(); ++i) {
        if (i)
          ivs += ", ";
        ivs += define_arg(body.argument(i));
      }
      auto ops = op.operands();
      os_ << n << " (" << ivs << ") = (" << operand_list(ops.subspan(0, k))
          << ") to (" << operand_list(ops.subspan(k, k)) << ") step ("
          << operand_list(ops.subspan(2 * k, k)) << ")";
      region_attr_suffix(op);
      os_ << " ";
      print_region(op.region(0), depth);
    } else if (n == "memref.alloc" || n == "memref.alloca") {
      define_results(op);
      os_ << n << "()";
      attr_suffix(op);
      os_ << " : " << op.result(0)->type().str();
    } else if (n == "memref.dealloc") {
      os_ << n << " " << name(op.operand(0));
      attr_suffix(op);
      os_ << " : " << op.operand(0)->type().str();
    } else if (n == "memref.load") {
      define_results(op);
      os_ << n << " " << name(op.operand(0)) << "["
          << operand_list(op.operands().subspan(1)) << "]";
      attr_suffix(op);
      os_ << " : " << op.operand(0)->type().str();
    } else if (n == "memref.store") {
      os_ << n << " " << name(op.operand(0)) << ", " << name(op.operand(1))
          << "[" << operand_list(op.operands().subspan(2)) << "]";
      attr_suffix(op);
      os_ << " : " << op.operand(1)->type().str();
    } else if (n == "func.func" || n == "gpu.func") {
      os_ << n << " @" << op.attr("sym_name")->as_string() << "(";
      const Block &entry = op.region(0).block();
      for (std::size_t i = 0; i < entry.num_arguments(); ++i) {
        if (i)
          os_ << ", ";
        os_ << define_arg(entry.argument(i)) << ": "
            << entry.argument(i)->type().str();
      }
      os_ << ")";
      if (n == "func.func") {
        auto results = func_result_types(op);
        if (!results.empty())
          os_ << " -> (" << type_list(results) << ")";
      } else if (op.has_attr("kernel")) {
        os_ << " kernel";
      }
      region_attr_suffix(op);
      os_ << " ";
      print_region(op.region(0), depth);
    } else if (n == "func.return") {
      os_ << "return";
      if (op.num_operands()) {
        std::vector<Type> types;
        for (Value *v : op.operands())
          types.push_back(v->type());
        os_ << " " << operand_list(op.operands()) << " : " << type_list(types);
      }
      attr_suffix(op);
    } else if (n == "func.call") {
      define_results(op);
      const Attribute *c = op.attr("callee");
      std::vector<Type> in, out;
      for (Value *v : op.operands())
        in.push_back(v->type());
      for (Value *v : op.results())
        out.push_back(v->type());
      os_ << n << " " << (c ? c->str() : "@?") << "("
          << operand_list(op.operands()) << ")";
      attr_suffix(op);
      os_ << " : (" << type_list(in) << ") -> (" << type_list(out) << ")";
    } else if (n == "gpu.module") {
      os_ << n << " @" << op.attr("sym_name")->as_string();
      region_attr_suffix(op);
      os_ << " ";
      print_region(op.region(0), depth);
    } else if (n == "gpu.block_id" || n == "gpu.thread_id") {
      define_results(op);
      const Attribute *d = op.attr("dimension");
      os_ << n << " " << (d && d->is_string() ? d->as_string() : "?");
      attr_suffix(op);
    } else if (n == "gpu.launch_func") {
      const Attribute *k = op.attr("kernel");
      auto ops = op.operands();
      os_ << n << " " << (k ? k->str() : "@?") << " blocks in ("
          << operand_list(ops.subspan(0, 3)) << ") threads in ("
          << operand_list(ops.subspan(3, 3)) << ") args("
          << operand_list(ops.subspan(6)) << ")";
      attr_suffix(op);
    } else if (op.schema() && op.schema()->is_terminator &&
               op.num_operands() == 0 && op.num_results() == 0 &&
               op.num_regions() == 0) {
      os_ << n;
      attr_suffix(op);
    } else {
      print_generic(op, depth);
    }
    os_ << "\n";
  }

  // `%r = d.op(%a, %b) {attrs} : (T, T) -> (R)` followed by regions.
  void print_generic(const Operation &op, int depth) {
    define_results(op);
    std::vector<Type> in, out;
    for (Value *v : op.operands())
      in.push_back(v ? v->type() : Type());
    for (Value *v : op.results())
      out.push_back(v->type());
    os_ << op.name() << "(" << operand_list(op.operands()) << ")";
    attr_suffix(op);
    os_ << " : (" << type_list(in) << ") -> (" << type_list(out) << ")";
    for (std::size_t r = 0; r < op.num_regions(); ++r) {
      const Block &b = op.region(r).block();
      os_ << " {";
      if (b.num_arguments()) {
        os_ << " ^bb(";
        for (std::size_t i = 0; i < b.num_arguments(); ++i) {
          if (i)
            os_ << ", ";
          os_ << define_arg(b.argument(i)) << ": "
              << b.argument(i)->type().str();
        }
        os_ << "):";
      }
      os_ << "\n";
      print_block_body(b, depth + 1);
      indent(depth);
      os_ << "}";
    }
  }

  std::ostream &os_;
  Counters counters_;
  std::unordered_map<const Value *, std::string> names_;
};

} // namespace

std::string print_module(const Operation &op) {
  std::ostringstream os;
  Printer(os).print_top(op);
  return os.str();
}

bool structurally_equal(const Operation &a, const Operation &b) {
  std::unordered_map<const Value *, const Value *> corr;
  std::function<bool(const Operation &, const Operation &)> eq =
      [&](const Operation &x, const Operation &y) -> bool {
    if (x.name() != y.name() || x.attributes() != y.attributes() ||
        x.num_operands() != y.num_operands() ||
        x.num_results() != y.num_results() ||
        x.num_regions() != y.num_regions())
      return false;
    for (std::size_t i = 0; i < x.num_operands(); ++i) {
      auto it = corr.find(x.operand(i));
      if (it == corr.end() || it->second != y.operand(i))
        return false;
    }
    for (std::size_t i = 0; i < x.num_results(); ++i) {
      if (!(x.result(i)->type() == y.result(i)->type()))
        return false;
      corr[x.result(i)] = y.result(i);
    }
    for (std::size_t r = 0; r < x.num_regions(); ++r) {
      const Region &rx = x.region(r), &ry = y.region(r);
      if (rx.num_blocks() != ry.num_blocks())
        return false;
      for (std::size_t bi = 0; bi < rx.num_blocks(); ++bi) {
        const Block &bx = rx.block(bi), &by = ry.block(bi);
        if (bx.num_arguments() != by.num_arguments() || bx.size() != by.size())
          return false;
        for (std::size_t i = 0; i < bx.num_arguments(); ++i) {
          if (!(bx.argument(i)->type() == by.argument(i)->type()))
            return false;
          corr[bx.argument(i)] = by.argument(i);
        }
        for (std::size_t i = 0; i < bx.size(); ++i)
          if (!eq(bx.op(i), by.op(i)))
            return false;
      }
    }
    return true;
  };
  return eq(a, b);
}

} // namespace staircase
