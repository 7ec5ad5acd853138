#include "staircase/interp.hpp"

#include "staircase/dialects.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <deque>
#include <exception>
#include <mutex>
#include <thread>
#include <unordered_map>

namespace staircase {

namespace {

enum class Code : std::uint8_t {
  Const, AddF, SubF, MulF, DivF, AddI, SubI, MulI, CmpF, CmpI, IndexCast,
  For, AffineFor, If, Parallel, Nop, Alloc, Load, Store, Call, Return,
  BlockId, ThreadId, Launch, Unknown,
};

enum Dialect : std::uint8_t { DArith, DScf, DAffine, DMemref, DFunc, DGpu, DOther, DCount };
const char *const dialect_names[] = {"arith", "scf", "affine", "memref",
                                     "func", "gpu", "other"};

struct Slot {
  std::int64_t i = 0;
  double f = 0.0;
  Buffer *m = nullptr;
};

struct Body;
struct CompiledFunc;

struct Node {
  Code code = Code::Unknown;
  TypeKind kind = TypeKind::F64;
  std::uint8_t pred = 0;
  Dialect dialect = DOther;
  bool counted = true;
  bool arith = false;
  int out = -1;
  std::vector<int> in;
  std::vector<Body> regions;
  std::int64_t imm = 0, imm2 = 0, imm3 = 0;
  double fimm = 0.0;
  std::vector<std::int64_t> shape;
  const Operation *op = nullptr;
  const CompiledFunc *callee = nullptr;
};

struct Body {
  std::vector<Node> nodes;
  std::vector<int> args;
};

struct CompiledFunc {
  const Operation *op = nullptr;
  int num_slots = 0;
  Body body;
  std::vector<Type> params;
  std::vector<Type> results;
};

Dialect dialect_of(std::string_view name) {
  for (int d = 0; d < DOther; ++d)
    if (name.substr(0, name.find('.')) == dialect_names[d])
      return static_cast<Dialect>(d);
  return DOther;
}

std::uint8_t parse_pred(const std::string &p) {
  static const char *fl[] = {"olt", "ole", "ogt", "oge", "oeq", "one"};
  static const char *in[] = {"slt", "sle", "sgt", "sge", "eq", "ne"};
  for (std::uint8_t k = 0; k < 6; ++k)
    if (p == fl[k] || p == in[k])
      return k;
  return 0;
}

class Compiled {
public:
  explicit Compiled(const Operation &module) : module_(module) {
    Block &body = module.region(0).block();
    for (const auto &op : body.operations()) {
      if (op->is("func.func"))
        declare(*op);
      else if (op->is("gpu.module"))
        for (const auto &k : op->region(0).block().operations())
          if (k->is("gpu.func"))
            declare(*k);
    }
    for (auto &[op, fn] : funcs_)
      compile(*fn);
  }

  const CompiledFunc *func(const std::string &name) const {
    const Operation *op = lookup_symbol(module_, name);
    if (!op || !op->is("func.func"))
      return nullptr;
    return funcs_.at(op).get();
  }

private:
  void declare(const Operation &op) {
    auto fn = std::make_unique<CompiledFunc>();
    fn->op = &op;
    fn->params = func_param_types(op);
    fn->results = func_result_types(op);
    funcs_[&op] = std::move(fn);
  }

  void compile(CompiledFunc &fn) {
    std::unordered_map<const Value *, int> slots;
    int next = 0;
    fn.body = compile_block(fn.op->region(0).block(), slots, next);
    fn.num_slots = next;
  }

  Body compile_block(const Block &block,
                     std::unordered_map<const Value *, int> &slots, int &next) {
    Body body;
    for (std::size_t a = 0; a < block.num_arguments(); ++a) {
      slots[block.argument(a)] = next;
      body.args.push_back(next++);
    }
    for (const auto &op : block.operations())
      body.nodes.push_back(compile_op(*op, slots, next));
    return body;
  }

  Node compile_op(const Operation &op,
                  std::unordered_map<const Value *, int> &slots, int &next) {
    Node n;
    n.op = &op;
    n.dialect = dialect_of(op.name());
    for (Value *v : op.operands()) {
      auto it = slots.find(v);
      n.in.push_back(it == slots.end() ? -1 : it->second);
    }
    for (std::size_t r = 0; r < op.num_regions(); ++r)
      n.regions.push_back(compile_block(op.region(r).block(), slots, next));
    if (op.num_results() > 0) {
      n.out = next;
      for (Value *v : op.results())
        slots[v] = next++;
      n.kind = op.result(0)->type().kind();
    }

    const std::string &name = op.name();
    static const std::map<std::string, Code, std::less<>> simple = {
        {"arith.addf", Code::AddF},     {"arith.subf", Code::SubF},
        {"arith.mulf", Code::MulF},     {"arith.divf", Code::DivF},
        {"arith.addi", Code::AddI},     {"arith.subi", Code::SubI},
        {"arith.muli", Code::MulI},     {"arith.cmpf", Code::CmpF},
        {"arith.cmpi", Code::CmpI},     {"arith.index_cast", Code::IndexCast},
        {"scf.for", Code::For},         {"affine.for", Code::AffineFor},
        {"scf.if", Code::If},           {"scf.parallel", Code::Parallel},
        {"scf.yield", Code::Nop},       {"affine.yield", Code::Nop},
        {"gpu.return", Code::Nop},      {"memref.dealloc", Code::Nop},
        {"memref.alloc", Code::Alloc},  {"memref.alloca", Code::Alloc},
        {"memref.load", Code::Load},    {"memref.store", Code::Store},
        {"func.call", Code::Call},      {"func.return", Code::Return},
        {"gpu.block_id", Code::BlockId}, {"gpu.thread_id", Code::ThreadId},
        {"gpu.launch_func", Code::Launch}, {"arith.constant", Code::Const},
    };
    auto it = simple.find(name);
    n.code = it == simple.end() ? Code::Unknown : it->second;
    n.arith = n.dialect == DArith && n.code != Code::Const;
    n.counted = !(op.schema() && op.schema()->is_terminator) ||
                n.code == Code::Return;

    switch (n.code) {
    case Code::Const: {
      const Attribute &v = *op.attr("value");
      if (v.is_float())
        n.fimm = v.as_float().value;
      else
        n.imm = v.as_int();
      break;
    }
    case Code::CmpF:
    case Code::CmpI:
      n.pred = parse_pred(op.attr("predicate")->as_string());
      n.kind = op.operand(0)->type().kind();
      break;
    case Code::AffineFor:
      n.imm = op.attr("lower_bound")->as_int();
      n.imm2 = op.attr("upper_bound")->as_int();
      n.imm3 = op.attr("step")->as_int();
      break;
    case Code::Parallel:
      n.imm = static_cast<std::int64_t>(op.region(0).block().num_arguments());
      break;
    case Code::Alloc:
      n.shape = op.result(0)->type().shape();
      n.kind = op.result(0)->type().element().kind();
      break;
    case Code::Load:
      n.kind = op.operand(0)->type().element().kind();
      break;
    case Code::Store:
      n.kind = op.operand(1)->type().element().kind();
      break;
    case Code::BlockId:
    case Code::ThreadId: {
      const std::string &d = op.attr("dimension")->as_string();
      n.imm = d == "x" ? 0 : d == "y" ? 1 : 2;
      break;
    }
    case Code::Call: {
      const Operation *callee = lookup_symbol(
          module_, op.attr("callee")->as_symbol().path.back());
      if (callee && funcs_.count(callee))
        n.callee = funcs_.at(callee).get();
      break;
    }
    case Code::Launch: {
      const Operation *k = resolve_kernel(module_, op.attr("kernel")->as_symbol());
      if (k && funcs_.count(k))
        n.callee = funcs_.at(k).get();
      break;
    }
    default:
      break;
    }
    return n;
  }

  const Operation &module_;
  std::map<const Operation *, std::unique_ptr<CompiledFunc>> funcs_;
};

struct AddrHash {
  std::size_t operator()(const std::pair<const Buffer *, std::int64_t> &k) const {
    return std::hash<const void *>()(k.first) * 31u ^
           std::hash<std::int64_t>()(k.second);
  }
};

struct RaceState {
  struct Entry {
    std::int64_t writer = -1;
    std::int64_t reader = -1;
    bool many_readers = false;
    bool reported = false;
  };
  std::unordered_map<std::pair<const Buffer *, std::int64_t>, Entry, AddrHash>
      seen;
  std::vector<RaceConflict> conflicts;
  std::map<const Buffer *, int> ids;
  std::size_t limit = 64;

  void report(Entry &e, std::int64_t a, std::int64_t b, const Buffer *buf,
              std::int64_t off, bool ww, const Operation *op) {
    if (e.reported || conflicts.size() >= limit)
      return;
    e.reported = true;
    auto id = ids.find(buf);
    conflicts.push_back(RaceConflict{std::min(a, b), std::max(a, b),
                                     id == ids.end() ? -1 : id->second, off, ww,
                                     op->location()});
  }
  void read(const Buffer *buf, std::int64_t off, std::int64_t it,
            const Operation *op) {
    Entry &e = seen[{buf, off}];
    if (e.writer >= 0 && e.writer != it)
      report(e, e.writer, it, buf, off, false, op);
    if (e.reader < 0)
      e.reader = it;
    else if (e.reader != it)
      e.many_readers = true;
  }
  void write(const Buffer *buf, std::int64_t off, std::int64_t it,
             const Operation *op) {
    Entry &e = seen[{buf, off}];
    if (e.writer >= 0 && e.writer != it)
      report(e, e.writer, it, buf, off, true, op);
    else if (e.reader >= 0 && (e.reader != it || e.many_readers))
      report(e, e.reader != it ? e.reader : it, it, buf, off, false, op);
    e.writer = it;
  }
};

struct Shared {
  const Compiled *prog = nullptr;
  ExecMode mode;
  std::mutex alloc_mu;
  std::deque<std::unique_ptr<Buffer>> arena;
  RaceState *races = nullptr;
};

struct Exec {
  Shared *sh = nullptr;
  std::uint64_t ops = 0, arith = 0, loads = 0, stores = 0, loops = 0;
  std::array<std::uint64_t, DCount> per{};
  std::array<std::int64_t, 3> bid{}, tid{};
  int par_depth = 0;
  int nslots = 0;
  std::int64_t iter = -1;
  std::vector<Slot> ret;

  Exec fork() const {
    Exec e;
    e.sh = sh;
    e.bid = bid;
    e.tid = tid;
    e.par_depth = par_depth;
    e.nslots = nslots;
    e.iter = iter;
    return e;
  }
  void merge(const Exec &o) {
    ops += o.ops, arith += o.arith, loads += o.loads, stores += o.stores,
        loops += o.loops;
    for (int d = 0; d < DCount; ++d)
      per[d] += o.per[d];
  }
};

[[noreturn]] void fail(ErrorCode code, const std::string &msg,
                       const Operation *op) {
  throw Error(code, msg, op ? std::optional<Location>(op->location())
                            : std::nullopt);
}

std::int64_t wrap(std::uint64_t v, TypeKind k) {
  switch (k) {
  case TypeKind::I32:
    return static_cast<std::int32_t>(static_cast<std::uint32_t>(v));
  case TypeKind::I1:
    return static_cast<std::int64_t>(v & 1);
  default:
    return static_cast<std::int64_t>(v);
  }
}

double round_to(double v, TypeKind k) {
  return k == TypeKind::F32 ? static_cast<double>(static_cast<float>(v)) : v;
}

template <typename T> bool compare(std::uint8_t pred, T a, T b) {
  switch (pred) {
  case 0: return a < b;
  case 1: return a <= b;
  case 2: return a > b;
  case 3: return a >= b;
  case 4: return a == b;
  default: return a != b;
  }
}

std::int64_t flat_offset(const Node &n, const Slot *fr, const Buffer &buf,
                         std::size_t first_index) {
  const auto &shape = buf.shape();
  const auto &strides = buf.strides();
  std::int64_t off = 0;
  for (std::size_t d = 0; d < shape.size(); ++d) {
    std::int64_t idx = fr[n.in[first_index + d]].i;
    if (idx < 0 || idx >= shape[d])
      fail(ErrorCode::OutOfBounds,
           "index " + std::to_string(idx) + " out of bounds for dimension " +
               std::to_string(d) + " of extent " + std::to_string(shape[d]),
           n.op);
    off += idx * strides[d];
  }
  return off;
}

void exec_body(const Body &body, Slot *fr, Exec &ex);

// Runs [begin, end) of an iteration space on `workers` threads, each with
// its own copy of the frame.
template <typename F>
void distribute(Exec &ex, const Slot *fr, int frame_size, std::int64_t total,
                int workers, F &&fn) {
  auto w = static_cast<int>(std::min<std::int64_t>(workers, total));
  std::vector<Exec> execs;
  std::vector<std::vector<Slot>> frames;
  for (int k = 0; k < w; ++k) {
    execs.push_back(ex.fork());
    frames.emplace_back(fr, fr + frame_size);
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(w));
  std::vector<std::thread> threads;
  for (int k = 0; k < w; ++k) {
    std::int64_t begin = total * k / w, end = total * (k + 1) / w;
    threads.emplace_back([&, k, begin, end] {
      try {
        fn(execs[k], frames[k].data(), begin, end);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    });
  }
  for (auto &t : threads)
    t.join();
  for (int k = 0; k < w; ++k)
    ex.merge(execs[k]);
  for (auto &e : errors)
    if (e)
      std::rethrow_exception(e);
}

void exec_parallel(const Node &n, Slot *fr, Exec &ex) {
  auto dims = static_cast<std::size_t>(n.imm);
  std::vector<std::int64_t> lb(dims), step(dims), trips(dims);
  std::int64_t total = 1;
  for (std::size_t d = 0; d < dims; ++d) {
    lb[d] = fr[n.in[d]].i;
    std::int64_t ub = fr[n.in[dims + d]].i;
    step[d] = fr[n.in[2 * dims + d]].i;
    if (step[d] <= 0)
      fail(ErrorCode::InvalidBound, "scf.parallel step must be positive", n.op);
    trips[d] = ub > lb[d] ? (ub - lb[d] + step[d] - 1) / step[d] : 0;
    total *= trips[d];
  }
  const Body &body = n.regions[0];
  bool outer = ex.par_depth == 0;
  auto run_range = [&](Exec &e, Slot *f, std::int64_t begin, std::int64_t end) {
    std::vector<std::int64_t> idx(dims);
    std::int64_t rem = begin;
    for (std::size_t d = dims; d-- > 0;) {
      idx[d] = rem % trips[d];
      rem /= trips[d];
    }
    for (std::int64_t k = begin; k < end; ++k) {
      for (std::size_t d = 0; d < dims; ++d)
        f[body.args[d]].i = lb[d] + idx[d] * step[d];
      ++e.loops;
      if (outer && e.sh->races)
        e.iter = k;
      exec_body(body, f, e);
      for (std::size_t d = dims; d-- > 0;) {
        if (++idx[d] < trips[d])
          break;
        idx[d] = 0;
      }
    }
  };
  if (total == 0)
    return;
  if (outer && ex.sh->races)
    ex.sh->races->seen.clear();
  ++ex.par_depth;
  const ExecMode &mode = ex.sh->mode;
  if (outer && mode.kind == ExecMode::Kind::Worksharing && mode.workers > 1 &&
      total > 1)
    distribute(ex, fr, ex.nslots, total, mode.workers, run_range);
  else
    run_range(ex, fr, 0, total);
  --ex.par_depth;
  if (outer)
    ex.iter = -1;
}

void exec_launch(const Node &n, Slot *fr, Exec &ex) {
  if (ex.sh->mode.kind != ExecMode::Kind::GpuEmulated)
    fail(ErrorCode::ModeUnsupported,
         "gpu.launch_func needs gpu mode, running in " + ex.sh->mode.str(),
         n.op);
  const CompiledFunc *k = n.callee;
  if (!k)
    fail(ErrorCode::UnknownSymbol, "launched kernel not found", n.op);
  std::array<std::int64_t, 3> grid{}, block{};
  for (int d = 0; d < 3; ++d) {
    grid[d] = fr[n.in[d]].i;
    block[d] = fr[n.in[3 + d]].i;
    if (grid[d] < 1 || block[d] < 1)
      fail(ErrorCode::InvalidBound, "launch sizes must be positive", n.op);
  }
  std::vector<Slot> kf(static_cast<std::size_t>(k->num_slots));
  for (std::size_t a = 0; a < k->body.args.size(); ++a)
    kf[k->body.args[a]] = fr[n.in[6 + a]];
  std::int64_t threads = block[0] * block[1] * block[2];
  std::int64_t total = grid[0] * grid[1] * grid[2] * threads;
  bool outer = ex.par_depth == 0;
  auto run_range = [&](Exec &e, Slot *f, std::int64_t begin, std::int64_t end) {
    for (std::int64_t i = begin; i < end; ++i) {
      std::int64_t t = i % threads, b = i / threads;
      e.tid = {t % block[0], t / block[0] % block[1], t / (block[0] * block[1])};
      e.bid = {b % grid[0], b / grid[0] % grid[1], b / (grid[0] * grid[1])};
      ++e.loops;
      if (outer && e.sh->races)
        e.iter = i;
      exec_body(k->body, f, e);
    }
  };
  if (outer && ex.sh->races)
    ex.sh->races->seen.clear();
  int saved = ex.nslots;
  ex.nslots = k->num_slots;
  ++ex.par_depth;
  if (outer && ex.sh->mode.workers > 1 && total > 1)
    distribute(ex, kf.data(), k->num_slots, total, ex.sh->mode.workers,
               run_range);
  else
    run_range(ex, kf.data(), 0, total);
  --ex.par_depth;
  ex.nslots = saved;
  if (outer)
    ex.iter = -1;
}

void exec_call(const CompiledFunc &fn, std::vector<Slot> &frame, Exec &ex) {
  int saved = ex.nslots;
  ex.nslots = fn.num_slots;
  exec_body(fn.body, frame.data(), ex);
  ex.nslots = saved;
}

void exec_body(const Body &body, Slot *fr, Exec &ex) {
  for (const Node &n : body.nodes) {
    if (n.counted) {
      ++ex.ops;
      ++ex.per[n.dialect];
      ex.arith += n.arith;
    }
    switch (n.code) {
    case Code::Const:
      fr[n.out].i = n.imm;
      fr[n.out].f = n.fimm;
      break;
    case Code::AddF:
      fr[n.out].f = round_to(fr[n.in[0]].f + fr[n.in[1]].f, n.kind);
      break;
    case Code::SubF:
      fr[n.out].f = round_to(fr[n.in[0]].f - fr[n.in[1]].f, n.kind);
      break;
    case Code::MulF:
      fr[n.out].f = round_to(fr[n.in[0]].f * fr[n.in[1]].f, n.kind);
      break;
    case Code::DivF:
      fr[n.out].f = round_to(fr[n.in[0]].f / fr[n.in[1]].f, n.kind);
      break;
    case Code::AddI:
      fr[n.out].i = wrap(static_cast<std::uint64_t>(fr[n.in[0]].i) +
                             static_cast<std::uint64_t>(fr[n.in[1]].i),
                         n.kind);
      break;
    case Code::SubI:
      fr[n.out].i = wrap(static_cast<std::uint64_t>(fr[n.in[0]].i) -
                             static_cast<std::uint64_t>(fr[n.in[1]].i),
                         n.kind);
      break;
    case Code::MulI:
      fr[n.out].i = wrap(static_cast<std::uint64_t>(fr[n.in[0]].i) *
                             static_cast<std::uint64_t>(fr[n.in[1]].i),
                         n.kind);
      break;
    case Code::CmpF: {
      double a = fr[n.in[0]].f, b = fr[n.in[1]].f;
      fr[n.out].i =
          !std::isnan(a) && !std::isnan(b) && compare(n.pred, a, b) ? 1 : 0;
      break;
    }
    case Code::CmpI:
      fr[n.out].i = compare(n.pred, fr[n.in[0]].i, fr[n.in[1]].i) ? 1 : 0;
      break;
    case Code::IndexCast:
      fr[n.out].i = wrap(static_cast<std::uint64_t>(fr[n.in[0]].i), n.kind);
      break;
    case Code::For: {
      std::int64_t lb = fr[n.in[0]].i, ub = fr[n.in[1]].i, st = fr[n.in[2]].i;
      if (st <= 0)
        fail(ErrorCode::InvalidBound, "scf.for step must be positive", n.op);
      const Body &b = n.regions[0];
      for (std::int64_t i = lb; i < ub; i += st) {
        fr[b.args[0]].i = i;
        ++ex.loops;
        exec_body(b, fr, ex);
      }
      break;
    }
    case Code::AffineFor: {
      const Body &b = n.regions[0];
      for (std::int64_t i = n.imm; i < n.imm2; i += n.imm3) {
        fr[b.args[0]].i = i;
        ++ex.loops;
        exec_body(b, fr, ex);
      }
      break;
    }
    case Code::If:
      if (fr[n.in[0]].i & 1)
        exec_body(n.regions[0], fr, ex);
      else if (n.regions.size() > 1)
        exec_body(n.regions[1], fr, ex);
      break;
    case Code::Parallel:
      exec_parallel(n, fr, ex);
      break;
    case Code::Nop:
      break;
    case Code::Alloc: {
      auto buf = std::make_unique<Buffer>(n.shape, n.kind);
      std::lock_guard lock(ex.sh->alloc_mu);
      fr[n.out].m = buf.get();
      ex.sh->arena.push_back(std::move(buf));
      break;
    }
    case Code::Load: {
      Buffer &buf = *fr[n.in[0]].m;
      std::int64_t off = flat_offset(n, fr, buf, 1);
      ++ex.loads;
      if (ex.iter >= 0)
        ex.sh->races->read(&buf, off, ex.iter, n.op);
      auto u = static_cast<std::size_t>(off);
      if (buf.is_float())
        fr[n.out].f = buf.floats()[u];
      else
        fr[n.out].i = buf.ints()[u];
      break;
    }
    case Code::Store: {
      Buffer &buf = *fr[n.in[1]].m;
      std::int64_t off = flat_offset(n, fr, buf, 2);
      ++ex.stores;
      if (ex.iter >= 0)
        ex.sh->races->write(&buf, off, ex.iter, n.op);
      auto u = static_cast<std::size_t>(off);
      if (buf.is_float())
        buf.floats()[u] = round_to(fr[n.in[0]].f, n.kind);
      else
        buf.ints()[u] = wrap(static_cast<std::uint64_t>(fr[n.in[0]].i), n.kind);
      break;
    }
    case Code::Call: {
      if (!n.callee)
        fail(ErrorCode::UnknownSymbol, "callee not found", n.op);
      std::vector<Slot> frame(static_cast<std::size_t>(n.callee->num_slots));
      for (std::size_t a = 0; a < n.in.size(); ++a)
        frame[n.callee->body.args[a]] = fr[n.in[a]];
      exec_call(*n.callee, frame, ex);
      for (std::size_t r = 0; r < n.op->num_results(); ++r)
        fr[n.out + static_cast<int>(r)] = ex.ret[r];
      break;
    }
    case Code::Return:
      ex.ret.clear();
      for (int s : n.in)
        ex.ret.push_back(fr[s]);
      break;
    case Code::BlockId:
      fr[n.out].i = ex.bid[static_cast<std::size_t>(n.imm)];
      break;
    case Code::ThreadId:
      fr[n.out].i = ex.tid[static_cast<std::size_t>(n.imm)];
      break;
    case Code::Launch:
      exec_launch(n, fr, ex);
      break;
    case Code::Unknown:
      fail(ErrorCode::UnsupportedConstruct,
           "no execution semantics for '" + n.op->name() + "'", n.op);
    }
  }
}

ExecStats to_stats(const Exec &ex, double ms) {
  ExecStats s;
  s.ops = ex.ops;
  s.arith = ex.arith;
  s.loads = ex.loads;
  s.stores = ex.stores;
  s.loop_iterations = ex.loops;
  for (int d = 0; d < DCount; ++d)
    if (ex.per[d])
      s.per_dialect[dialect_names[d]] = ex.per[d];
  s.wall_ms = ms;
  return s;
}

RunResult run_impl(const Operation &module, const std::string &func,
                   const std::vector<Arg> &args, ExecMode mode,
                   RaceState *races) {
  auto start = std::chrono::steady_clock::now();
  if (mode.workers < 1)
    throw Error(ErrorCode::ModeUnsupported, "worker count must be >= 1");
  auto diags = verify(module);
  if (!diags.empty())
    throw Error(ErrorCode::VerificationFailed, diags.front().str(),
                diags.front().loc);
  Compiled prog(module);
  const CompiledFunc *fn = prog.func(func);
  if (!fn)
    throw Error(ErrorCode::MissingMain, "no function '@" + func + "' to run");
  if (args.size() != fn->params.size())
    throw Error(ErrorCode::SignatureMismatch,
                "@" + func + " takes " + std::to_string(fn->params.size()) +
                    " arguments, got " + std::to_string(args.size()));
  std::vector<Slot> frame(static_cast<std::size_t>(fn->num_slots));
  for (std::size_t a = 0; a < args.size(); ++a) {
    const Type &p = fn->params[a];
    Slot &s = frame[fn->body.args[a]];
    std::string which = "argument #" + std::to_string(a) + " of @" + func;
    if (auto *buf = std::get_if<Buffer *>(&args[a])) {
      if (!*buf || !(p == (*buf)->type()))
        throw Error(ErrorCode::TypeMismatch,
                    which + " expects " + p.str() + ", got " +
                        (*buf ? (*buf)->type().str() : "null"));
      s.m = *buf;
      if (races)
        races->ids.emplace(*buf, static_cast<int>(a));
    } else {
      const Scalar &v = std::get<Scalar>(args[a]);
      if (!(p == v.type))
        throw Error(ErrorCode::TypeMismatch,
                    which + " expects " + p.str() + ", got " + v.type.str());
      s.i = v.i;
      s.f = v.f;
    }
  }

  Shared shared;
  shared.prog = &prog;
  shared.mode = mode;
  shared.races = races;
  Exec ex;
  ex.sh = &shared;
  exec_call(*fn, frame, ex);

  RunResult result;
  for (std::size_t r = 0; r < fn->results.size() && r < ex.ret.size(); ++r) {
    const Type &t = fn->results[r];
    result.results.push_back(Scalar{t, ex.ret[r].i, ex.ret[r].f});
  }
  double ms = std::chrono::duration<double, std::milli>(
                  std::chrono::steady_clock::now() - start)
                  .count();
  result.stats = to_stats(ex, ms);
  return result;
}

} // namespace

ExecMode ExecMode::parse(std::string_view text) {
  auto colon = text.find(':');
  std::string_view kind = text.substr(0, colon);
  int workers = 1;
  if (colon != std::string_view::npos) {
    std::string n(text.substr(colon + 1));
    try {
      std::size_t used = 0;
      workers = std::stoi(n, &used);
      if (used != n.size() || workers < 1)
        throw std::invalid_argument(n);
    } catch (const std::exception &) {
      throw Error(ErrorCode::ModeUnsupported,
                  "bad worker count in mode '" + std::string(text) + "'");
    }
  }
  if (kind == "sequential" && colon == std::string_view::npos)
    return sequential();
  if (kind == "worksharing")
    return worksharing(workers);
  if (kind == "gpu")
    return gpu(workers);
  throw Error(ErrorCode::ModeUnsupported,
              "unknown mode '" + std::string(text) +
                  "' (sequential, worksharing:N, gpu)");
}

std::string ExecMode::str() const {
  switch (kind) {
  case Kind::Sequential:
    return "sequential";
  case Kind::Worksharing:
    return "worksharing:" + std::to_string(workers);
  case Kind::GpuEmulated:
    return workers == 1 ? "gpu" : "gpu:" + std::to_string(workers);
  }
  return "?";
}

bool ExecStats::same_counts(const ExecStats &o) const {
  return ops == o.ops && per_dialect == o.per_dialect && arith == o.arith &&
         loads == o.loads && stores == o.stores &&
         loop_iterations == o.loop_iterations;
}

std::string ExecStats::json() const {
  nlohmann::json j = {{"ops", ops},
                      {"per_dialect", per_dialect},
                      {"arith", arith},
                      {"loads", loads},
                      {"stores", stores},
                      {"loop_iterations", loop_iterations},
                      {"wall_ms", wall_ms}};
  return j.dump();
}

RunResult run(const Operation &module, const std::string &func,
              const std::vector<Arg> &args, ExecMode mode) {
  return run_impl(module, func, args, mode, nullptr);
}

std::vector<RaceConflict> check_races(const Operation &module,
                                      const std::string &func,
                                      const std::vector<Arg> &args,
                                      std::size_t limit) {
  RaceState races;
  races.limit = limit;
  run_impl(module, func, args, ExecMode::gpu(1), &races);
  return races.conflicts;
}

double cost(const ExecStats &stats, const CostModel &model) {
  return model.arith * static_cast<double>(stats.arith) +
         model.memory * static_cast<double>(stats.loads + stats.stores) +
         model.loop * static_cast<double>(stats.loop_iterations);
}

} // namespace staircase
