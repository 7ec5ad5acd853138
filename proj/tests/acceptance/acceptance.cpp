// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails.

#include "../support/corpus.hpp"
#include "../support/generators.hpp"
#include "../support/oracles.hpp"
#include "staircase/dialects.hpp"
#include "staircase/frontend.hpp"
#include "staircase/interp.hpp"
#include "staircase/passes.hpp"
#include "staircase/textio.hpp"
#include "staircase/tuner.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

using namespace staircase;
using namespace staircase::testing;

namespace {

struct Failure {
  std::string why;
};

void require(bool ok, const std::string &why) {
  if (!ok)
    throw Failure{why};
}

std::vector<Operation *> body_ops(const Block &block) {
  std::vector<Operation *> out;
  for (const auto &op : block.operations())
    out.push_back(op.get());
  return out;
}

std::vector<std::string> names(const std::vector<Operation *> &ops) {
  std::vector<std::string> out;
  for (auto *op : ops)
    out.push_back(op->name());
  return out;
}

std::string join(const std::vector<std::string> &v) {
  std::string s;
  for (const auto &x : v)
    s += (s.empty() ? "" : ", ") + x;
  return s;
}

std::size_t count_named(Operation &root, std::string_view name) {
  std::size_t n = 0;
  walk(root, [&](Operation &op) { n += op.is(name); });
  return n;
}

Operation &only_func(Operation &module) {
  return module.region(0).block().op(0);
}

// ---------------------------------------------------------------------------

std::string ifs_golden() {
  auto ctx = create_context();
  Operation &m = capture_corpus("ifs.py", "ifs", *ctx);
  require(verify(m).empty(), "module does not verify");
  require(count_named(m, "arith.cmpf") == 1, "expected exactly one cmpf");
  require(count_named(m, "scf.if") == 1, "expected exactly one scf.if");

  auto ops = body_ops(only_func(m).region(0).block());
  require(names(ops) == std::vector<std::string>{"arith.constant", "arith.cmpf",
                                                 "scf.if", "func.return"},
          "func body is [" + join(names(ops)) + "]");
  Operation &iff = *ops[2];
  require(iff.num_regions() == 2, "scf.if lacks an else arm");
  auto arm = [&](std::size_t r, double value, std::int64_t extent) {
    auto a = body_ops(iff.region(r).block());
    require(names(a) == std::vector<std::string>{"arith.constant",
                                                 "memref.alloca", "scf.yield"},
            "arm " + std::to_string(r) + " is [" + join(names(a)) + "]");
    require(constant_float(a[0]->result(0)) == value,
            "arm " + std::to_string(r) + " constant is wrong");
    require(a[1]->result(0)->type() ==
                Type::memref({extent, extent}, Type::f64()),
            "arm " + std::to_string(r) + " alloca type is " +
                a[1]->result(0)->type().str());
  };
  arm(0, 2.0, 3);
  arm(1, 6.0, 7);
  return "one cmpf; then {2.0, 3x3}, else {6.0, 7x7}";
}

std::string matmul_golden() {
  auto ctx = create_context();
  Operation &m = capture_corpus("matmul.py", "matmul", *ctx);
  require(verify(m).empty(), "module does not verify");
  std::vector<std::int64_t> bounds;
  Operation *loop = &only_func(m).region(0).block().op(0);
  Operation *innermost = nullptr;
  while (loop && loop->is("affine.for")) {
    bounds.push_back(loop->attr("upper_bound")->as_int());
    innermost = loop;
    Block &b = loop->region(0).block();
    loop = b.empty() ? nullptr : &b.op(0);
  }
  require(bounds == std::vector<std::int64_t>{4, 16, 8}, "loop bounds differ");
  require(count_named(m, "affine.for") == 3, "expected three affine.for");
  auto body = names(body_ops(innermost->region(0).block()));
  std::vector<std::string> want = {"memref.load", "memref.load", "memref.load",
                                   "arith.mulf",  "arith.addf",  "memref.store",
                                   "affine.yield"};
  require(body == want, "innermost body is [" + join(body) + "]");
  return "bounds 4/16/8; load, load, load, mulf, addf, store";
}

std::string both_arms() {
  ConditionalGenerator gen(2024);
  int arms = 0;
  for (int k = 0; k < 25; ++k) {
    int depth = 1 + k % 3;
    std::vector<double> sentinels;
    std::string name = "gen" + std::to_string(k);
    std::string src = gen.generate(name, depth, sentinels);
    auto ctx = create_context();
    CaptureResult r = capture(Program::from_source(src, name + ".py"), name, *ctx);
    require(verify(*r.module).empty(), name + " does not verify");

    std::map<double, int> seen;
    int max_depth = 0;
    std::function<void(Operation &, int)> visit = [&](Operation &op, int d) {
      if (op.is("arith.constant"))
        if (auto v = constant_float(op.result(0)))
          ++seen[*v];
      if (op.is("scf.if"))
        max_depth = std::max(max_depth, ++d);
      for (std::size_t r = 0; r < op.num_regions(); ++r)
        for (auto *child : body_ops(op.region(r).block()))
          visit(*child, d);
    };
    visit(*r.module, 0);
    require(max_depth == depth, name + " nests " + std::to_string(max_depth) +
                                    " levels, generated " + std::to_string(depth));
    for (double s : sentinels)
      require(seen[s] == 1, name + ": sentinel " + std::to_string(s) +
                                " appears " + std::to_string(seen[s]) + " times");
    arms += static_cast<int>(sentinels.size());
  }
  return "25 functions, " + std::to_string(arms) + " sentinels each exactly once";
}

std::string line_fidelity() {
  // The bad statement moves down one line per case, past loops, conditionals
  // and comments that the rewrite reshapes.
  int checked = 0;
  for (int pad = 0; pad < 6; ++pad) {
    std::string src = "from staircase import *\n\n@mlir_func\n"
                      "def f(a: F64, n: I32, buf: MemRef[(4,), F64]):\n";
    for (int k = 0; k < pad; ++k)
      src += k % 2 ? "    # comment\n" : "    x" + std::to_string(k) + " = a * a\n";
    src += "    for i in range(4):\n";
    src += "        if a < a:\n";
    src += "            buf[i] = a\n";
    src += "        else:\n";
    int line = 1;
    for (char c : src)
      line += c == '\n';
    src += "            bad = a + n\n";
    src += "    return\n";
    try {
      auto ctx = create_context();
      capture(Program::from_source(src, "fidelity.py"), "f", *ctx);
      require(false, "type error was not reported");
    } catch (const Error &e) {
      require(e.code() == ErrorCode::TypeMismatch,
              std::string("got ") + to_string(e.code()));
      require(e.location() && e.location()->line == line,
              "reported " + (e.location() ? e.location()->str() : "no location") +
                  ", expected line " + std::to_string(line));
      require(e.location()->file == "fidelity.py", "wrong file in location");
    }
    ++checked;
  }
  return std::to_string(checked) + " placements, each reported at its own line";
}

std::string round_trip() {
  int golden = 0;
  for (const auto &entry :
       std::filesystem::directory_iterator(std::string(STAIRCASE_TEST_DATA) + "/golden")) {
    if (entry.path().extension() != ".sir")
      continue;
    std::ifstream in(entry.path());
    std::stringstream ss;
    ss << in.rdbuf();
    auto ctx = create_context();
    Operation &m = parse_module(ss.str(), *ctx, entry.path().string());
    std::string p1 = print_module(m);
    require(p1 == ss.str(), entry.path().filename().string() + " does not reprint as stored");
    require(print_module(parse_module(p1, *ctx)) == p1,
            entry.path().filename().string() + " round trip differs");
    ++golden;
  }
  require(golden > 0, "no golden files found");

  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto ctx = create_context();
    Operation &m = ModuleGenerator(*ctx, seed).generate();
    auto diags = verify(m);
    require(diags.empty(), "generated module " + std::to_string(seed) +
                               " is invalid: " + (diags.empty() ? "" : diags[0].str()));
    std::string p1 = print_module(m);
    auto ctx2 = create_context();
    Operation &parsed = parse_module(p1, *ctx2);
    std::string p2 = print_module(parsed);
    require(p1 == p2, "random module " + std::to_string(seed) + " differs after reparse");
    require(structurally_equal(m, parsed),
            "random module " + std::to_string(seed) + " not structurally equal");
  }
  return std::to_string(golden) + " golden + 100 random modules byte-identical";
}

struct Kernel {
  std::string file, func;
  bool conv;
};

std::vector<Buffer> kernel_inputs(const Operation &module, const std::string &func,
                                  std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Buffer> out;
  for (const Type &t : func_param_types(*lookup_symbol(module, func)))
    out.push_back(random_buffer(t.shape(), t.element().kind(), rng));
  return out;
}

std::vector<Arg> as_args(std::vector<Buffer> &buffers) {
  std::vector<Arg> args;
  for (auto &b : buffers)
    args.emplace_back(&b);
  return args;
}

std::string pass_equivalence() {
  std::vector<Kernel> kernels = {{"matmul.py", "matmul", false},
                                 {"matmul.py", "matmul_i32", false},
                                 {"conv.py", "conv2d_nchw_fchw", true},
                                 {"conv.py", "conv2d_i32", true}};
  struct Config {
    std::string label, pipeline;
    bool gpu;
  };
  std::vector<Config> configs = {
      {"lower-affine", "builtin.module(func.func(lower-affine))", false},
      {"unroll 2", "builtin.module(func.func(loop-unroll{factor=2}))", false},
      {"unroll 3", "builtin.module(func.func(loop-unroll{factor=3}))", false},
      {"tile 8,8", "builtin.module(func.func(scf-parallel-loop-tiling{sizes=1,1,8,8}))", false},
      {"tile 4,16", "builtin.module(func.func(scf-parallel-loop-tiling{sizes=1,1,4,16}))", false},
      {"map+outline",
       "builtin.module(func.func(gpu-map-parallel-loops),gpu-kernel-outlining)", true},
  };

  int runs = 0, changed = 0;
  for (const Kernel &k : kernels) {
    auto ctx = create_context();
    Operation &base = capture_corpus(k.file, k.func, *ctx);
    std::string base_text = print_module(base);

    // The untransformed kernel itself is checked against the oracle once.
    {
      auto in = kernel_inputs(base, k.func, 99);
      Buffer expect = in[2];
      if (k.conv)
        conv_oracle(in[0], in[1], expect);
      else
        matmul_oracle(in[0], in[1], expect);
      run(base, k.func, as_args(in));
      require(close(in[2], expect), k.func + " baseline disagrees with the oracle");
    }

    for (const Config &c : configs) {
      Operation &m = parse_module(base_text, *ctx);
      // Tiling sizes are written for the 4-d conv loop; matmul has none.
      run_pipeline(m, c.pipeline);
      changed += print_module(m) != base_text;
      for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto want = kernel_inputs(base, k.func, seed);
        auto got = want;
        run(base, k.func, as_args(want));
        run(m, k.func, as_args(got), c.gpu ? ExecMode::gpu() : ExecMode::sequential());
        for (std::size_t b = 0; b < want.size(); ++b)
          require(close(got[b], want[b]),
                  k.func + " after " + c.label + " differs for seed " +
                      std::to_string(seed));
        ++runs;
      }
    }
  }
  return std::to_string(runs) + " runs equal baseline; " + std::to_string(changed) +
         " of 24 kernel/pipeline pairs changed the IR";
}

std::string unroll_structure() {
  auto ctx = create_context();
  Operation &m = capture_corpus("simple_for.py", "simple_for", *ctx);
  auto find_loop = [](Operation &module) {
    Operation *loop = nullptr;
    walk(module, [&](Operation &op) {
      if (op.is("scf.for"))
        loop = &op;
    });
    return loop;
  };
  auto census = [](Operation &loop) {
    std::map<std::string, int> n;
    for (auto *op : body_ops(loop.region(0).block()))
      if (!op->is("scf.yield"))
        ++n[op->name()];
    return n;
  };
  Operation *before = find_loop(m);
  require(before && constant_bounds(*before)->step == 2, "original loop not found");
  auto orig = census(*before);
  int orig_arith = 0;
  for (auto &[name, n] : orig)
    if (name.rfind("arith.", 0) == 0 && name != "arith.constant")
      orig_arith += n;

  run_pipeline(m, "builtin.module(func.func(loop-unroll{factor=3}))");
  require(verify(m).empty(), "unrolled module does not verify");
  Operation *after = find_loop(m);
  require(after, "loop disappeared");
  auto b = *constant_bounds(*after);
  require(b.lb == 0 && b.ub == 42 && b.step == 6,
          "bounds are " + std::to_string(b.lb) + ".." + std::to_string(b.ub) +
              " step " + std::to_string(b.step));
  auto now = census(*after);
  for (auto &[name, n] : orig) {
    int extra = name == "arith.addi" ? 2 : 0;
    require(now[name] == 3 * n + extra,
            name + " appears " + std::to_string(now[name]) + " times, expected " +
                std::to_string(3 * n + extra));
  }
  // Besides the copies, only the two induction offsets (iv + 2, iv + 4).
  require(now["arith.addi"] == 3 * orig["arith.addi"] + 2, "unexpected offset ops");
  int body_arith = 0;
  for (auto &[name, n] : now)
    if (name.rfind("arith.", 0) == 0 && name != "arith.constant")
      body_arith += n;
  require(body_arith - 2 == 3 * orig_arith, "body arithmetic not tripled");
  return "step 6, " + std::to_string(orig_arith) + " -> " +
         std::to_string(body_arith - 2) + " body arith ops (+2 offsets)";
}

std::string conv_end_to_end() {
  auto ctx = create_context();
  Operation &m = capture_corpus("conv.py", "conv2d_nchw_fchw", *ctx);
  run_pipeline(m, "builtin.module(func.func(gpu-map-parallel-loops,"
                  "scf-parallel-loop-tiling{sizes=1,1,8,8},gpu-map-parallel-loops),"
                  "gpu-kernel-outlining)");
  require(verify(m).empty(), "outlined module does not verify");
  require(count_named(m, "gpu.launch_func") == 1, "expected one launch");
  require(count_named(only_func(m), "scf.parallel") == 0,
          "parallel loop left in host function");

  std::mt19937_64 rng(8);
  Buffer in = random_buffer({1, 1, 66, 66}, TypeKind::F32, rng);
  Buffer ker = random_buffer({3, 1, 3, 3}, TypeKind::F32, rng);
  Buffer out = random_buffer({1, 3, 64, 64}, TypeKind::F32, rng);
  Buffer expect = out;
  conv_oracle(in, ker, expect);
  run(m, "conv2d_nchw_fchw", {&in, &ker, &out}, ExecMode::gpu());
  require(close(out, expect, 1e-6), "gpu-mode output differs from the oracle");
  return "map -> tile(8,8) -> outline, gpu mode matches oracle";
}

std::string worksharing() {
  auto ctx = create_context();
  Operation &m = capture_corpus("conv.py", "conv2d_nchw_fchw", *ctx);
  auto seq = kernel_inputs(m, "conv2d_nchw_fchw", 5);
  auto races_in = seq;
  RunResult base = run(m, "conv2d_nchw_fchw", as_args(seq));
  for (int workers : {1, 2, 4}) {
    auto in = kernel_inputs(m, "conv2d_nchw_fchw", 5);
    RunResult r = run(m, "conv2d_nchw_fchw", as_args(in), ExecMode::worksharing(workers));
    require(in[2] == seq[2], std::to_string(workers) + " workers: output differs");
    require(r.stats.same_counts(base.stats),
            std::to_string(workers) + " workers: op counts differ");
  }
  auto races = check_races(m, "conv2d_nchw_fchw", as_args(races_in));
  require(races.empty(), std::to_string(races.size()) + " races reported");
  return "workers 1/2/4 bit-identical to sequential, no races";
}

std::string tuner() {
  TuneTask task;
  task.kernel = [](Context &ctx) -> Operation & {
    return capture_corpus("conv.py", "conv2d_nchw_fchw", ctx);
  };
  task.func = "conv2d_nchw_fchw";
  task.input_seed = 1;
  ParamSpace space{{{1, 2, 4, 8, 16}, {1, 2, 4, 8, 16}}, {1, 2, 4}};

  auto once = [&] { return Tuner(task).search(space, 50, 42); };
  auto [best, log] = once();
  auto [best2, log2] = once();
  auto dir = std::filesystem::temp_directory_path();
  persist(log, (dir / "staircase_acc_a.jsonl").string());
  persist(log2, (dir / "staircase_acc_b.jsonl").string());
  auto slurp = [](const std::filesystem::path &p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  bool same_bytes = slurp(dir / "staircase_acc_a.jsonl") == slurp(dir / "staircase_acc_b.jsonl");
  std::filesystem::remove(dir / "staircase_acc_a.jsonl");
  std::filesystem::remove(dir / "staircase_acc_b.jsonl");
  require(log == log2 && same_bytes, "logs differ between runs");
  require(log.size() == 50, "log has " + std::to_string(log.size()) + " trials");
  require(log[0].params == (TrialParams{{1, 1}, 1}), "trial 0 is not the identity point");
  require(log[0].cost.has_value(), "baseline was not evaluated");
  double baseline = *log[0].cost;
  require(best.cost && *best.cost <= baseline, "best is worse than baseline");
  int below = 0;
  for (const Trial &t : log)
    below += t.cost && *t.cost < baseline && !(t.params == log[0].params);
  require(below > 0, "no configuration beats the baseline");
  std::ostringstream os;
  os << "baseline " << baseline << ", best " << *best.cost << " at tiles "
     << best.params.tiles[0] << "x" << best.params.tiles[1] << " unroll "
     << best.params.unroll << "; " << below << " trials below baseline";
  return os.str();
}

std::string extensibility() {
  auto ctx = create_context();
  OpSchema scale;
  scale.name = "scale";
  scale.operands = {1, 1};
  scale.results = {1, 1};
  scale.has_side_effects = false;
  scale.required_attrs = {"factor"};
  register_dialect(*ctx, DialectDef{"toy", {scale}});
  Operation &m = capture_corpus("custom_op.py", "scale", *ctx);
  require(verify(m).empty(), "captured module does not verify");

  std::vector<Operation *> toy_ops;
  std::size_t others = 0;
  DialectVisitor visitor;
  visitor.on("toy", [&](Operation &op) { toy_ops.push_back(&op); })
      .otherwise([&](Operation &) { ++others; });
  walk(m, [&](Operation &o) { visitor(o); });
  require(toy_ops.size() == 1 && toy_ops[0]->is("toy.scale"),
          "visitor saw " + std::to_string(toy_ops.size()) + " toy ops");
  require(others > 0, "fallback handler never ran");

  // toy.scale(x) {factor = f}  ==>  x * f
  Operation &op = *toy_ops[0];
  OpBuilder b(*ctx);
  b.set_insertion_point_before(op);
  Value *x = op.operand(0);
  Value *f = b.constant_float(op.attr("factor")->as_float().value, x->type());
  Value *product = b.arith(ArithKind::Mul, x, f);
  replace_all_uses_with(*op.result(0), *product);
  erase_op(op);
  require(verify(m).empty(), "rewritten module does not verify");
  require(count_named(m, "toy.scale") == 0, "toy.scale still present");

  std::string text = print_module(m);
  Operation &parsed = parse_module(text, *ctx);
  require(print_module(parsed) == text, "print/parse/print differs");
  require(structurally_equal(m, parsed), "reparsed module differs structurally");

  Buffer buf({4}, TypeKind::F64);
  run(parsed, "scale", {Scalar::real(1.5), &buf});
  for (std::size_t k = 0; k < buf.size(); ++k)
    require(buf.get(k) == 1.5 * 2.0 + 1.5, "rewritten kernel computes the wrong value");
  return "toy.scale visited, rewritten to mulf, round-trips and runs";
}

} // namespace

int main() {
  struct Criterion {
    int id;
    std::string name;
    double budget_s;
    std::function<std::string()> check;
  };
  std::vector<Criterion> criteria = {
      {1, "golden capture: ifs", 1, ifs_golden},
      {2, "golden capture: matmul", 1, matmul_golden},
      {3, "both arms captured", 60, both_arms},
      {4, "location fidelity", 60, line_fidelity},
      {5, "print/parse round trip", 5, round_trip},
      {6, "pass equivalence", 60, pass_equivalence},
      {7, "unroll structure", 60, unroll_structure},
      {8, "conv end to end (gpu)", 30, conv_end_to_end},
      {9, "worksharing equivalence", 30, worksharing},
      {10, "tuner", 120, tuner},
      {11, "user dialect extensibility", 60, extensibility},
  };

  int failed = 0;
  for (const auto &c : criteria) {
    auto start = std::chrono::steady_clock::now();
    std::string detail;
    bool ok = true;
    try {
      detail = c.check();
    } catch (const Failure &f) {
      ok = false;
      detail = f.why;
    } catch (const std::exception &e) {
      ok = false;
      detail = std::string("exception: ") + e.what();
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (ok && secs > c.budget_s) {
      ok = false;
      detail += " (took longer than " + std::to_string(static_cast<int>(c.budget_s)) + " s)";
    }
    failed += !ok;
    std::printf("[%s] %2d %-28s %7.3f s  %s\n", ok ? "PASS" : "FAIL", c.id,
                c.name.c_str(), secs, detail.c_str());
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed,
              criteria.size());
  return failed ? 1 : 0;
}
