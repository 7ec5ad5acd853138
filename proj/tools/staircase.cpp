// Command-line driver: emit, opt, run, tune, verify.
//
// Exit codes: 0 success, 1 diagnostics or user error, 2 internal error.

#include "staircase/dialects.hpp"
#include "staircase/frontend.hpp"
#include "staircase/interp.hpp"
#include "staircase/passes.hpp"
#include "staircase/textio.hpp"
#include "staircase/tuner.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>

using namespace staircase;

namespace {

std::string read_input(const std::string &path) {
  if (path == "-")
    return std::string(std::istreambuf_iterator<char>(std::cin), {});
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(ErrorCode::IOError, "cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string display_name(const std::string &path) {
  return path == "-" ? "<stdin>" : path;
}

bool is_host_source(const std::string &path) {
  return std::filesystem::path(path).extension() == ".py";
}

// Parses and verifies a .sir module, printing diagnostics.
Operation &load_module(const std::string &path, Context &ctx) {
  Operation &m = parse_module(read_input(path), ctx, display_name(path));
  auto diags = verify(m);
  if (!diags.empty()) {
    for (const auto &d : diags)
      std::cerr << d.str() << "\n";
    throw Error(ErrorCode::VerificationFailed,
                std::to_string(diags.size()) + " diagnostic(s)");
  }
  return m;
}

std::vector<std::int64_t> parse_ints(const std::string &text, char sep) {
  std::vector<std::int64_t> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, sep)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoll(tok, &used));
      if (used != tok.size())
        throw std::invalid_argument(tok);
    } catch (const std::exception &) {
      throw Error(ErrorCode::SyntaxError, "expected an integer, got '" + tok + "'");
    }
  }
  return out;
}

nlohmann::json scalar_json(const Scalar &s) {
  if (s.type.is_float())
    return s.f;
  return s.i;
}

std::uint64_t default_seed() {
  const char *env = std::getenv("STAIRCASE_SEED");
  if (!env)
    return 0;
  try {
    return std::stoull(env);
  } catch (const std::exception &) {
    std::cerr << "warning: ignoring STAIRCASE_SEED='" << env << "'\n";
    return 0;
  }
}

struct EmitOptions {
  std::string input, func, range_ctor;
  bool no_exec_rewrite = false;
};

int cmd_emit(const EmitOptions &o) {
  Program p = Program::from_source(read_input(o.input), display_name(o.input));
  CaptureConfig cfg = p.config(o.func);
  if (o.range_ctor == "scf")
    cfg.range_ctor = RangeCtor::Scf;
  else if (o.range_ctor == "affine")
    cfg.range_ctor = RangeCtor::Affine;
  if (o.no_exec_rewrite)
    cfg.rewrite_executable = false;
  Context ctx;
  std::cout << print_module(*capture(p, o.func, ctx, cfg).module);
  return 0;
}

struct OptOptions {
  std::string input, pipeline;
  bool print_stats = false;
};

int cmd_opt(const OptOptions &o) {
  Context ctx;
  Pipeline pipeline = parse_pipeline(o.pipeline);
  Operation &m = load_module(o.input, ctx);
  auto stats = run_pipeline(m, pipeline);
  std::cout << print_module(m);
  if (o.print_stats)
    std::cerr << stats_json(stats, true) << "\n";
  return 0;
}

struct RunOptions {
  std::string input, func, mode = "sequential", out;
  std::vector<std::string> args;
};

int cmd_run(const RunOptions &o) {
  Context ctx;
  Operation &m = load_module(o.input, ctx);
  ExecMode mode = ExecMode::parse(o.mode);
  const Operation *fn = lookup_symbol(m, o.func);
  if (!fn || !fn->is("func.func"))
    throw Error(ErrorCode::MissingMain, "no function '" + o.func + "'");
  auto params = func_param_types(*fn);
  if (params.size() != o.args.size())
    throw Error(ErrorCode::SignatureMismatch,
                "'" + o.func + "' takes " + std::to_string(params.size()) +
                    " argument(s), got " + std::to_string(o.args.size()));

  // Memref parameters take buffer files, scalar parameters take literals.
  std::vector<Buffer> buffers;
  buffers.reserve(params.size());
  std::vector<Arg> args;
  std::vector<std::size_t> buffer_param;
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].is_memref()) {
      buffers.push_back(load_buffer(o.args[k]));
      buffer_param.push_back(k);
      args.emplace_back(&buffers.back());
    } else if (params[k].is_float()) {
      try {
        args.emplace_back(Scalar::real(std::stod(o.args[k]), params[k]));
      } catch (const std::exception &) {
        throw Error(ErrorCode::TypeMismatch,
                    "argument " + std::to_string(k) + " must be a number");
      }
    } else {
      args.emplace_back(Scalar::integer(parse_ints(o.args[k], ',').at(0), params[k]));
    }
  }

  RunResult r = run(m, o.func, args, mode);

  if (!o.out.empty()) {
    std::filesystem::create_directories(o.out);
    for (std::size_t b = 0; b < buffers.size(); ++b)
      save_buffer(buffers[b], (std::filesystem::path(o.out) /
                               ("arg" + std::to_string(buffer_param[b]) + ".json"))
                                  .string());
  }
  nlohmann::json out;
  out["results"] = nlohmann::json::array();
  for (const auto &s : r.results)
    out["results"].push_back(scalar_json(s));
  out["stats"] = nlohmann::json::parse(r.stats.json());
  out["cost"] = cost(r.stats);
  std::cout << out.dump() << "\n";
  return 0;
}

struct TuneOptions {
  std::string input, func, tiles, unroll = "1", strategy = "random", log,
      pipeline = default_pipeline_template, mode = "sequential";
  std::size_t budget = 50;
  std::uint64_t seed = 0;
  std::uint64_t input_seed = 0;
  bool wall_time = false;
};

int cmd_tune(const TuneOptions &o) {
  TuneTask task;
  task.func = o.func;
  task.pipeline_template = o.pipeline;
  task.mode = ExecMode::parse(o.mode);
  task.input_seed = o.input_seed;
  task.wall_time = o.wall_time;

  std::string text = read_input(o.input);
  std::string name = display_name(o.input);
  if (is_host_source(o.input)) {
    auto program = std::make_shared<Program>(Program::from_source(text, name));
    task.kernel = [program, func = o.func](Context &ctx) -> Operation & {
      return *capture(*program, func, ctx).module;
    };
  } else {
    task.kernel = [text, name](Context &ctx) -> Operation & {
      return parse_module(text, ctx, name);
    };
  }

  ParamSpace space;
  if (!o.tiles.empty()) {
    std::stringstream ss(o.tiles);
    std::string dim;
    while (std::getline(ss, dim, ';'))
      space.tile_sizes.push_back(parse_ints(dim, ','));
  }
  space.unroll_factors = parse_ints(o.unroll, ',');

  StrategyConfig strategy;
  if (o.strategy == "random")
    strategy.kind = Strategy::Random;
  else if (o.strategy == "es")
    strategy.kind = Strategy::OnePlusOneES;
  else
    throw Error(ErrorCode::SyntaxError, "unknown strategy '" + o.strategy + "'");

  Tuner tuner(task);
  auto [best, log] = tuner.search(space, o.budget, o.seed, strategy);
  if (!o.log.empty())
    persist(log, o.log);
  std::cout << trial_json(best) << "\n";
  return 0;
}

int cmd_verify(const std::string &input) {
  Context ctx;
  Operation &m = parse_module(read_input(input), ctx, display_name(input));
  auto diags = verify(m);
  for (const auto &d : diags)
    std::cerr << d.str() << "\n";
  return diags.empty() ? 0 : 1;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"staircase: capture, transform, run and tune loop kernels"};
  app.require_subcommand(1);

  EmitOptions emit;
  auto *emit_cmd = app.add_subcommand("emit", "capture a host function and print its IR");
  emit_cmd->add_option("--input", emit.input, "host source file, or - for stdin")->required();
  emit_cmd->add_option("--func", emit.func, "function to capture")->required();
  emit_cmd->add_option("--range-ctor", emit.range_ctor, "override the decorator's loop kind")
      ->check(CLI::IsMember({"scf", "affine"}));
  emit_cmd->add_flag("--no-exec-rewrite", emit.no_exec_rewrite,
                     "skip jump elision; both arms are flattened at source level");

  OptOptions opt;
  auto *opt_cmd = app.add_subcommand("opt", "run a pass pipeline over a .sir module");
  opt_cmd->add_option("--input", opt.input, ".sir file, or - for stdin")->required();
  opt_cmd->add_option("--pipeline", opt.pipeline, "e.g. builtin.module(func.func(lower-affine))")
      ->required();
  opt_cmd->add_flag("--print-stats", opt.print_stats, "per-pass stats as JSON on stderr");

  RunOptions run_o;
  auto *run_cmd = app.add_subcommand("run", "interpret a function");
  run_cmd->add_option("--input", run_o.input, ".sir file, or - for stdin")->required();
  run_cmd->add_option("--func", run_o.func)->required();
  run_cmd->add_option("--args", run_o.args,
                      "buffer JSON files for memref parameters, literals for scalars");
  run_cmd->add_option("--mode", run_o.mode, "sequential, worksharing:N, gpu or gpu:N");
  run_cmd->add_option("--out", run_o.out, "directory for the mutated buffers");

  TuneOptions tune;
  tune.seed = default_seed();
  auto *tune_cmd = app.add_subcommand("tune", "search tile sizes and unroll factors");
  tune_cmd->add_option("--input", tune.input, ".py or .sir file")->required();
  tune_cmd->add_option("--func", tune.func)->required();
  tune_cmd->add_option("--tiles", tune.tiles, "candidates per dimension, e.g. \"8,16;8,16\"");
  tune_cmd->add_option("--unroll", tune.unroll, "candidate factors, e.g. \"1,2,4\"");
  tune_cmd->add_option("--budget", tune.budget, "number of trials")->check(CLI::PositiveNumber);
  tune_cmd->add_option("--seed", tune.seed, "search seed (default $STAIRCASE_SEED or 0)");
  tune_cmd->add_option("--strategy", tune.strategy)->check(CLI::IsMember({"random", "es"}));
  tune_cmd->add_option("--log", tune.log, "JSONL trial log");
  tune_cmd->add_option("--pipeline", tune.pipeline,
                       "template with {tiles} and {unroll} placeholders");
  tune_cmd->add_option("--mode", tune.mode);
  tune_cmd->add_option("--input-seed", tune.input_seed, "seed of the fixed random inputs");
  tune_cmd->add_flag("--wall-time", tune.wall_time, "score by wall time instead of the cost model");

  std::string verify_input;
  auto *verify_cmd = app.add_subcommand("verify", "check a .sir module");
  verify_cmd->add_option("--input", verify_input, ".sir file, or - for stdin")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*emit_cmd)
      return cmd_emit(emit);
    if (*opt_cmd)
      return cmd_opt(opt);
    if (*run_cmd)
      return cmd_run(run_o);
    if (*tune_cmd)
      return cmd_tune(tune);
    if (*verify_cmd)
      return cmd_verify(verify_input);
  } catch (const Error &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::filesystem::filesystem_error &e) {
    std::cerr << "error: IOError: " << e.what() << "\n";
    return 1;
  } catch (const std::exception &e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
