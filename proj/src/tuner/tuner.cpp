#include "staircase/tuner.hpp"

#include "staircase/dialects.hpp"
#include "staircase/passes.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

namespace staircase {

std::size_t ParamSpace::size() const {
  std::size_t n = unroll_factors.size();
  for (const auto &dim : tile_sizes)
    n *= dim.size();
  return n;
}

std::string instantiate_pipeline(const std::string &pipeline_template,
                                 const TrialParams &params, std::size_t arity) {
  std::vector<std::int64_t> tiles = params.tiles;
  if (tiles.size() < arity)
    tiles.insert(tiles.begin(), arity - tiles.size(), 1);
  std::string sizes;
  for (auto t : tiles)
    sizes += (sizes.empty() ? "" : ",") + std::to_string(t);

  std::string out = pipeline_template;
  auto replace = [&](const std::string &key, const std::string &value) {
    auto pos = out.find(key);
    if (pos == std::string::npos)
      throw Error(ErrorCode::SyntaxError,
                  "pipeline template has no " + key + " placeholder");
    for (; pos != std::string::npos; pos = out.find(key, pos + value.size()))
      out.replace(pos, key.size(), value);
  };
  replace("{tiles}", sizes);
  replace("{unroll}", std::to_string(params.unroll));
  return out;
}

namespace {

std::string digest_of(const ExecStats &stats) {
  // FNV-1a over the count-only JSON.
  ExecStats counts = stats;
  counts.wall_ms = 0;
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : counts.json()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

const Operation *find_func(const Operation &module, const std::string &name) {
  const Operation *fn = lookup_symbol(module, name);
  if (!fn || !fn->is("func.func"))
    throw Error(ErrorCode::MissingMain, "no function '" + name + "'");
  return fn;
}

std::size_t parallel_arity(Operation &module, const std::string &func) {
  std::size_t arity = 0;
  walk(
      const_cast<Operation &>(*find_func(module, func)),
      [&](Operation &op) {
        if (!arity && op.is("scf.parallel"))
          arity = op.region(0).block(0).num_arguments();
      },
      WalkOrder::Pre);
  return arity;
}

bool same_outputs(const std::vector<Buffer> &a, const std::vector<Buffer> &b) {
  if (a.size() != b.size())
    return false;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a[k].shape() != b[k].shape() || a[k].dtype() != b[k].dtype())
      return false;
    if (!a[k].is_float()) {
      if (a[k].ints() != b[k].ints())
        return false;
      continue;
    }
    for (std::size_t e = 0; e < a[k].size(); ++e) {
      double x = a[k].get(e), y = b[k].get(e);
      if (std::abs(x - y) > 1e-6 * std::max({1.0, std::abs(x), std::abs(y)}))
        return false;
    }
  }
  return true;
}

} // namespace

struct Tuner::Reference {
  std::vector<Type> params;
  std::vector<Buffer> inputs;
  std::vector<Scalar> scalars;
  std::vector<Buffer> outputs;
  std::size_t arity = 0;
  std::map<TrialParams, Trial> cache;

  // Copies the fixed inputs and returns them with the argument list.
  std::pair<std::vector<Buffer>, std::vector<Arg>> fresh_args() const {
    std::pair<std::vector<Buffer>, std::vector<Arg>> out;
    out.first = inputs;
    std::size_t b = 0, s = 0;
    for (const Type &t : params) {
      if (t.is_memref())
        out.second.emplace_back(&out.first[b++]);
      else
        out.second.emplace_back(scalars[s++]);
    }
    return out;
  }
};

Tuner::Tuner(TuneTask task) : task_(std::move(task)) {
  if (!task_.kernel)
    throw Error(ErrorCode::SignatureMismatch, "tuner task has no kernel");
}

TrialParams Tuner::identity(const ParamSpace &space) {
  return TrialParams{std::vector<std::int64_t>(space.tile_sizes.size(), 1), 1};
}

Tuner::Reference &Tuner::reference() {
  if (ref_)
    return *ref_;
  auto ref = std::make_shared<Reference>();
  Context ctx;
  Operation &module = task_.kernel(ctx);
  ref->params = func_param_types(*find_func(module, task_.func));
  ref->arity = parallel_arity(module, task_.func);

  std::mt19937_64 rng(task_.input_seed);
  for (const Type &t : ref->params) {
    if (t.is_memref()) {
      Buffer b(t.shape(), t.element().kind());
      for (std::size_t k = 0; k < b.size(); ++k) {
        if (b.is_float())
          b.set(k, static_cast<double>(rng() % 2000001) / 1000000.0 - 1.0);
        else
          b.set_int(k, static_cast<std::int64_t>(rng() % 17) - 8);
      }
      ref->inputs.push_back(std::move(b));
    } else if (t.is_float()) {
      ref->scalars.push_back(
          Scalar::real(static_cast<double>(rng() % 2001) / 1000.0 - 1.0, t));
    } else {
      ref->scalars.push_back(
          Scalar::integer(static_cast<std::int64_t>(rng() % 17) - 8, t));
    }
  }

  auto [buffers, args] = ref->fresh_args();
  run(module, task_.func, args, task_.mode);
  ref->outputs = std::move(buffers);
  ref_ = std::move(ref);
  return *ref_;
}

Trial Tuner::score(const TrialParams &params) {
  Reference &ref = reference();
  Trial trial;
  trial.params = params;

  Context ctx;
  Operation &module = task_.kernel(ctx);
  std::vector<PassStats> pass_stats;
  try {
    std::string text =
        instantiate_pipeline(task_.pipeline_template, params, ref.arity);
    pass_stats = run_pipeline(module, text);
  } catch (const Error &e) {
    if (e.code() == ErrorCode::SyntaxError || e.code() == ErrorCode::UnknownPass)
      throw;
    trial.status = TrialStatus::Skipped;
    trial.note = e.what();
    return trial;
  }

  auto [buffers, args] = ref.fresh_args();
  RunResult result;
  try {
    auto start = std::chrono::steady_clock::now();
    result = run(module, task_.func, args, task_.mode);
    result.stats.wall_ms = std::chrono::duration<double, std::milli>(
                               std::chrono::steady_clock::now() - start)
                               .count();
  } catch (const Error &e) {
    if (e.code() != ErrorCode::VerificationFailed)
      throw;
    trial.status = TrialStatus::Skipped;
    trial.note = e.what();
    return trial;
  }
  if (!same_outputs(buffers, ref.outputs))
    throw Error(ErrorCode::PassFailure,
                "transformed kernel diverges from the untransformed kernel "
                "for tiles/unroll '" +
                    instantiate_pipeline("{tiles}/{unroll}", params, ref.arity) +
                    "'");

  trial.digest = digest_of(result.stats);
  trial.cost = task_.wall_time ? result.stats.wall_ms
                               : cost(result.stats, task_.model);

  bool conforming = true;
  for (const auto &s : pass_stats)
    if (s.skipped)
      conforming = false;
  if (!conforming && baseline_cost_)
    trial.cost = baseline_cost_;
  return trial;
}

Trial Tuner::evaluate(const TrialParams &params) {
  Reference &ref = reference();
  if (!baseline_cost_ || baseline_dims_ != params.tiles.size()) {
    TrialParams id{std::vector<std::int64_t>(params.tiles.size(), 1), 1};
    Trial base = score(id);
    if (base.status != TrialStatus::Evaluated)
      throw Error(ErrorCode::PassFailure,
                  "identity configuration failed: " + base.note);
    baseline_cost_ = base.cost;
    baseline_dims_ = params.tiles.size();
    ref.cache.clear();
    ref.cache[id] = base;
  }
  if (!task_.wall_time) {
    auto it = ref.cache.find(params);
    if (it != ref.cache.end())
      return it->second;
  }
  Trial trial = score(params);
  if (!task_.wall_time)
    ref.cache[params] = trial;
  return trial;
}

std::pair<Trial, std::vector<Trial>> Tuner::search(const ParamSpace &space,
                                                   std::size_t budget,
                                                   std::uint64_t seed,
                                                   StrategyConfig strategy) {
  if (space.size() == 0)
    throw Error(ErrorCode::EmptySpace, "parameter space has no points");
  if (budget < 1)
    throw Error(ErrorCode::EmptySpace, "search budget must be at least 1");

  std::vector<Trial> log;
  auto record = [&](const TrialParams &p) -> const Trial & {
    Trial t = evaluate(p);
    t.idx = log.size();
    t.seed = seed;
    log.push_back(std::move(t));
    return log.back();
  };

  std::mt19937_64 rng(seed);
  auto pick = [&](const std::vector<std::int64_t> &list) {
    return list[rng() % list.size()];
  };
  auto sample = [&] {
    TrialParams p;
    for (const auto &dim : space.tile_sizes)
      p.tiles.push_back(pick(dim));
    p.unroll = pick(space.unroll_factors);
    return p;
  };
  // Threshold on the raw 64-bit draw so the comparison is exact.
  auto coin = [&] {
    double p = std::clamp(strategy.mutation_probability, 0.0, 1.0);
    return static_cast<double>(rng() >> 11) * 0x1.0p-53 < p;
  };

  const Trial &base = record(identity(space));
  TrialParams parent = base.params;
  std::optional<double> parent_cost = base.cost;

  while (log.size() < budget) {
    TrialParams p;
    if (strategy.kind == Strategy::Random) {
      p = sample();
    } else {
      p = parent;
      for (std::size_t d = 0; d < space.tile_sizes.size(); ++d)
        if (coin())
          p.tiles[d] = pick(space.tile_sizes[d]);
      if (coin())
        p.unroll = pick(space.unroll_factors);
    }
    const Trial &t = record(p);
    if (t.cost && (!parent_cost || *t.cost < *parent_cost)) {
      parent = t.params;
      parent_cost = t.cost;
    }
  }

  const Trial *best = &log.front();
  for (const Trial &t : log)
    if (t.cost && (!best->cost || *t.cost < *best->cost))
      best = &t;
  return {*best, std::move(log)};
}

std::string trial_json(const Trial &trial) {
  nlohmann::json j = {
      {"idx", trial.idx},
      {"params", {{"tiles", trial.params.tiles}, {"unroll", trial.params.unroll}}},
      {"cost", nullptr},
      {"status", trial.status == TrialStatus::Evaluated ? "evaluated" : "skipped"},
      {"seed", trial.seed},
      {"digest", trial.digest}};
  if (trial.cost)
    j["cost"] = *trial.cost;
  return j.dump();
}

void persist(const std::vector<Trial> &log, const std::string &path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out)
    throw Error(ErrorCode::IOError, "cannot write '" + path + "'");
  for (const Trial &t : log)
    out << trial_json(t) << '\n';
  if (!out)
    throw Error(ErrorCode::IOError, "write to '" + path + "' failed");
}

std::vector<Trial> load_log(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorCode::IOError, "cannot read '" + path + "'");
  std::vector<Trial> log;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos)
      continue;
    try {
      auto j = nlohmann::json::parse(line);
      Trial t;
      t.idx = j.at("idx").get<std::size_t>();
      t.params.tiles = j.at("params").at("tiles").get<std::vector<std::int64_t>>();
      t.params.unroll = j.at("params").at("unroll").get<std::int64_t>();
      std::string status = j.at("status").get<std::string>();
      if (status == "evaluated")
        t.status = TrialStatus::Evaluated;
      else if (status == "skipped")
        t.status = TrialStatus::Skipped;
      else
        throw std::runtime_error("unknown status '" + status + "'");
      if (!j.at("cost").is_null())
        t.cost = j.at("cost").get<double>();
      if (t.cost.has_value() != (t.status == TrialStatus::Evaluated))
        throw std::runtime_error("cost must be present iff evaluated");
      t.seed = j.at("seed").get<std::uint64_t>();
      if (j.contains("digest"))
        t.digest = j.at("digest").get<std::string>();
      log.push_back(std::move(t));
    } catch (const std::exception &e) {
      throw Error(ErrorCode::MalformedLine,
                  "line " + std::to_string(lineno) + ": " + e.what(),
                  Location{path, lineno, 1});
    }
  }
  return log;
}

} // namespace staircase
