#pragma once

// Derivative-free search over tile sizes and unroll factors. Candidates are
// scored by transforming the kernel, interpreting it on fixed inputs and
// applying the cost model.

#include "staircase/interp.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace staircase {

struct ParamSpace {
  /// Candidate sizes per tiled dimension.
  std::vector<std::vector<std::int64_t>> tile_sizes;
  std::vector<std::int64_t> unroll_factors;

  /// Number of points in the Cartesian product.
  std::size_t size() const;
};

struct TrialParams {
  std::vector<std::int64_t> tiles;
  std::int64_t unroll = 1;
  friend bool operator==(const TrialParams &, const TrialParams &) = default;
  friend auto operator<=>(const TrialParams &, const TrialParams &) = default;
};

enum class TrialStatus { Evaluated, Skipped };

struct Trial {
  std::size_t idx = 0;
  TrialParams params;
  /// Present iff status == Evaluated.
  std::optional<double> cost;
  TrialStatus status = TrialStatus::Evaluated;
  std::uint64_t seed = 0;
  /// Hash of the interpreter's op counts for the transformed kernel.
  std::string digest;
  /// Why a skipped trial failed; not persisted.
  std::string note;

  friend bool operator==(const Trial &a, const Trial &b) {
    return a.idx == b.idx && a.params == b.params && a.cost == b.cost &&
           a.status == b.status && a.seed == b.seed && a.digest == b.digest;
  }
};

enum class Strategy { Random, OnePlusOneES };

struct StrategyConfig {
  Strategy kind = Strategy::Random;
  /// Per-coordinate resampling probability of the (1+1)-ES.
  double mutation_probability = 0.5;
};

/// Default template: tiling then unrolling inside each function.
inline constexpr const char *default_pipeline_template =
    "builtin.module(func.func(scf-parallel-loop-tiling{sizes={tiles}},"
    "loop-unroll{factor={unroll}}))";

struct TuneTask {
  /// Builds a fresh copy of the kernel module in the given context.
  std::function<Operation &(Context &)> kernel;
  std::string func;
  /// Must contain `{tiles}` and `{unroll}`.
  std::string pipeline_template = default_pipeline_template;
  ExecMode mode;
  /// Seed of the fixed random inputs.
  std::uint64_t input_seed = 0;
  CostModel model;
  /// Score by wall time instead of the cost model (not deterministic).
  bool wall_time = false;
};

/// Substitutes the placeholders. Tile lists shorter than `arity` are padded
/// on the left with 1.
std::string instantiate_pipeline(const std::string &pipeline_template,
                                 const TrialParams &params, std::size_t arity);

class Tuner {
public:
  explicit Tuner(TuneTask task);

  /// Unit tiles (one per space dimension) and factor 1.
  static TrialParams identity(const ParamSpace &space);

  /// Transforms, verifies, interprets and scores `params`. Pipeline and
  /// verification failures give a Skipped trial. Points where a pass skipped
  /// its target score the baseline cost. A transformed kernel whose outputs
  /// differ from the untransformed kernel's throws PassFailure.
  Trial evaluate(const TrialParams &params);

  /// Trial 0 is always the identity point. Throws EmptySpace.
  std::pair<Trial, std::vector<Trial>> search(const ParamSpace &space,
                                              std::size_t budget,
                                              std::uint64_t seed,
                                              StrategyConfig strategy = {});

private:
  struct Reference;
  std::shared_ptr<Reference> ref_;
  TuneTask task_;
  std::optional<double> baseline_cost_;
  std::size_t baseline_dims_ = 0;

  Reference &reference();
  Trial score(const TrialParams &params);
};

/// One JSON object per line, in trial order.
void persist(const std::vector<Trial> &log, const std::string &path);
/// Throws IOError or MalformedLine (1-based line number in the detail and
/// location).
std::vector<Trial> load_log(const std::string &path);
std::string trial_json(const Trial &trial);

} // namespace staircase
