#include "doctest.h"

#include "../support/corpus.hpp"
#include "staircase/interp.hpp"
#include "staircase/tuner.hpp"

#include <filesystem>
#include <fstream>

using namespace staircase;
using namespace staircase::testing;

namespace {

TuneTask corpus_task(const std::string &file, const std::string &fn) {
  TuneTask task;
  task.kernel = [file, fn](Context &ctx) -> Operation & {
    return capture_corpus(file, fn, ctx);
  };
  task.func = fn;
  task.input_seed = 7;
  return task;
}

ParamSpace conv_space() {
  return ParamSpace{{{1, 2, 4, 8, 16}, {1, 2, 4, 8, 16}}, {1, 2, 4}};
}

std::string tmp_path(const std::string &name) {
  return (std::filesystem::temp_directory_path() / ("staircase_" + name)).string();
}

} // namespace

TEST_CASE("param space size and pipeline instantiation") {
  CHECK(conv_space().size() == 75);
  CHECK(ParamSpace{{{1, 2}, {}}, {1}}.size() == 0);

  TrialParams p{{8, 16}, 2};
  CHECK(instantiate_pipeline(default_pipeline_template, p, 4) ==
        "builtin.module(func.func(scf-parallel-loop-tiling{sizes=1,1,8,16},"
        "loop-unroll{factor=2}))");
  CHECK(instantiate_pipeline("{tiles}|{unroll}", p, 0) == "8,16|2");
  CHECK_THROWS_AS(instantiate_pipeline("builtin.module(canonicalize)", p, 2),
                  Error);
}

TEST_CASE("identity point on a kernel without parallel loops costs the same as the untransformed kernel") {
  TuneTask task = corpus_task("matmul.py", "matmul");
  Tuner tuner(task);
  Trial t = tuner.evaluate(TrialParams{{1, 1}, 1});
  REQUIRE(t.status == TrialStatus::Evaluated);

  Context ctx;
  Operation &m = task.kernel(ctx);
  Buffer A({4, 16}, TypeKind::F32), B({16, 8}, TypeKind::F32),
      C({4, 8}, TypeKind::F32);
  double untransformed = cost(run(m, "matmul", {&A, &B, &C}).stats);
  CHECK(*t.cost == untransformed);

  Trial u = tuner.evaluate(TrialParams{{1, 1}, 4});
  REQUIRE(u.cost);
  CHECK(*u.cost < untransformed);
  CHECK(u.digest != t.digest);
}

TEST_CASE("conv evaluation: dividing tiles beat the baseline, non-conforming points score it") {
  Tuner tuner(corpus_task("conv.py", "conv2d_nchw_fchw"));
  Trial base = tuner.evaluate(TrialParams{{1, 1}, 1});
  REQUIRE(base.cost);

  Trial tiled = tuner.evaluate(TrialParams{{8, 8}, 1});
  REQUIRE(tiled.status == TrialStatus::Evaluated);
  CHECK(*tiled.cost < *base.cost);

  Trial seven = tuner.evaluate(TrialParams{{7, 8}, 1});
  CHECK(seven.status == TrialStatus::Evaluated);
  CHECK(*seven.cost == *base.cost);

  // Innermost trip count is 3.
  Trial unrolled = tuner.evaluate(TrialParams{{8, 8}, 2});
  CHECK(*unrolled.cost == *base.cost);
}

TEST_CASE("failing pipelines give skipped trials that consume budget") {
  Tuner tuner(corpus_task("matmul.py", "matmul"));
  Trial bad = tuner.evaluate(TrialParams{{1}, 0});
  CHECK(bad.status == TrialStatus::Skipped);
  CHECK_FALSE(bad.cost.has_value());
  CHECK(bad.note.find("factor") != std::string::npos);

  auto [best, log] = tuner.search(ParamSpace{{{1}}, {0}}, 5, 3);
  REQUIRE(log.size() == 5);
  CHECK(log[0].status == TrialStatus::Evaluated);
  for (std::size_t k = 1; k < log.size(); ++k)
    CHECK(log[k].status == TrialStatus::Skipped);
  CHECK(best == log[0]);
}

TEST_CASE("search: baseline first, best-so-far monotone, deterministic") {
  for (Strategy kind : {Strategy::Random, Strategy::OnePlusOneES}) {
    CAPTURE(static_cast<int>(kind));
    auto run_once = [&] {
      Tuner tuner(corpus_task("conv.py", "conv2d_nchw_fchw"));
      return tuner.search(conv_space(), 20, 11, StrategyConfig{kind, 0.5});
    };
    auto [best, log] = run_once();
    auto [best2, log2] = run_once();
    CHECK(log == log2);
    CHECK(best == best2);

    REQUIRE(log.size() == 20);
    CHECK(log[0].params == TrialParams{{1, 1}, 1});
    double running = *log[0].cost;
    for (std::size_t k = 0; k < log.size(); ++k) {
      CHECK(log[k].idx == k);
      CHECK(log[k].seed == 11);
      for (std::size_t d = 0; d < 2; ++d)
        CHECK(log[k].params.tiles[d] > 0);
      if (log[k].cost) {
        double next = std::min(running, *log[k].cost);
        CHECK(next <= running);
        running = next;
      }
    }
    CHECK(*best.cost == running);
    CHECK(*best.cost <= *log[0].cost);
  }
}

TEST_CASE("search edge cases") {
  Tuner tuner(corpus_task("matmul.py", "matmul"));
  auto [best, log] = tuner.search(ParamSpace{{{1, 2}}, {1, 2, 4}}, 1, 5);
  REQUIRE(log.size() == 1);
  CHECK(best == log[0]);

  CHECK_THROWS_AS(tuner.search(ParamSpace{{{1, 2}}, {}}, 3, 5), Error);
  try {
    ParamSpace empty;
    empty.tile_sizes = {std::vector<std::int64_t>{}};
    empty.unroll_factors = {1};
    tuner.search(empty, 3, 5);
    FAIL("expected EmptySpace");
  } catch (const Error &e) {
    CHECK(e.code() == ErrorCode::EmptySpace);
  }

  auto [b1, l1] = tuner.search(ParamSpace{{{1, 2}}, {1, 2, 4}}, 30, 1);
  auto [b2, l2] = tuner.search(ParamSpace{{{1, 2}}, {1, 2, 4}}, 30, 2);
  CHECK_FALSE(l1 == l2);
}

TEST_CASE("JSONL log round trip and errors") {
  Tuner tuner(corpus_task("matmul.py", "matmul"));
  auto [best, log] = tuner.search(ParamSpace{{{1, 2, 4}, {1, 2}}, {0, 1, 2, 4, 8}},
                                  200, 9);
  REQUIRE(log.size() == 200);
  bool any_skipped = false;
  for (const auto &t : log)
    any_skipped |= t.status == TrialStatus::Skipped;
  CHECK(any_skipped);

  std::string path = tmp_path("log.jsonl");
  persist(log, path);
  CHECK(load_log(path) == log);

  persist({}, path);
  CHECK(std::filesystem::file_size(path) == 0);
  CHECK(load_log(path).empty());

  {
    std::ofstream out(path);
    out << trial_json(log[0]) << "\n";
    std::string line = trial_json(log[1]);
    out << line.substr(0, line.size() / 2) << "\n";
  }
  try {
    load_log(path);
    FAIL("expected MalformedLine");
  } catch (const Error &e) {
    CHECK(e.code() == ErrorCode::MalformedLine);
    REQUIRE(e.location());
    CHECK(e.location()->line == 2);
    CHECK(e.detail().rfind("line 2", 0) == 0);
  }

  try {
    load_log(tmp_path("does_not_exist.jsonl"));
    FAIL("expected IOError");
  } catch (const Error &e) {
    CHECK(e.code() == ErrorCode::IOError);
  }
  std::filesystem::remove(path);
}
