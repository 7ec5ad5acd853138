#include "staircase/passes.hpp"
#include "transforms.hpp"

#include "staircase/textio.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <chrono>

namespace staircase {

bool operator==(const PipelineItem &a, const PipelineItem &b) {
  return a.pass == b.pass && a.params == b.params && a.scope == b.scope;
}

bool operator==(const PassScope &a, const PassScope &b) {
  return a.anchor == b.anchor && a.items == b.items;
}

bool Pipeline::empty() const { return root.items.empty(); }

const std::vector<PassInfo> &registered_passes() {
  static const std::vector<PassInfo> passes = {
      {"lower-affine", {}, "affine.for to scf.for with constant bounds"},
      {"loop-unroll", {"factor"}, "unroll innermost constant-trip loops"},
      {"scf-parallel-loop-tiling", {"sizes"},
       "split scf.parallel into tile origins and intra-tile offsets"},
      {"gpu-map-parallel-loops", {},
       "map nested scf.parallel to blocks, threads, sequential"},
      {"gpu-kernel-outlining", {}, "move mapped loops into gpu.func kernels"},
      {"canonicalize", {}, "fold constants, dedup constants, drop dead ops"},
  };
  return passes;
}

namespace {

const PassInfo *find_pass(std::string_view name) {
  for (const auto &p : registered_passes())
    if (p.name == name)
      return &p;
  return nullptr;
}

void check_pass(const std::string &name, const PassParams &params) {
  const PassInfo *info = find_pass(name);
  if (!info)
    throw Error(ErrorCode::UnknownPass, "unknown pass '" + name + "'");
  for (const auto &[k, v] : params)
    if (std::find(info->params.begin(), info->params.end(), k) ==
        info->params.end())
      throw Error(ErrorCode::SyntaxError,
                  "pass '" + name + "' has no parameter '" + k + "'");
}

class PipelineParser {
public:
  explicit PipelineParser(std::string_view text) : s_(text) {}

  Pipeline parse() {
    Pipeline p;
    skip_ws();
    if (at_end())
      return p;
    PassScope scope;
    std::string anchor = name();
    expect('(');
    scope.anchor = anchor;
    parse_items(scope);
    skip_ws();
    if (!at_end())
      fail("trailing characters");
    if (scope.anchor == "builtin.module")
      p.root = std::move(scope);
    else
      p.root.items.push_back(PipelineItem{"", {}, {std::move(scope)}});
    return p;
  }

private:
  bool at_end() const { return pos_ >= s_.size(); }
  char peek() const { return at_end() ? '\0' : s_[pos_]; }
  void skip_ws() {
    while (!at_end() && std::isspace(static_cast<unsigned char>(s_[pos_])))
      ++pos_;
  }
  [[noreturn]] void fail(const std::string &msg) const {
    throw Error(ErrorCode::SyntaxError,
                "pipeline column " + std::to_string(pos_ + 1) + ": " + msg,
                Location{"<pipeline>", 1, static_cast<int>(pos_ + 1)});
  }
  void expect(char c) {
    skip_ws();
    if (peek() != c)
      fail(std::string("expected '") + c + "'");
    ++pos_;
  }
  std::string name() {
    skip_ws();
    std::size_t start = pos_;
    while (!at_end() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) ||
                         s_[pos_] == '-' || s_[pos_] == '_' || s_[pos_] == '.'))
      ++pos_;
    if (start == pos_)
      fail("expected a pass or anchor name");
    return std::string(s_.substr(start, pos_ - start));
  }

  // After '(' of a scope; consumes through ')'.
  void parse_items(PassScope &scope) {
    skip_ws();
    if (peek() == ')') {
      ++pos_;
      return;
    }
    while (true) {
      std::string n = name();
      skip_ws();
      if (peek() == '(') {
        ++pos_;
        PassScope child;
        child.anchor = n;
        parse_items(child);
        scope.items.push_back(PipelineItem{"", {}, {std::move(child)}});
      } else {
        PassParams params;
        if (peek() == '{')
          params = parse_params();
        std::size_t at = pos_;
        try {
          check_pass(n, params);
        } catch (Error &e) {
          pos_ = at;
          if (e.code() == ErrorCode::UnknownPass)
            throw;
          fail(e.detail());
        }
        scope.items.push_back(PipelineItem{n, std::move(params), {}});
      }
      skip_ws();
      if (peek() == ',') {
        ++pos_;
        continue;
      }
      expect(')');
      return;
    }
  }

  // `{k=v,k=v1,v2}`: a token without '=' continues the previous value.
  PassParams parse_params() {
    ++pos_;
    PassParams out;
    std::string token;
    auto flush = [&] {
      auto eq = token.find('=');
      if (eq == std::string::npos) {
        if (out.empty())
          fail("expected key=value");
        out.back().second += "," + token;
      } else {
        out.emplace_back(token.substr(0, eq), token.substr(eq + 1));
      }
      token.clear();
    };
    while (true) {
      if (at_end())
        fail("unterminated '{'");
      char c = s_[pos_++];
      if (std::isspace(static_cast<unsigned char>(c)))
        continue;
      if (c == ',' || c == '}') {
        if (token.empty())
          fail("empty parameter");
        flush();
        if (c == '}')
          return out;
      } else {
        token += c;
      }
    }
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

void print_scope(const PassScope &scope, std::string &out) {
  out += scope.anchor + "(";
  for (std::size_t i = 0; i < scope.items.size(); ++i) {
    if (i)
      out += ",";
    const PipelineItem &item = scope.items[i];
    if (item.is_scope()) {
      print_scope(item.scope.front(), out);
      continue;
    }
    out += item.pass;
    if (!item.params.empty()) {
      out += "{";
      for (std::size_t j = 0; j < item.params.size(); ++j) {
        if (j)
          out += ",";
        out += item.params[j].first + "=" + item.params[j].second;
      }
      out += "}";
    }
  }
  out += ")";
}

bool matches(const Operation &op, const std::string &anchor) {
  return op.name() == anchor;
}

// Ops matching `anchor` nested under `root`, in pre-order, without descending
// into matches.
void collect_anchors(Operation &root, const std::string &anchor,
                     std::vector<Operation *> &out) {
  for (std::size_t r = 0; r < root.num_regions(); ++r)
    for (std::size_t b = 0; b < root.region(r).num_blocks(); ++b)
      for (const auto &op : root.region(r).block(b).operations()) {
        if (matches(*op, anchor))
          out.push_back(op.get());
        else
          collect_anchors(*op, anchor, out);
      }
}

struct Step {
  std::vector<std::string> path;
  const PipelineItem *item;
};

void flatten(const PassScope &scope, std::vector<std::string> path,
             std::vector<Step> &out) {
  path.push_back(scope.anchor);
  for (const auto &item : scope.items) {
    if (item.is_scope())
      flatten(item.scope.front(), path, out);
    else
      out.push_back(Step{path, &item});
  }
}

std::vector<Operation *> resolve(Operation &module,
                                 const std::vector<std::string> &path) {
  std::vector<Operation *> cur;
  if (matches(module, path.front()))
    cur.push_back(&module);
  else
    collect_anchors(module, path.front(), cur);
  for (std::size_t i = 1; i < path.size(); ++i) {
    std::vector<Operation *> next;
    for (Operation *op : cur)
      collect_anchors(*op, path[i], next);
    cur = std::move(next);
  }
  return cur;
}

std::string join_path(const std::vector<std::string> &path) {
  std::string s;
  for (const auto &p : path)
    s += (s.empty() ? "" : "/") + p;
  return s;
}

} // namespace

Pipeline parse_pipeline(std::string_view text) {
  return PipelineParser(text).parse();
}

std::string to_string(const Pipeline &pipeline) {
  std::string out;
  print_scope(pipeline.root, out);
  return out;
}

PassScope &PipelineBuilder::current() {
  PassScope *s = &pipeline_.root;
  for (std::size_t i : path_)
    s = &s->items[i].scope.front();
  return *s;
}

PipelineBuilder &PipelineBuilder::push_scope(std::string anchor) {
  PassScope &s = current();
  s.items.push_back(PipelineItem{"", {}, {PassScope{std::move(anchor), {}}}});
  path_.push_back(s.items.size() - 1);
  return *this;
}

PipelineBuilder &PipelineBuilder::pop_scope() {
  if (path_.empty())
    throw Error(ErrorCode::SyntaxError, "pop_scope() without an open scope");
  path_.pop_back();
  return *this;
}

PipelineBuilder &PipelineBuilder::add_pass(std::string name, PassParams params) {
  check_pass(name, params);
  current().items.push_back(PipelineItem{std::move(name), std::move(params), {}});
  return *this;
}

std::vector<PassStats> run_pipeline(Operation &module,
                                    const Pipeline &pipeline) {
  std::vector<Step> steps;
  flatten(pipeline.root, {}, steps);
  std::vector<PassStats> stats;
  for (const Step &step : steps) {
    using clock = std::chrono::steady_clock;
    auto start = clock::now();
    PassStats st;
    st.pass = step.item->pass;
    st.anchor = join_path(step.path);
    st.ops_before = count_ops(module);

    std::unique_ptr<Operation> work = module.clone();
    try {
      passes::PassResult result;
      std::vector<Operation *> anchors = resolve(*work, step.path);
      st.anchors = anchors.size();
      for (Operation *anchor : anchors)
        passes::run_pass(st.pass, *anchor, step.item->params, result);
      st.rewrites = result.rewrites;
      st.skipped = result.skipped;
    } catch (const Error &e) {
      switch (e.code()) {
      case ErrorCode::InvalidFactor:
      case ErrorCode::ArityMismatch:
      case ErrorCode::OutliningUnsupported:
      case ErrorCode::PassFailure:
      case ErrorCode::SyntaxError:
        throw;
      default:
        throw Error(ErrorCode::PassFailure,
                    st.pass + ": " + to_string(e.code()) + ": " + e.detail(),
                    e.location());
      }
    } catch (const std::exception &e) {
      throw Error(ErrorCode::PassFailure, st.pass + ": " + e.what());
    }
    auto diags = verify(*work);
    if (!diags.empty())
      throw Error(ErrorCode::PassFailure,
                  st.pass + " produced invalid IR: " + diags.front().str(),
                  diags.front().loc);
    module.swap_contents(*work);

    st.ops_after = count_ops(module);
    st.elapsed_ms =
        std::chrono::duration<double, std::milli>(clock::now() - start).count();
    stats.push_back(std::move(st));
  }
  return stats;
}

std::vector<PassStats> run_pipeline(Operation &module, std::string_view text) {
  return run_pipeline(module, parse_pipeline(text));
}

std::string stats_json(const std::vector<PassStats> &stats, bool include_time) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto &s : stats) {
    nlohmann::json j = {{"pass", s.pass},
                        {"anchor", s.anchor},
                        {"anchors", s.anchors},
                        {"ops_before", s.ops_before},
                        {"ops_after", s.ops_after},
                        {"rewrites", s.rewrites},
                        {"skipped", s.skipped}};
    if (include_time)
      j["elapsed_ms"] = s.elapsed_ms;
    arr.push_back(std::move(j));
  }
  return arr.dump();
}

} // namespace staircase
