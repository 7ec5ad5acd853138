#pragma once

#include "staircase/frontend.hpp"

#include <string>

namespace staircase::testing {

inline std::string corpus_path(const std::string &name) {
  return std::string(STAIRCASE_TEST_DATA) + "/corpus/" + name;
}

/// Captures `fn` from a corpus file into a fresh module of `ctx`.
inline Operation &capture_corpus(const std::string &file, const std::string &fn,
                                 Context &ctx) {
  Program p = Program::from_file(corpus_path(file));
  return *capture(p, fn, ctx).module;
}

} // namespace staircase::testing
