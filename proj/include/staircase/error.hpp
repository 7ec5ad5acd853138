#pragma once

#include <optional>
#include <stdexcept>
#include <string>

namespace staircase {

/// Source position of a host statement or of a line in a printed module.
struct Location {
  std::string file;
  int line = 1;
  int column = 0;

  static Location unknown() { return Location{"<unknown>", 1, 0}; }
  std::string str() const;
  friend bool operator==(const Location &, const Location &) = default;
};

enum class ErrorCode {
  DuplicateDialect,
  UnknownOperation,
  InvalidType,
  TypeMismatch,
  DominanceViolation,
  HasUses,
  InvalidBound,
  ArityMismatch,
  RankMismatch,
  DuplicateSymbol,
  UnknownSymbol,
  SignatureMismatch,
  UnannotatedParameter,
  UnsupportedConstruct,
  CaptureLeak,
  VerificationFailed,
  UnbalancedMarkers,
  RewriteUnsupported,
  SyntaxError,
  UnknownPass,
  PassFailure,
  InvalidFactor,
  OutliningUnsupported,
  OutOfBounds,
  MissingMain,
  ModeUnsupported,
  EmptySpace,
  IOError,
  MalformedLine,
  HostError,
};

const char *to_string(ErrorCode code);

/// The single exception type thrown by the kit. `code()` identifies the
/// failure class; `location()` is set whenever the failure can be pinned to a
/// host source line or a printed-IR line.
class Error : public std::runtime_error {
public:
  Error(ErrorCode code, std::string detail,
        std::optional<Location> loc = std::nullopt);

  ErrorCode code() const { return code_; }
  const std::string &detail() const { return detail_; }
  const std::optional<Location> &location() const { return loc_; }

private:
  ErrorCode code_;
  std::string detail_;
  std::optional<Location> loc_;
};

} // namespace staircase
