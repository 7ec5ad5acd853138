#pragma once

// Reference executor for lowered IR over host buffers, with per-op metering.

#include "staircase/ir.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace staircase {

/// Dense row-major buffer. Float data is kept as double (rounded to f32 when
/// the element type is f32); integer data as int64.
class Buffer {
public:
  Buffer() = default;
  Buffer(std::vector<std::int64_t> shape, TypeKind dtype);

  const std::vector<std::int64_t> &shape() const { return shape_; }
  const std::vector<std::int64_t> &strides() const { return strides_; }
  TypeKind dtype() const { return dtype_; }
  bool is_float() const;
  std::size_t size() const;
  Type type() const { return Type::memref(shape_, Type::scalar(dtype_)); }

  double get(std::size_t flat) const;
  void set(std::size_t flat, double v);
  std::int64_t get_int(std::size_t flat) const;
  void set_int(std::size_t flat, std::int64_t v);

  std::vector<double> &floats() { return f_; }
  const std::vector<double> &floats() const { return f_; }
  std::vector<std::int64_t> &ints() { return i_; }
  const std::vector<std::int64_t> &ints() const { return i_; }

  friend bool operator==(const Buffer &, const Buffer &) = default;

private:
  std::vector<std::int64_t> shape_;
  std::vector<std::int64_t> strides_;
  TypeKind dtype_ = TypeKind::F64;
  std::vector<double> f_;
  std::vector<std::int64_t> i_;
};

/// `{"shape": [...], "dtype": "f32|f64|i32|i64", "data": [...]}`.
/// Throws TypeMismatch for malformed objects.
Buffer buffer_from_json(std::string_view text);
std::string buffer_to_json(const Buffer &buffer);
/// IOError when the file cannot be read or written.
Buffer load_buffer(const std::string &path);
void save_buffer(const Buffer &buffer, const std::string &path);

struct Scalar {
  Type type = Type::f64();
  std::int64_t i = 0;
  double f = 0.0;

  static Scalar real(double v, Type t = Type::f64()) { return {t, 0, v}; }
  static Scalar integer(std::int64_t v, Type t = Type::i64()) { return {t, v, 0}; }
};

/// Memref arguments are mutated in place.
using Arg = std::variant<Buffer *, Scalar>;

struct ExecMode {
  enum class Kind { Sequential, Worksharing, GpuEmulated };
  Kind kind = Kind::Sequential;
  int workers = 1;

  static ExecMode sequential() { return {}; }
  static ExecMode worksharing(int n) { return {Kind::Worksharing, n}; }
  static ExecMode gpu(int n = 1) { return {Kind::GpuEmulated, n}; }
  /// "sequential", "worksharing:N", "gpu" or "gpu:N".
  static ExecMode parse(std::string_view text);
  std::string str() const;
};

struct ExecStats {
  std::uint64_t ops = 0;
  std::map<std::string, std::uint64_t> per_dialect;
  /// Executed arith ops other than constants.
  std::uint64_t arith = 0;
  std::uint64_t loads = 0;
  std::uint64_t stores = 0;
  /// One per loop iteration, parallel iteration or launched work item.
  std::uint64_t loop_iterations = 0;
  double wall_ms = 0.0;

  /// Counts only; wall time is ignored.
  bool same_counts(const ExecStats &other) const;
  std::string json() const;
};

struct RunResult {
  std::vector<Scalar> results;
  ExecStats stats;
};

/// Executes `func` in `module`. Throws MissingMain, SignatureMismatch,
/// TypeMismatch, OutOfBounds (with the op's location), ModeUnsupported
/// (gpu.launch_func outside gpu mode), VerificationFailed or
/// UnsupportedConstruct for ops without semantics.
RunResult run(const Operation &module, const std::string &func,
              const std::vector<Arg> &args, ExecMode mode = {});

struct RaceConflict {
  /// Linear iteration indices within one parallel loop or launch.
  std::int64_t first = 0;
  std::int64_t second = 0;
  /// Index of the buffer among the function's memref arguments, or -1 for
  /// a buffer allocated during the run.
  int buffer = -1;
  std::int64_t offset = 0;
  bool write_write = false;
  Location loc;
};

/// Sequentially simulates the function (mutating `args` like `run` does),
/// recording per-iteration read and write sets of every scf.parallel and
/// gpu.launch_func. Reports at most `limit` conflicts.
std::vector<RaceConflict> check_races(const Operation &module,
                                      const std::string &func,
                                      const std::vector<Arg> &args,
                                      std::size_t limit = 64);

struct CostModel {
  double arith = 1.0;
  double memory = 4.0;
  double loop = 50.0;
};

double cost(const ExecStats &stats, const CostModel &model = {});

} // namespace staircase
