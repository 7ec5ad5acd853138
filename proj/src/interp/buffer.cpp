#include "staircase/interp.hpp"

#include <json.hpp>

#include <fstream>
#include <limits>
#include <sstream>

namespace staircase {

Buffer::Buffer(std::vector<std::int64_t> shape, TypeKind dtype)
    : shape_(std::move(shape)), dtype_(dtype) {
  // Validates extents and element kind.
  Type t = Type::memref(shape_, Type::scalar(dtype));
  strides_.assign(shape_.size(), 1);
  for (std::size_t d = shape_.size(); d-- > 1;)
    strides_[d - 1] = strides_[d] * shape_[d];
  if (is_float())
    f_.assign(static_cast<std::size_t>(t.num_elements()), 0.0);
  else
    i_.assign(static_cast<std::size_t>(t.num_elements()), 0);
}

bool Buffer::is_float() const {
  return dtype_ == TypeKind::F32 || dtype_ == TypeKind::F64;
}

std::size_t Buffer::size() const { return is_float() ? f_.size() : i_.size(); }

double Buffer::get(std::size_t flat) const {
  return is_float() ? f_[flat] : static_cast<double>(i_[flat]);
}

void Buffer::set(std::size_t flat, double v) {
  if (dtype_ == TypeKind::F32)
    f_[flat] = static_cast<float>(v);
  else if (is_float())
    f_[flat] = v;
  else
    i_[flat] = static_cast<std::int64_t>(v);
}

std::int64_t Buffer::get_int(std::size_t flat) const {
  return is_float() ? static_cast<std::int64_t>(f_[flat]) : i_[flat];
}

void Buffer::set_int(std::size_t flat, std::int64_t v) {
  if (is_float())
    set(flat, static_cast<double>(v));
  else if (dtype_ == TypeKind::I32)
    i_[flat] = static_cast<std::int32_t>(v);
  else
    i_[flat] = v;
}

namespace {

TypeKind parse_dtype(const std::string &s) {
  if (s == "f32")
    return TypeKind::F32;
  if (s == "f64")
    return TypeKind::F64;
  if (s == "i32")
    return TypeKind::I32;
  if (s == "i64")
    return TypeKind::I64;
  throw Error(ErrorCode::TypeMismatch, "unsupported buffer dtype '" + s + "'");
}

} // namespace

Buffer buffer_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception &e) {
    throw Error(ErrorCode::TypeMismatch, std::string("buffer JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("shape") || !j.contains("dtype") ||
      !j.contains("data") || !j["shape"].is_array() || !j["dtype"].is_string() ||
      !j["data"].is_array())
    throw Error(ErrorCode::TypeMismatch,
                "buffer JSON needs \"shape\", \"dtype\" and \"data\"");
  std::vector<std::int64_t> shape;
  for (const auto &e : j["shape"]) {
    if (!e.is_number_integer())
      throw Error(ErrorCode::TypeMismatch, "buffer shape must hold integers");
    shape.push_back(e.get<std::int64_t>());
  }
  Buffer b(shape, parse_dtype(j["dtype"].get<std::string>()));
  const auto &data = j["data"];
  if (data.size() != b.size())
    throw Error(ErrorCode::TypeMismatch,
                "buffer has " + std::to_string(data.size()) +
                    " elements, shape needs " + std::to_string(b.size()));
  for (std::size_t k = 0; k < data.size(); ++k) {
    if (!data[k].is_number())
      throw Error(ErrorCode::TypeMismatch, "buffer data must be numeric");
    if (b.is_float()) {
      b.set(k, data[k].get<double>());
    } else {
      if (!data[k].is_number_integer())
        throw Error(ErrorCode::TypeMismatch,
                    "integer buffer holds a non-integer value");
      std::int64_t v = data[k].get<std::int64_t>();
      if (b.dtype() == TypeKind::I32 &&
          (v < std::numeric_limits<std::int32_t>::min() ||
           v > std::numeric_limits<std::int32_t>::max()))
        throw Error(ErrorCode::TypeMismatch, "value out of range for i32");
      b.set_int(k, v);
    }
  }
  return b;
}

std::string buffer_to_json(const Buffer &buffer) {
  nlohmann::json j;
  j["shape"] = buffer.shape();
  j["dtype"] = to_string(buffer.dtype());
  if (buffer.is_float())
    j["data"] = buffer.floats();
  else
    j["data"] = buffer.ints();
  return j.dump();
}

Buffer load_buffer(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorCode::IOError, "cannot read '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return buffer_from_json(ss.str());
}

void save_buffer(const Buffer &buffer, const std::string &path) {
  std::ofstream out(path);
  if (!out)
    throw Error(ErrorCode::IOError, "cannot write '" + path + "'");
  out << buffer_to_json(buffer) << "\n";
  if (!out)
    throw Error(ErrorCode::IOError, "cannot write '" + path + "'");
}

} // namespace staircase
