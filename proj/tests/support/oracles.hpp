#pragma once

// Reference implementations written directly from the math, used to check
// interpreter output.

#include "staircase/interp.hpp"

#include <cmath>
#include <cstdint>
#include <random>

namespace staircase::testing {

/// Uniform values in [-1, 1) for float buffers, [-8, 8] for integers.
inline Buffer random_buffer(std::vector<std::int64_t> shape, TypeKind dtype,
                            std::mt19937_64 &rng) {
  Buffer b(std::move(shape), dtype);
  for (std::size_t k = 0; k < b.size(); ++k) {
    if (b.is_float())
      b.set(k, static_cast<double>(rng() % 2000001) / 1000000.0 - 1.0);
    else
      b.set_int(k, static_cast<std::int64_t>(rng() % 17) - 8);
  }
  return b;
}

inline Buffer filled(std::vector<std::int64_t> shape, TypeKind dtype, double v) {
  Buffer b(std::move(shape), dtype);
  for (std::size_t k = 0; k < b.size(); ++k)
    b.set(k, v);
  return b;
}

/// C[i, k] += A[i, j] * B[j, k], accumulating over j in order.
inline void matmul_oracle(const Buffer &A, const Buffer &B, Buffer &C) {
  std::int64_t M = A.shape()[0], N = A.shape()[1], K = B.shape()[1];
  for (std::int64_t i = 0; i < M; ++i)
    for (std::int64_t k = 0; k < K; ++k)
      for (std::int64_t j = 0; j < N; ++j) {
        auto a = static_cast<std::size_t>(i * N + j);
        auto b = static_cast<std::size_t>(j * K + k);
        auto c = static_cast<std::size_t>(i * K + k);
        if (C.dtype() == TypeKind::F32) {
          float prod = static_cast<float>(A.get(a)) * static_cast<float>(B.get(b));
          C.set(c, static_cast<float>(C.get(c)) + prod);
        } else if (C.is_float()) {
          C.set(c, C.get(c) + A.get(a) * B.get(b));
        } else {
          C.set_int(c, C.get_int(c) + A.get_int(a) * B.get_int(b));
        }
      }
}

/// Valid NCHW/FCHW convolution accumulated into `out`:
/// out[n, co, h, w] += sum over ci, ki, kj of in[n, ci, h + ki, w + kj] *
/// ker[co, ci, ki, kj], in the order ci, ki, kj.
inline void conv_oracle(const Buffer &in, const Buffer &ker, Buffer &out) {
  auto at = [](const Buffer &b, std::int64_t i0, std::int64_t i1,
               std::int64_t i2, std::int64_t i3) {
    const auto &s = b.shape();
    return static_cast<std::size_t>(((i0 * s[1] + i1) * s[2] + i2) * s[3] + i3);
  };
  const auto &os = out.shape();
  std::int64_t CI = in.shape()[1], K = ker.shape()[2];
  for (std::int64_t n = 0; n < os[0]; ++n)
    for (std::int64_t co = 0; co < os[1]; ++co)
      for (std::int64_t h = 0; h < os[2]; ++h)
        for (std::int64_t w = 0; w < os[3]; ++w)
          for (std::int64_t ci = 0; ci < CI; ++ci)
            for (std::int64_t ki = 0; ki < K; ++ki)
              for (std::int64_t kj = 0; kj < K; ++kj) {
                auto o = at(out, n, co, h, w);
                auto x = at(in, n, ci, h + ki, w + kj);
                auto y = at(ker, co, ci, ki, kj);
                if (out.dtype() == TypeKind::F32) {
                  float prod = static_cast<float>(in.get(x)) *
                               static_cast<float>(ker.get(y));
                  out.set(o, static_cast<float>(out.get(o)) + prod);
                } else if (out.is_float()) {
                  out.set(o, out.get(o) + in.get(x) * ker.get(y));
                } else {
                  out.set_int(o, out.get_int(o) + in.get_int(x) * ker.get_int(y));
                }
              }
}

/// Element-wise comparison: exact for integers, relative `tol` for floats.
inline bool close(const Buffer &a, const Buffer &b, double tol = 1e-6) {
  if (a.shape() != b.shape() || a.dtype() != b.dtype())
    return false;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (!a.is_float()) {
      if (a.get_int(k) != b.get_int(k))
        return false;
      continue;
    }
    double x = a.get(k), y = b.get(k);
    double scale = std::max({std::abs(x), std::abs(y), 1e-30});
    if (std::abs(x - y) > tol * scale && std::abs(x - y) > 1e-12)
      return false;
  }
  return true;
}

} // namespace staircase::testing
