#pragma once

// Row-times-matrix accumulation shared by the serial and parallel kernels so both follow the
// same floating-point operation order. Term k goes into partial sum k mod 4 and the partial sums
// are combined as (s0 + s1) + (s2 + s3). Four independent chains keep the adder pipeline busy.

#include <algorithm>
#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "iterflow/kernels.hpp"
#include "iterflow/matrix.hpp"
#include "vexp.hpp"

namespace iterflow::kernels::detail {

inline constexpr std::size_t kChains = 4;

// Columns [0, W) of a row-major x with row stride `stride`.
template <std::size_t W, class Coef>
void accumulate_fixed(std::size_t n, Coef&& coef, const double* x, std::size_t stride, double* y) {
  std::array<std::array<double, W>, kChains> s{};
  std::size_t k = 0;
  for (; k + kChains <= n; k += kChains) {
    for (std::size_t u = 0; u < kChains; ++u) {
      const double a = coef(k + u);
      const double* xk = x + (k + u) * stride;
      for (std::size_t c = 0; c < W; ++c) s[u][c] += a * xk[c];
    }
  }
  for (std::size_t u = 0; k < n; ++k, ++u) {
    const double a = coef(k);
    const double* xk = x + k * stride;
    for (std::size_t c = 0; c < W; ++c) s[u][c] += a * xk[c];
  }
  for (std::size_t c = 0; c < W; ++c) y[c] = (s[0][c] + s[1][c]) + (s[2][c] + s[3][c]);
}

template <class Coef>
void accumulate_narrow(std::size_t n, std::size_t width, Coef&& coef, const double* x,
                       std::size_t stride, double* y) {
  switch (width) {
    case 1: accumulate_fixed<1>(n, coef, x, stride, y); break;
    case 2: accumulate_fixed<2>(n, coef, x, stride, y); break;
    case 3: accumulate_fixed<3>(n, coef, x, stride, y); break;
    case 4: accumulate_fixed<4>(n, coef, x, stride, y); break;
    case 5: accumulate_fixed<5>(n, coef, x, stride, y); break;
    case 6: accumulate_fixed<6>(n, coef, x, stride, y); break;
    case 7: accumulate_fixed<7>(n, coef, x, stride, y); break;
    case 8: accumulate_fixed<8>(n, coef, x, stride, y); break;
  }
}

// y[c] = sum_k coef(k) * x(k, c) for c < x.cols(). Wide x is processed in 8-column chunks, so
// `coef` may be called several times per k; it must be a pure lookup.
template <class Coef>
void accumulate_row(std::size_t n, Coef&& coef, const Matrix& x, double* y) {
  constexpr std::size_t kChunk = 8;
  const std::size_t width = x.cols();
  for (std::size_t c0 = 0; c0 < width; c0 += kChunk) {
    accumulate_narrow(n, std::min(kChunk, width - c0), coef, x.data() + c0, width, y + c0);
  }
}

// Centers stored dimension-major (d x M) so distance loops run across centers.
inline Matrix transposed(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
  return t;
}

// out[j] = exp(-scale * |x - c_{first + j}|^2) for j < count, with centers_t = transposed(centers).
// Each distance sums its dimensions in ascending order, as squared_distance does.
inline void gaussian_row(std::span<const double> x, const Matrix& centers_t, std::size_t first,
                         std::size_t count, double scale, double* out) {
  std::fill(out, out + count, 0.0);
  for (std::size_t a = 0; a < x.size(); ++a) {
    const double xa = x[a];
    const double* ca = centers_t.row(a).data() + first;
    for (std::size_t j = 0; j < count; ++j) {
      const double diff = xa - ca[j];
      out[j] += diff * diff;
    }
  }
  for (std::size_t j = 0; j < count; ++j) out[j] = -scale * out[j];
  exp_in_place(out, count);
}

}  // namespace iterflow::kernels::detail
