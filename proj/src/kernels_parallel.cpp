#include <algorithm>
#include <cstdint>
#include <limits>

#include "iterflow/kernels.hpp"
#include "kernel_loops.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace iterflow::kernels {

namespace parallel {

void gaussian_gram(const Matrix& centers, double bandwidth, Matrix& out) {
  const auto m = static_cast<std::int64_t>(centers.rows());
  const double scale = gaussian_exponent_scale(bandwidth);
  out = Matrix(centers.rows(), centers.rows());
  const Matrix ct = detail::transposed(centers);
  // Upper triangle only; the distance is bitwise symmetric so mirroring is exact.
#pragma omp parallel for schedule(dynamic, 16)
  for (std::int64_t i = 0; i < m; ++i) {
    const auto first = static_cast<std::size_t>(i);
    detail::gaussian_row(centers.row(first), ct, first, centers.rows() - first, scale,
                         &out(first, first));
  }
  constexpr std::int64_t kTile = 64;
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t i0 = 0; i0 < m; i0 += kTile) {
    for (std::int64_t k0 = 0; k0 <= i0; k0 += kTile) {
      for (std::int64_t i = i0; i < std::min(m, i0 + kTile); ++i) {
        for (std::int64_t k = k0; k < std::min(i, k0 + kTile); ++k) out(i, k) = out(k, i);
      }
    }
  }
}

void gaussian_cross(const Matrix& queries, const Matrix& centers, double bandwidth, Matrix& out) {
  const auto nq = static_cast<std::int64_t>(queries.rows());
  const double scale = gaussian_exponent_scale(bandwidth);
  out = Matrix(queries.rows(), centers.rows());
  const Matrix ct = detail::transposed(centers);
#pragma omp parallel for schedule(static)
  for (std::int64_t q = 0; q < nq; ++q) {
    detail::gaussian_row(queries.row(q), ct, 0, centers.rows(), scale, out.row(q).data());
  }
}

void gaussian_apply(const Matrix& queries, const Matrix& centers, double bandwidth,
                    const Matrix& coeffs, Matrix& out) {
  const auto nq = static_cast<std::int64_t>(queries.rows());
  const std::size_t m = centers.rows();
  const double scale = gaussian_exponent_scale(bandwidth);
  out = Matrix(queries.rows(), coeffs.cols());
  const Matrix ct = detail::transposed(centers);
#pragma omp parallel
  {
    std::vector<double> weights(m);
#pragma omp for schedule(static)
    for (std::int64_t q = 0; q < nq; ++q) {
      detail::gaussian_row(queries.row(q), ct, 0, m, scale, weights.data());
      const double* w = weights.data();
      detail::accumulate_row(
          m, [w](std::size_t k) { return w[k]; }, coeffs, out.row(q).data());
    }
  }
}

void multiply(const Matrix& a, const Matrix& x, Matrix& y) {
  const auto rows = static_cast<std::int64_t>(a.rows());
  y = Matrix(a.rows(), x.cols());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < rows; ++i) {
    const double* ai = a.row(i).data();
    detail::accumulate_row(a.cols(), [ai](std::size_t k) { return ai[k]; }, x, y.row(i).data());
  }
}

void multiply_transposed(const Matrix& a, const Matrix& x, Matrix& y) {
  constexpr std::int64_t kBlock = 64;
  const auto cols = static_cast<std::int64_t>(a.cols());
  const std::size_t width = x.cols();
  y = Matrix(a.cols(), width);
  // Column blocks of `a` are independent; each y row still sums over i in ascending order.
#pragma omp parallel for schedule(static)
  for (std::int64_t j0 = 0; j0 < cols; j0 += kBlock) {
    const std::int64_t j1 = std::min(cols, j0 + kBlock);
    for (std::size_t i = 0; i < a.rows(); ++i) {
      const auto ai = a.row(i);
      const auto xi = x.row(i);
      for (std::int64_t j = j0; j < j1; ++j) {
        auto yj = y.row(j);
        for (std::size_t c = 0; c < width; ++c) yj[c] += ai[j] * xi[c];
      }
    }
  }
}

void nearest_squared_distances(const Matrix& a, const Matrix& b, std::vector<double>& out) {
  const auto n = static_cast<std::int64_t>(a.rows());
  out.assign(a.rows(), std::numeric_limits<double>::infinity());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto ai = a.row(i);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < b.rows(); ++k) best = std::min(best, squared_distance(ai, b.row(k)));
    out[i] = best;
  }
}

}  // namespace parallel

int max_threads() noexcept {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_num_threads(int n) noexcept {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

bool openmp_enabled() noexcept {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

}  // namespace iterflow::kernels
