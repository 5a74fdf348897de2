#pragma once

// Data-parallel inner loops. Each kernel exists twice:
//   kernels::serial    plain reference loops, kept for tests and benchmarks;
//   kernels::parallel  OpenMP versions used by the library.
// Every output element is produced by exactly one thread with the same operation order as
// the serial loop, so both variants agree bitwise for any thread count. Matrix-vector sums use
// four interleaved partial sums (term k into sum k mod 4), in both variants.

#include <cstddef>
#include <span>
#include <vector>

#include "iterflow/matrix.hpp"

namespace iterflow::kernels {

inline double squared_distance(std::span<const double> a, std::span<const double> b) noexcept {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double diff = a[j] - b[j];
    s += diff * diff;
  }
  return s;
}

// Factor f such that the Gaussian kernel is exp(-f * |x - y|^2).
inline double gaussian_exponent_scale(double bandwidth) noexcept {
  return 1.0 / (2.0 * bandwidth * bandwidth);
}

namespace serial {

// out(i, k) = exp(-|c_i - c_k|^2 / (2 bw^2)); out is resized to M x M.
void gaussian_gram(const Matrix& centers, double bandwidth, Matrix& out);
// out(q, k) = exp(-|x_q - c_k|^2 / (2 bw^2)); out is resized to K x M.
void gaussian_cross(const Matrix& queries, const Matrix& centers, double bandwidth, Matrix& out);
// out = gaussian_cross(queries, centers) * coeffs, without materializing the cross matrix.
void gaussian_apply(const Matrix& queries, const Matrix& centers, double bandwidth,
                    const Matrix& coeffs, Matrix& out);
// y = a * x
void multiply(const Matrix& a, const Matrix& x, Matrix& y);
// y = a^T * x
void multiply_transposed(const Matrix& a, const Matrix& x, Matrix& y);
// out[i] = min_k |a_i - b_k|^2
void nearest_squared_distances(const Matrix& a, const Matrix& b, std::vector<double>& out);

}  // namespace serial

namespace parallel {

void gaussian_gram(const Matrix& centers, double bandwidth, Matrix& out);
void gaussian_cross(const Matrix& queries, const Matrix& centers, double bandwidth, Matrix& out);
void gaussian_apply(const Matrix& queries, const Matrix& centers, double bandwidth,
                    const Matrix& coeffs, Matrix& out);
void multiply(const Matrix& a, const Matrix& x, Matrix& y);
void multiply_transposed(const Matrix& a, const Matrix& x, Matrix& y);
void nearest_squared_distances(const Matrix& a, const Matrix& b, std::vector<double>& out);

}  // namespace parallel

// Thread-count control; no-ops when built without OpenMP.
int max_threads() noexcept;
void set_num_threads(int n) noexcept;
bool openmp_enabled() noexcept;

}  // namespace iterflow::kernels
