#include <algorithm>
#include <limits>

#include "iterflow/kernels.hpp"
#include "kernel_loops.hpp"

namespace iterflow::kernels::serial {

void gaussian_gram(const Matrix& centers, double bandwidth, Matrix& out) {
  gaussian_cross(centers, centers, bandwidth, out);
}

void gaussian_cross(const Matrix& queries, const Matrix& centers, double bandwidth, Matrix& out) {
  const double scale = gaussian_exponent_scale(bandwidth);
  out = Matrix(queries.rows(), centers.rows());
  const Matrix ct = detail::transposed(centers);
  for (std::size_t q = 0; q < queries.rows(); ++q) {
    detail::gaussian_row(queries.row(q), ct, 0, centers.rows(), scale, out.row(q).data());
  }
}

void gaussian_apply(const Matrix& queries, const Matrix& centers, double bandwidth,
                    const Matrix& coeffs, Matrix& out) {
  Matrix cross;
  gaussian_cross(queries, centers, bandwidth, cross);
  multiply(cross, coeffs, out);
}

void multiply(const Matrix& a, const Matrix& x, Matrix& y) {
  y = Matrix(a.rows(), x.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* ai = a.row(i).data();
    detail::accumulate_row(
        a.cols(), [ai](std::size_t k) { return ai[k]; }, x, y.row(i).data());
  }
}

void multiply_transposed(const Matrix& a, const Matrix& x, Matrix& y) {
  y = Matrix(a.cols(), x.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) {
      for (std::size_t c = 0; c < x.cols(); ++c) y(j, c) += a(i, j) * x(i, c);
    }
  }
}

void nearest_squared_distances(const Matrix& a, const Matrix& b, std::vector<double>& out) {
  out.assign(a.rows(), std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < b.rows(); ++k) {
      out[i] = std::min(out[i], squared_distance(a.row(i), b.row(k)));
    }
  }
}

}  // namespace iterflow::kernels::serial
