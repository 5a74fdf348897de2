#include "iterflow/cg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "iterflow/errors.hpp"

namespace iterflow {

namespace {

std::vector<double> column_dots(const Matrix& a, const Matrix& b) {
  std::vector<double> out(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t c = 0; c < a.cols(); ++c) out[c] += a(i, c) * b(i, c);
  }
  return out;
}

}  // namespace

CgDiagnostics conjugate_gradient(const BlockOperator& apply, const Matrix& rhs, Matrix& solution,
                                 const CgConfig& config) {
  const std::size_t n = rhs.rows();
  const std::size_t q = rhs.cols();
  const std::size_t max_iter = config.max_iterations.value_or(10 * n);
  if (!(config.tolerance > 0.0)) throw ValidationError("cg tolerance must be positive");

  solution = Matrix(n, q);
  Matrix residual = rhs;
  Matrix direction = rhs;
  Matrix image;

  const std::vector<double> rhs_norm2 = column_dots(rhs, rhs);
  std::vector<double> rr = rhs_norm2;
  std::vector<bool> active(q);
  std::vector<double> threshold2(q);
  for (std::size_t c = 0; c < q; ++c) {
    threshold2[c] = config.tolerance * config.tolerance * rhs_norm2[c];
    // A zero right-hand side is solved by x = 0.
    active[c] = rhs_norm2[c] > 0.0 && rr[c] > threshold2[c];
  }

  CgDiagnostics diag;
  diag.min_curvature = std::numeric_limits<double>::infinity();
  auto any_active = [&] { return std::find(active.begin(), active.end(), true) != active.end(); };

  while (any_active() && diag.iterations < max_iter) {
    apply(direction, image);
    const std::vector<double> pap = column_dots(direction, image);
    const std::vector<double> pp = column_dots(direction, direction);
    std::vector<double> alpha(q, 0.0);
    for (std::size_t c = 0; c < q; ++c) {
      if (!active[c]) continue;
      if (!(pap[c] > 0.0)) {
        std::ostringstream msg;
        msg << "conjugate gradient: non-positive curvature " << pap[c] << " at iteration "
            << diag.iterations << ", column " << c << " (operator not positive definite)";
        throw NumericalError(msg.str());
      }
      diag.min_curvature = std::min(diag.min_curvature, pap[c] / pp[c]);
      alpha[c] = rr[c] / pap[c];
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < q; ++c) {
        if (!active[c]) continue;
        solution(i, c) += alpha[c] * direction(i, c);
        residual(i, c) -= alpha[c] * image(i, c);
      }
    }
    const std::vector<double> rr_new = column_dots(residual, residual);
    for (std::size_t c = 0; c < q; ++c) {
      if (!active[c]) continue;
      const double beta = rr_new[c] / rr[c];
      rr[c] = rr_new[c];
      if (rr[c] <= threshold2[c]) {
        active[c] = false;
        continue;
      }
      for (std::size_t i = 0; i < n; ++i) direction(i, c) = residual(i, c) + beta * direction(i, c);
    }
    ++diag.iterations;
  }

  for (std::size_t c = 0; c < q; ++c) {
    if (rhs_norm2[c] > 0.0) {
      diag.final_relative_residual = std::max(diag.final_relative_residual, std::sqrt(rr[c] / rhs_norm2[c]));
    }
  }
  diag.converged = !any_active();
  if (diag.iterations == 0) diag.min_curvature = 0.0;
  if (!diag.converged && config.abort_on_failure) {
    std::ostringstream msg;
    msg << "conjugate gradient did not converge in " << max_iter
        << " iterations (relative residual " << diag.final_relative_residual << ")";
    throw NumericalError(msg.str());
  }
  return diag;
}

}  // namespace iterflow
