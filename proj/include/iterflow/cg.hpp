#pragma once

#include <cstddef>
#include <functional>
#include <optional>

#include "iterflow/matrix.hpp"

namespace iterflow {

struct CgConfig {
  double tolerance = 1e-8;                    // on ||r|| / ||b|| per column
  std::optional<std::size_t> max_iterations;  // default: 10 * system size
  bool abort_on_failure = false;              // throw NumericalError instead of flagging
};

struct CgDiagnostics {
  std::size_t iterations = 0;
  double final_relative_residual = 0.0;  // max over right-hand-side columns
  bool converged = true;
  // Smallest observed p^T A p / p^T p. Must stay positive for an SPD operator.
  double min_curvature = 0.0;
};

// y = A * x for an n x n symmetric positive definite A applied to an n x q block.
using BlockOperator = std::function<void(const Matrix& x, Matrix& y)>;

// Solves A X = B column by column with one shared operator application per iteration.
// Converged columns are frozen. Throws NumericalError on non-positive curvature.
CgDiagnostics conjugate_gradient(const BlockOperator& apply, const Matrix& rhs, Matrix& solution,
                                 const CgConfig& config);

}  // namespace iterflow
