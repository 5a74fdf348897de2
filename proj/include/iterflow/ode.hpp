#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include "iterflow/matrix.hpp"
#include "iterflow/pointcloud.hpp"

namespace iterflow {

enum class OdeMethod { euler, rk4 };

std::string_view to_string(OdeMethod method);
OdeMethod parse_ode_method(std::string_view name);

struct OdeConfig {
  OdeMethod method = OdeMethod::rk4;
  std::size_t num_steps = 50;
  double t_start = 0.0;
  double t_end = 1.0;

  void validate() const;
};

// v = f(x, t) for a block of points. Implementations must treat rows independently.
using VelocityFn = std::function<void(const Matrix& x, double t, Matrix& v)>;

struct TrajectoryRecord {
  std::vector<double> times;       // strictly increasing, t_start ... t_end
  std::vector<PointCloud> states;  // states[i] is the cloud at times[i]
};

struct IntegrationResult {
  PointCloud final_state;
  std::optional<TrajectoryRecord> trajectory;
};

// Fixed-step explicit integration with h = (t_end - t_start) / num_steps; step k starts at
// t_start + k h. With record_every = k, snapshots are taken at step 0, every k steps, and the end.
// Throws NumericalError naming the step and point if the state becomes non-finite.
IntegrationResult integrate(const VelocityFn& field, const PointCloud& start, const OdeConfig& config,
                            std::optional<std::size_t> record_every = std::nullopt);

struct OrderEstimate {
  double slope = 0.0;  // least-squares slope of log(error) against log(h)
  bool exact = false;  // every error at round-off level; slope is meaningless
  std::vector<double> errors;
};

// Measures the empirical global order of `method` on a field with known solution
// `exact(x0, t)` by integrating `start` over [t_start, t_end] at each step count.
OrderEstimate convergence_order(const VelocityFn& field,
                                const std::function<Matrix(const Matrix& x0, double t)>& exact,
                                const PointCloud& start, OdeMethod method, double t_start, double t_end,
                                const std::vector<std::size_t>& step_counts);

}  // namespace iterflow
