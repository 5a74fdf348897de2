#include "iterflow/ode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include "iterflow/errors.hpp"

namespace iterflow {

namespace {

// out = x + scale * v
void axpy(const Matrix& x, double scale, const Matrix& v, Matrix& out) {
  out = Matrix(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) out.values()[i] = x.values()[i] + scale * v.values()[i];
}

void check_velocity_shape(const Matrix& x, const Matrix& v) {
  if (v.rows() != x.rows() || v.cols() != x.cols()) {
    throw ValidationError("velocity field returned a " + std::to_string(v.rows()) + "x" +
                          std::to_string(v.cols()) + " block for a " + std::to_string(x.rows()) + "x" +
                          std::to_string(x.cols()) + " state");
  }
}

void check_finite(const Matrix& x, std::size_t step) {
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (double v : x.row(i)) {
      if (!std::isfinite(v)) {
        throw NumericalError("non-finite state after integration step " + std::to_string(step) +
                             " at point " + std::to_string(i));
      }
    }
  }
}

}  // namespace

std::string_view to_string(OdeMethod method) {
  return method == OdeMethod::euler ? "euler" : "rk4";
}

OdeMethod parse_ode_method(std::string_view name) {
  if (name == "euler") return OdeMethod::euler;
  if (name == "rk4") return OdeMethod::rk4;
  throw ValidationError("unknown ode method '" + std::string(name) + "' (expected euler or rk4)");
}

void OdeConfig::validate() const {
  if (num_steps == 0) throw ValidationError("ode.num_steps must be >= 1");
  if (!(t_start < t_end) || !std::isfinite(t_start) || !std::isfinite(t_end)) {
    throw ValidationError("ode interval requires t_start < t_end");
  }
}

IntegrationResult integrate(const VelocityFn& field, const PointCloud& start, const OdeConfig& config,
                            std::optional<std::size_t> record_every) {
  config.validate();
  if (record_every && *record_every == 0) throw ValidationError("record_every must be >= 1");
  const double h = (config.t_end - config.t_start) / static_cast<double>(config.num_steps);
  Matrix x = start.points();
  Matrix k1, k2, k3, k4, stage;

  std::optional<TrajectoryRecord> record;
  if (record_every) {
    record.emplace();
    record->times.push_back(config.t_start);
    record->states.push_back(start);
  }

  for (std::size_t step = 0; step < config.num_steps; ++step) {
    const double t = config.t_start + static_cast<double>(step) * h;
    field(x, t, k1);
    check_velocity_shape(x, k1);
    if (config.method == OdeMethod::euler) {
      for (std::size_t i = 0; i < x.size(); ++i) x.values()[i] += h * k1.values()[i];
    } else {
      const double half = 0.5 * h;
      axpy(x, half, k1, stage);
      field(stage, t + half, k2);
      axpy(x, half, k2, stage);
      field(stage, t + half, k3);
      axpy(x, h, k3, stage);
      field(stage, t + h, k4);
      // Weighted mean first: for a constant field it is exactly that constant.
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double mean =
            (k1.values()[i] + 2.0 * k2.values()[i] + 2.0 * k3.values()[i] + k4.values()[i]) / 6.0;
        x.values()[i] += h * mean;
      }
    }
    check_finite(x, step);
    const std::size_t done = step + 1;
    if (record && (done % *record_every == 0 || done == config.num_steps)) {
      record->times.push_back(done == config.num_steps ? config.t_end
                                                       : config.t_start + static_cast<double>(done) * h);
      record->states.emplace_back(x);
    }
  }
  return IntegrationResult{PointCloud(std::move(x)), std::move(record)};
}

OrderEstimate convergence_order(const VelocityFn& field,
                                const std::function<Matrix(const Matrix& x0, double t)>& exact,
                                const PointCloud& start, OdeMethod method, double t_start, double t_end,
                                const std::vector<std::size_t>& step_counts) {
  if (step_counts.size() < 2) throw ValidationError("convergence_order needs at least two step counts");
  const Matrix reference = exact(start.points(), t_end);
  double scale = 0.0;
  for (double v : reference.values()) scale = std::max(scale, std::abs(v));

  OrderEstimate est;
  std::vector<double> log_h;
  std::vector<double> log_err;
  bool all_roundoff = true;
  for (std::size_t n : step_counts) {
    const OdeConfig cfg{method, n, t_start, t_end};
    const PointCloud result = integrate(field, start, cfg).final_state;
    double err = 0.0;
    for (std::size_t i = 0; i < reference.size(); ++i) {
      err = std::max(err, std::abs(result.points().values()[i] - reference.values()[i]));
    }
    est.errors.push_back(err);
    // Round-off level: a few hundred ulps of the solution magnitude.
    if (err > 1e-13 * std::max(scale, 1.0)) all_roundoff = false;
    log_h.push_back(std::log((t_end - t_start) / static_cast<double>(n)));
    log_err.push_back(std::log(std::max(err, std::numeric_limits<double>::min())));
  }
  est.exact = all_roundoff;
  if (est.exact) return est;

  const double n = static_cast<double>(log_h.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < log_h.size(); ++i) {
    mx += log_h[i];
    my += log_err[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < log_h.size(); ++i) {
    sxy += (log_h[i] - mx) * (log_err[i] - my);
    sxx += (log_h[i] - mx) * (log_h[i] - mx);
  }
  est.slope = sxy / sxx;
  return est;
}

}  // namespace iterflow
