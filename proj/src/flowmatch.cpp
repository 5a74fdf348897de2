#include "iterflow/flowmatch.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <string>

#include "iterflow/errors.hpp"

namespace iterflow {

TimeGrid::TimeGrid(std::vector<double> times) : times_(std::move(times)) {
  if (times_.empty()) throw ValidationError("time grid must be nonempty");
  for (std::size_t i = 0; i < times_.size(); ++i) {
    if (!(times_[i] >= 0.0 && times_[i] <= kHorizon)) throw ValidationError("time grid entries must lie in [0, 1]");
    if (i > 0 && !(times_[i] > times_[i - 1])) throw ValidationError("time grid must be strictly increasing");
  }
}

TimeGrid TimeGrid::uniform(std::size_t n, double lo, double hi) {
  if (n == 0) throw ValidationError("time grid needs at least one slice");
  if (!(lo >= 0.0 && hi <= kHorizon && lo < hi)) throw ValidationError("time grid interval must satisfy 0 <= lo < hi <= 1");
  if (n == 1) return TimeGrid({0.5 * (lo + hi)});
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) {
    t[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  }
  t.back() = hi;
  return TimeGrid(std::move(t));
}

std::size_t default_pair_count(std::size_t n_start, std::size_t n_target) {
  constexpr std::size_t kCap = 4096;
  if (n_start >= kCap || n_target >= kCap) return kCap;
  return std::min(kCap, n_start * n_target);
}

namespace {

void check_compatible(const PointCloud& start, const PointCloud& target) {
  if (start.dim() != target.dim()) {
    throw ValidationError("start and target clouds differ in dimension (" + std::to_string(start.dim()) +
                          " vs " + std::to_string(target.dim()) + ")");
  }
}

void check_times(double t, double origin) {
  if (!(origin >= 0.0 && origin < TimeGrid::kHorizon)) {
    throw ValidationError("homotopy origin must lie in [0, 1); the corrected path divides by 1 - t_j");
  }
  if (!(t >= origin && t <= TimeGrid::kHorizon)) throw ValidationError("slice time must lie in [origin, 1]");
}

// Writes one homotopy row. Shared by batch construction and invariant recomputation.
void homotopy_row(std::span<const double> x0, std::span<const double> xT, double t, double origin,
                  std::span<double> point, std::span<double> velocity) {
  if (origin == 0.0) {
    const double rest = TimeGrid::kHorizon - t;
    for (std::size_t j = 0; j < x0.size(); ++j) {
      point[j] = t * xT[j] + rest * x0[j];
      velocity[j] = xT[j] - x0[j];
    }
    return;
  }
  const double remaining = TimeGrid::kHorizon - origin;
  const double s = (t - origin) / remaining;
  for (std::size_t j = 0; j < x0.size(); ++j) {
    point[j] = s * xT[j] + (1.0 - s) * x0[j];
    velocity[j] = (xT[j] - x0[j]) / remaining;
  }
}

}  // namespace

HomotopyBatch build_homotopy_batch(const PointCloud& start, const PointCloud& target, double t,
                                   const PairingPlan& plan, double origin) {
  check_compatible(start, target);
  check_times(t, origin);
  if (plan.pairs_per_slice == 0) throw ValidationError("pairing.pairs_per_slice must be >= 1");
  const std::size_t p = plan.pairs_per_slice;
  HomotopyBatch batch;
  batch.slice_time = t;
  batch.origin = origin;
  batch.points = Matrix(p, start.dim());
  batch.velocities = Matrix(p, start.dim());
  batch.start_index.resize(p);
  batch.target_index.resize(p);
  Rng rng(plan.seed);
  for (std::size_t i = 0; i < p; ++i) {
    batch.start_index[i] = rng.uniform_index(start.count());
    batch.target_index[i] = rng.uniform_index(target.count());
    homotopy_row(start.point(batch.start_index[i]), target.point(batch.target_index[i]), t, origin,
                 batch.points.row(i), batch.velocities.row(i));
  }
  return batch;
}

void recompute_homotopy_rows(const PointCloud& start, const PointCloud& target, const HomotopyBatch& batch,
                             Matrix& points, Matrix& velocities) {
  const std::size_t p = batch.start_index.size();
  points = Matrix(p, start.dim());
  velocities = Matrix(p, start.dim());
  for (std::size_t i = 0; i < p; ++i) {
    homotopy_row(start.point(batch.start_index[i]), target.point(batch.target_index[i]), batch.slice_time,
                 batch.origin, points.row(i), velocities.row(i));
  }
}

RbfVelocityField fit_round(const PointCloud& start, const PointCloud& target, const TimeGrid& grid,
                           const PairingPlan& plan, const KernelConfig& kernel, const CgConfig& cg,
                           double origin) {
  check_compatible(start, target);
  kernel.validate();
  for (double t : grid.times()) check_times(t, origin);

  const auto n = static_cast<std::int64_t>(grid.size());
  std::vector<SliceModel> slices(grid.size());
  std::vector<std::exception_ptr> errors(grid.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t s = 0; s < n; ++s) {
    try {
      const RandomSeed slice_seed = derive_seed(plan.seed, static_cast<std::uint64_t>(s));
      const PairingPlan slice_plan{plan.pairs_per_slice, slice_seed};
      const double t = grid.times()[s];
      const HomotopyBatch batch = build_homotopy_batch(start, target, t, slice_plan, origin);
      slices[s] = fit_slice(batch.points, batch.velocities, t, kernel, cg, derive_seed(slice_seed, 1));
    } catch (...) {
      errors[s] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return RbfVelocityField(std::move(slices), kernel);
}

VelocityFn as_velocity_fn(const RbfVelocityField& field) {
  return [&field](const Matrix& x, double t, Matrix& v) { v = field.evaluate(x, t); };
}

PointCloud transport(const PointCloud& start, const RbfVelocityField& field, const OdeConfig& ode) {
  if (start.dim() != field.dim()) throw ValidationError("cloud and field dimensions differ");
  return integrate(as_velocity_fn(field), start, ode).final_state;
}

}  // namespace iterflow
