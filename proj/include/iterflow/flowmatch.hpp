#pragma once

#include <cstddef>
#include <vector>

#include "iterflow/cg.hpp"
#include "iterflow/ode.hpp"
#include "iterflow/pointcloud.hpp"
#include "iterflow/random.hpp"
#include "iterflow/rbf.hpp"

namespace iterflow {

// Slice times used to fit one round. The horizon is fixed at 1.
class TimeGrid {
 public:
  static constexpr double kHorizon = 1.0;

  explicit TimeGrid(std::vector<double> times);
  // n times evenly spaced over [lo, hi], both endpoints included (n == 1 gives the midpoint).
  static TimeGrid uniform(std::size_t n, double lo = 0.0, double hi = kHorizon);

  const std::vector<double>& times() const noexcept { return times_; }
  std::size_t size() const noexcept { return times_.size(); }

 private:
  std::vector<double> times_;
};

struct PairingPlan {
  std::size_t pairs_per_slice = 4096;
  RandomSeed seed;
};

// Default pair count: min(N_start * N_target, 4096).
std::size_t default_pair_count(std::size_t n_start, std::size_t n_target);

// Training data for one slice. With origin = 0 this is the plain linear homotopy
//   x_t = t x_T + (1 - t) x_0,  v = x_T - x_0;
// with origin t_j > 0 it is the corrected homotopy re-based at the integrated state at t_j,
//   s = (t - t_j) / (1 - t_j),  x_t = s x_T + (1 - s) x_hat,  v = (x_T - x_hat) / (1 - t_j).
struct HomotopyBatch {
  double slice_time = 0.0;
  double origin = 0.0;
  Matrix points;
  Matrix velocities;
  std::vector<std::size_t> start_index;   // row of the start cloud used by pair i
  std::vector<std::size_t> target_index;  // row of the target cloud used by pair i
};

// Pairs are drawn independently and uniformly, with replacement, from start x target.
HomotopyBatch build_homotopy_batch(const PointCloud& start, const PointCloud& target, double t,
                                   const PairingPlan& plan, double origin = 0.0);

// Recomputes the batch rows from stored indices; used to check the batch invariant.
void recompute_homotopy_rows(const PointCloud& start, const PointCloud& target, const HomotopyBatch& batch,
                             Matrix& points, Matrix& velocities);

// One slice per grid time, each fit on its own batch seeded by derive_seed(plan.seed, slice).
// Slices are fit concurrently.
RbfVelocityField fit_round(const PointCloud& start, const PointCloud& target, const TimeGrid& grid,
                           const PairingPlan& plan, const KernelConfig& kernel, const CgConfig& cg,
                           double origin = 0.0);

VelocityFn as_velocity_fn(const RbfVelocityField& field);

PointCloud transport(const PointCloud& start, const RbfVelocityField& field, const OdeConfig& ode);

}  // namespace iterflow
