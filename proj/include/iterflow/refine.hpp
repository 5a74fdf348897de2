#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "iterflow/cg.hpp"
#include "iterflow/flowmatch.hpp"
#include "iterflow/metrics.hpp"
#include "iterflow/ode.hpp"
#include "iterflow/pointcloud.hpp"
#include "iterflow/rbf.hpp"

namespace iterflow {

// Settings shared by every flow-matching round (end-path) or segment (gradual).
struct RoundSettings {
  std::size_t num_slices = 16;
  std::optional<std::size_t> pairs_per_slice;  // default: default_pair_count(N_start, N_target)
  KernelConfig kernel;
  CgConfig cg;
  OdeMethod method = OdeMethod::rk4;
  std::size_t num_steps = 50;  // over the full interval [0, 1]
  std::optional<std::size_t> record_every;  // trajectory snapshots, in ODE steps

  void validate() const;
};

enum class StopMode { absolute, relative_change };

std::string_view to_string(StopMode mode);
StopMode parse_stop_mode(std::string_view name);

struct StopRule {
  StopMode mode = StopMode::relative_change;
  double tolerance = 0.02;
  std::size_t max_iterations = 20;  // refinement rounds, not counting the initial cloud
};

struct StopDecision {
  bool stop = false;
  std::string reason;  // "converged" or "cap" when stopping
};

// `costs` holds the initial cost followed by one cost per completed round.
// absolute: stop when the last cost <= tolerance.
// relative-change: stop when |c_k - c_{k-1}| / max(c_{k-1}, 1e-12) <= tolerance.
// Either way, stop with reason "cap" once max_iterations rounds have run.
StopDecision stop_check(std::span<const double> costs, const StopRule& rule);

struct Iterate;
// Called after every completed round/segment (progress reporting, partial manifests).
using IterateCallback = std::function<void(const Iterate&)>;

struct EndPathConfig {
  RoundSettings round;
  StopRule stop;
  RandomSeed seed;
  bool keep_fields = true;
  IterateCallback on_iterate;
};

struct GradualConfig {
  // Interior checkpoints 0 < t_1 < ... < t_{n-1} < 1. Empty means a single segment [0, 1].
  // A segment of length L gets ceil((round.num_slices - 1) * L) + 1 slices (at least 2) and
  // max(5, round(round.num_steps * L)) integration steps.
  std::vector<double> checkpoints = uniform_checkpoints(6);
  RoundSettings round;
  RandomSeed seed;
  bool keep_fields = true;
  IterateCallback on_iterate;

  static std::vector<double> uniform_checkpoints(std::size_t intervals);
  void validate() const;
};

struct SolverSummary {
  std::size_t slices = 0;
  std::size_t max_iterations = 0;
  double max_relative_residual = 0.0;
  bool all_converged = true;
};

struct Iterate {
  std::string label;
  double time_reached = 0.0;  // integration time this cloud corresponds to
  PointCloud cloud;
  CostReport cost;  // against the target
  SolverSummary solver;
  double wall_seconds = 0.0;
};

struct RefinementTrace {
  std::vector<Iterate> iterates;  // iterates.front() is the initial cloud
  // One fitted field per round/segment with the ODE settings it was integrated with, so the
  // final cloud can be replayed from the initial one (empty when keep_fields is false).
  std::vector<RbfVelocityField> fields;
  std::vector<OdeConfig> field_ode;
  std::vector<TrajectoryRecord> trajectories;
  std::string termination_reason;

  std::vector<double> costs() const;
  const PointCloud& final_cloud() const { return iterates.back().cloud; }
};

StopDecision stop_check(const RefinementTrace& trace, const StopRule& rule);

// Seed of round (or segment) j under master seed s.
RandomSeed round_seed(RandomSeed master, std::size_t round);

// Repeated flow matching with the previous round's output as the new source.
RefinementTrace end_path_correct(const PointCloud& start, const PointCloud& target, const EndPathConfig& cfg);

// Piecewise flow matching with the homotopy re-based at every checkpoint.
RefinementTrace gradual_refine(const PointCloud& start, const PointCloud& target, const GradualConfig& cfg);

// Pushes `initial` through the stored fields; reproduces trace.final_cloud() bitwise.
PointCloud replay(const RefinementTrace& trace, const PointCloud& initial);

}  // namespace iterflow
