#include "iterflow/refine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

#include "iterflow/errors.hpp"

namespace iterflow {

namespace {

constexpr std::uint64_t kRoundStream = 1000;
constexpr double kRelativeFloor = 1e-12;

SolverSummary summarize(const RbfVelocityField& field) {
  SolverSummary s;
  s.slices = field.slices().size();
  for (const SliceModel& sl : field.slices()) {
    s.max_iterations = std::max(s.max_iterations, sl.cg.iterations);
    s.max_relative_residual = std::max(s.max_relative_residual, sl.cg.final_relative_residual);
    s.all_converged = s.all_converged && sl.cg.converged;
  }
  return s;
}

struct SegmentOutcome {
  RbfVelocityField field;
  IntegrationResult result;
  OdeConfig ode;
};

// Fits one round over [lo, hi] with the homotopy based at `lo` and integrates `start` across it.
SegmentOutcome run_segment(const PointCloud& start, const PointCloud& target, const RoundSettings& round,
                           RandomSeed seed, double lo, double hi, std::size_t num_slices,
                           std::size_t num_steps) {
  const TimeGrid grid = TimeGrid::uniform(num_slices, lo, hi);
  const PairingPlan plan{round.pairs_per_slice.value_or(default_pair_count(start.count(), target.count())), seed};
  RbfVelocityField field = fit_round(start, target, grid, plan, round.kernel, round.cg, lo);
  const OdeConfig ode{round.method, num_steps, lo, hi};
  IntegrationResult result = integrate(as_velocity_fn(field), start, ode, round.record_every);
  return SegmentOutcome{std::move(field), std::move(result), ode};
}

// Slice spacing within a segment is no coarser than the full-path grid's 1 / (n - 1). Two slices
// per segment cannot follow the field as points settle into the target in the last segment.
std::size_t segment_slices(std::size_t full_path_slices, double length) {
  const double intervals = static_cast<double>(full_path_slices > 1 ? full_path_slices - 1 : 1) * length;
  return std::max<std::size_t>(2, static_cast<std::size_t>(std::ceil(intervals - 1e-9)) + 1);
}

Iterate initial_iterate(const PointCloud& start, const PointCloud& target) {
  return Iterate{"initial", 0.0, start, closest_point_cost(start, target), SolverSummary{}, 0.0};
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

void RoundSettings::validate() const {
  if (num_slices == 0) throw ValidationError("pairing.num_slices must be >= 1");
  if (pairs_per_slice && *pairs_per_slice == 0) throw ValidationError("pairing.pairs_per_slice must be >= 1");
  if (num_steps == 0) throw ValidationError("ode.num_steps must be >= 1");
  if (record_every && *record_every == 0) throw ValidationError("output.trajectory_every must be >= 1");
  kernel.validate();
}

std::string_view to_string(StopMode mode) {
  return mode == StopMode::absolute ? "absolute" : "relative-change";
}

StopMode parse_stop_mode(std::string_view name) {
  if (name == "absolute") return StopMode::absolute;
  if (name == "relative-change") return StopMode::relative_change;
  throw ValidationError("unknown stop mode '" + std::string(name) + "' (expected absolute or relative-change)");
}

StopDecision stop_check(std::span<const double> costs, const StopRule& rule) {
  if (costs.empty()) throw ValidationError("stop_check needs a nonempty trace");
  const std::size_t rounds = costs.size() - 1;
  if (rounds >= 1) {
    const double last = costs.back();
    bool converged = false;
    if (rule.mode == StopMode::absolute) {
      converged = last <= rule.tolerance;
    } else {
      const double prev = costs[costs.size() - 2];
      converged = std::abs(last - prev) / std::max(prev, kRelativeFloor) <= rule.tolerance;
    }
    if (converged) return {true, "converged"};
  }
  if (rounds >= rule.max_iterations) return {true, "cap"};
  return {false, ""};
}

std::vector<double> RefinementTrace::costs() const {
  std::vector<double> out;
  out.reserve(iterates.size());
  for (const Iterate& it : iterates) out.push_back(it.cost.value);
  return out;
}

StopDecision stop_check(const RefinementTrace& trace, const StopRule& rule) {
  const std::vector<double> c = trace.costs();
  return stop_check(std::span<const double>(c), rule);
}

RandomSeed round_seed(RandomSeed master, std::size_t round) {
  return derive_seed(master, kRoundStream + round);
}

std::vector<double> GradualConfig::uniform_checkpoints(std::size_t intervals) {
  if (intervals == 0) throw ValidationError("refinement.num_intervals must be >= 1");
  std::vector<double> out;
  for (std::size_t i = 1; i < intervals; ++i) {
    out.push_back(static_cast<double>(i) / static_cast<double>(intervals));
  }
  return out;
}

void GradualConfig::validate() const {
  round.validate();
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    const double t = checkpoints[i];
    const std::string where = "refinement.checkpoints[" + std::to_string(i) + "]";
    if (!std::isfinite(t) || !(t > 0.0)) throw ValidationError(where + ": checkpoints must be > 0");
    if (!(t < TimeGrid::kHorizon)) {
      throw ValidationError(where + ": checkpoint " + std::to_string(t) +
                            " must be < 1 (the corrected homotopy divides by 1 - t_j)");
    }
    if (i > 0 && !(t > checkpoints[i - 1])) throw ValidationError(where + ": checkpoints must be strictly increasing");
  }
}

RefinementTrace end_path_correct(const PointCloud& start, const PointCloud& target, const EndPathConfig& cfg) {
  cfg.round.validate();
  if (cfg.stop.max_iterations == 0) throw ValidationError("refinement.max_outer_iterations must be >= 1");
  if (start.dim() != target.dim()) throw ValidationError("start and target clouds differ in dimension");

  RefinementTrace trace;
  trace.iterates.push_back(initial_iterate(start, target));
  for (std::size_t round = 0;; ++round) {
    const auto t0 = std::chrono::steady_clock::now();
    SegmentOutcome seg = run_segment(trace.iterates.back().cloud, target, cfg.round, round_seed(cfg.seed, round),
                                     0.0, TimeGrid::kHorizon, cfg.round.num_slices, cfg.round.num_steps);
    Iterate it{"round " + std::to_string(round), TimeGrid::kHorizon, seg.result.final_state,
               closest_point_cost(seg.result.final_state, target), summarize(seg.field), 0.0};
    it.wall_seconds = seconds_since(t0);
    trace.iterates.push_back(std::move(it));
    if (cfg.on_iterate) cfg.on_iterate(trace.iterates.back());
    if (seg.result.trajectory) trace.trajectories.push_back(std::move(*seg.result.trajectory));
    if (cfg.keep_fields) {
      trace.fields.push_back(std::move(seg.field));
      trace.field_ode.push_back(seg.ode);
    }
    const StopDecision d = stop_check(trace, cfg.stop);
    if (d.stop) {
      trace.termination_reason = d.reason;
      break;
    }
  }
  return trace;
}

RefinementTrace gradual_refine(const PointCloud& start, const PointCloud& target, const GradualConfig& cfg) {
  cfg.validate();
  if (start.dim() != target.dim()) throw ValidationError("start and target clouds differ in dimension");

  std::vector<double> bounds{0.0};
  bounds.insert(bounds.end(), cfg.checkpoints.begin(), cfg.checkpoints.end());
  bounds.push_back(TimeGrid::kHorizon);
  const std::size_t segments = bounds.size() - 1;

  RefinementTrace trace;
  trace.iterates.push_back(initial_iterate(start, target));
  for (std::size_t j = 0; j < segments; ++j) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lo = bounds[j];
    const double hi = bounds[j + 1];
    const std::size_t slices = segments == 1 ? cfg.round.num_slices : segment_slices(cfg.round.num_slices, hi - lo);
    const std::size_t steps =
        segments == 1 ? cfg.round.num_steps
                      : std::max<std::size_t>(5, static_cast<std::size_t>(std::lround(
                                                     static_cast<double>(cfg.round.num_steps) * (hi - lo))));
    SegmentOutcome seg =
        run_segment(trace.iterates.back().cloud, target, cfg.round, round_seed(cfg.seed, j), lo, hi, slices, steps);
    Iterate it{"segment " + std::to_string(j), hi, seg.result.final_state,
               closest_point_cost(seg.result.final_state, target), summarize(seg.field), 0.0};
    it.wall_seconds = seconds_since(t0);
    trace.iterates.push_back(std::move(it));
    if (cfg.on_iterate) cfg.on_iterate(trace.iterates.back());
    if (seg.result.trajectory) trace.trajectories.push_back(std::move(*seg.result.trajectory));
    if (cfg.keep_fields) {
      trace.fields.push_back(std::move(seg.field));
      trace.field_ode.push_back(seg.ode);
    }
  }
  trace.termination_reason = "completed";
  return trace;
}

PointCloud replay(const RefinementTrace& trace, const PointCloud& initial) {
  if (trace.fields.empty() && trace.iterates.size() > 1) {
    throw ValidationError("trace was recorded without fields; cannot replay");
  }
  PointCloud x = initial;
  for (std::size_t i = 0; i < trace.fields.size(); ++i) x = transport(x, trace.fields[i], trace.field_ode[i]);
  return x;
}

}  // namespace iterflow
