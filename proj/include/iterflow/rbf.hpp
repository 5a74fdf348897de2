#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <vector>

#include "iterflow/cg.hpp"
#include "iterflow/matrix.hpp"
#include "iterflow/random.hpp"

namespace iterflow {

enum class BandwidthMode { median_heuristic, fixed };

struct KernelConfig {
  BandwidthMode bandwidth_mode = BandwidthMode::median_heuristic;
  // Fixed bandwidth, or multiplier on the median heuristic.
  double bandwidth_value = 1.0;
  double regularization_beta = 1e-4;
  // Cap on centers per slice; above it a seeded subsample of rows becomes the center set.
  std::optional<std::size_t> max_centers;

  void validate() const;
};

// Gaussian RBF interpolant of the velocity at one time slice.
struct SliceModel {
  double slice_time = 0.0;
  Matrix centers;       // M x d
  Matrix coefficients;  // M x d
  double bandwidth = 1.0;
  CgDiagnostics cg;
};

class RbfVelocityField {
 public:
  // Slices must be nonempty with strictly increasing times in [0, 1] and a common dimension.
  RbfVelocityField(std::vector<SliceModel> slices, KernelConfig config);

  const std::vector<SliceModel>& slices() const noexcept { return slices_; }
  const KernelConfig& kernel_config() const noexcept { return config_; }
  std::size_t dim() const noexcept { return slices_.front().centers.cols(); }

  // Exact slice evaluation at slice times, linear interpolation of the two neighboring slice
  // evaluations in between, clamped to the first/last slice outside the covered range.
  Matrix evaluate(const Matrix& queries, double t) const;

  friend bool operator==(const RbfVelocityField& a, const RbfVelocityField& b);

 private:
  std::vector<SliceModel> slices_;
  KernelConfig config_;
};

Matrix assemble_kernel_matrix(const Matrix& centers, double bandwidth);

// Median pairwise Euclidean distance (over a seeded subsample of at most 2000 points) times
// `multiplier`. Throws ValidationError if M < 2 or the median is zero.
double median_heuristic_bandwidth(const Matrix& points, double multiplier = 1.0,
                                  RandomSeed seed = RandomSeed{});

double resolve_bandwidth(const Matrix& points, const KernelConfig& config, RandomSeed seed);

// Solves (Phi + beta I) theta = v by conjugate gradient. With max_centers < M, a seeded
// subsample C becomes the centers and (K^T K + beta I) theta = K^T v is solved, K = Phi(X, C).
SliceModel fit_slice(const Matrix& training_points, const Matrix& target_velocities, double t,
                     const KernelConfig& kernel, const CgConfig& cg, RandomSeed seed = RandomSeed{});

Matrix evaluate_slice(const SliceModel& slice, const Matrix& queries);
Matrix evaluate_field(const RbfVelocityField& field, const Matrix& queries, double t);

// Packed little-endian container ("IFMF"): kernel config, then every slice with its centers,
// coefficients, bandwidth and solver diagnostics.
void save_field(const RbfVelocityField& field, const std::filesystem::path& path);
RbfVelocityField load_field(const std::filesystem::path& path);

}  // namespace iterflow
