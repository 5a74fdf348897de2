#include "iterflow/rbf.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>

#include "binary_io.hpp"
#include "iterflow/errors.hpp"
#include "iterflow/kernels.hpp"

namespace iterflow {

namespace {

constexpr std::size_t kMedianSubsample = 2000;
constexpr std::array<char, 4> kFieldMagic{'I', 'F', 'M', 'F'};
constexpr std::uint32_t kFieldVersion = 1;

// First k entries of a seeded Fisher-Yates shuffle of [0, n).
std::vector<std::size_t> seeded_subset(std::size_t n, std::size_t k, RandomSeed seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.uniform_index(n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

Matrix select_rows(const Matrix& m, const std::vector<std::size_t>& rows) {
  Matrix out(rows.size(), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy_n(m.row(rows[i]).begin(), m.cols(), out.row(i).begin());
  return out;
}

bool has_duplicate_rows(const Matrix& m) {
  std::vector<std::size_t> order(m.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto less = [&](std::size_t a, std::size_t b) {
    const auto ra = m.row(a);
    const auto rb = m.row(b);
    return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
  };
  std::sort(order.begin(), order.end(), less);
  for (std::size_t i = 1; i < order.size(); ++i) {
    const auto ra = m.row(order[i - 1]);
    const auto rb = m.row(order[i]);
    if (std::equal(ra.begin(), ra.end(), rb.begin())) return true;
  }
  return false;
}

void add_scaled_identity(const Matrix& x, double beta, Matrix& y) {
  if (beta == 0.0) return;
  for (std::size_t i = 0; i < y.size(); ++i) y.values()[i] += beta * x.values()[i];
}

}  // namespace

void KernelConfig::validate() const {
  if (!(bandwidth_value > 0.0) || !std::isfinite(bandwidth_value)) {
    throw ValidationError("kernel.bandwidth_value must be a positive finite number");
  }
  if (!(regularization_beta >= 0.0) || !std::isfinite(regularization_beta)) {
    throw ValidationError("kernel.beta must be >= 0");
  }
  if (max_centers && *max_centers == 0) throw ValidationError("kernel.max_centers must be >= 1");
}

RbfVelocityField::RbfVelocityField(std::vector<SliceModel> slices, KernelConfig config)
    : slices_(std::move(slices)), config_(config) {
  if (slices_.empty()) throw ValidationError("velocity field needs at least one slice");
  const std::size_t d = slices_.front().centers.cols();
  for (std::size_t s = 0; s < slices_.size(); ++s) {
    const auto& sl = slices_[s];
    if (sl.centers.rows() == 0 || sl.centers.rows() != sl.coefficients.rows() ||
        sl.centers.cols() != d || sl.coefficients.cols() != d) {
      throw ValidationError("slice " + std::to_string(s) + ": centers/coefficients shape mismatch");
    }
    if (!(sl.slice_time >= 0.0 && sl.slice_time <= 1.0)) {
      throw ValidationError("slice " + std::to_string(s) + ": time outside [0, 1]");
    }
    if (s > 0 && !(sl.slice_time > slices_[s - 1].slice_time)) {
      throw ValidationError("slice times must be strictly increasing");
    }
    if (!(sl.bandwidth > 0.0)) throw ValidationError("slice " + std::to_string(s) + ": bandwidth must be > 0");
  }
}

Matrix RbfVelocityField::evaluate(const Matrix& queries, double t) const {
  if (queries.cols() != dim()) {
    throw ValidationError("query dimension " + std::to_string(queries.cols()) +
                          " does not match field dimension " + std::to_string(dim()));
  }
  if (t <= slices_.front().slice_time) return evaluate_slice(slices_.front(), queries);
  if (t >= slices_.back().slice_time) return evaluate_slice(slices_.back(), queries);
  const auto upper = std::upper_bound(slices_.begin(), slices_.end(), t,
                                      [](double v, const SliceModel& s) { return v < s.slice_time; });
  const SliceModel& hi = *upper;
  const SliceModel& lo = *(upper - 1);
  if (lo.slice_time == t) return evaluate_slice(lo, queries);
  const double w = (t - lo.slice_time) / (hi.slice_time - lo.slice_time);
  Matrix out = evaluate_slice(lo, queries);
  const Matrix right = evaluate_slice(hi, queries);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.values()[i] = (1.0 - w) * out.values()[i] + w * right.values()[i];
  }
  return out;
}

bool operator==(const RbfVelocityField& a, const RbfVelocityField& b) {
  if (a.slices_.size() != b.slices_.size()) return false;
  for (std::size_t s = 0; s < a.slices_.size(); ++s) {
    const auto& x = a.slices_[s];
    const auto& y = b.slices_[s];
    if (x.slice_time != y.slice_time || x.bandwidth != y.bandwidth || x.centers != y.centers ||
        x.coefficients != y.coefficients) {
      return false;
    }
  }
  return true;
}

Matrix assemble_kernel_matrix(const Matrix& centers, double bandwidth) {
  if (centers.rows() == 0) throw ValidationError("kernel matrix needs at least one center");
  if (!(bandwidth > 0.0)) throw ValidationError("bandwidth must be > 0");
  Matrix phi;
  kernels::parallel::gaussian_gram(centers, bandwidth, phi);
  return phi;
}

double median_heuristic_bandwidth(const Matrix& points, double multiplier, RandomSeed seed) {
  if (points.rows() < 2) throw ValidationError("median heuristic needs at least 2 points");
  const Matrix sample = points.rows() > kMedianSubsample
                            ? select_rows(points, seeded_subset(points.rows(), kMedianSubsample, seed))
                            : points;
  const std::size_t m = sample.rows();
  std::vector<double> dist;
  dist.reserve(m * (m - 1) / 2);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = i + 1; k < m; ++k) {
      dist.push_back(std::sqrt(kernels::squared_distance(sample.row(i), sample.row(k))));
    }
  }
  const std::size_t mid = dist.size() / 2;
  std::nth_element(dist.begin(), dist.begin() + mid, dist.end());
  double median = dist[mid];
  if (dist.size() % 2 == 0) {
    const double below = *std::max_element(dist.begin(), dist.begin() + mid);
    median = 0.5 * (below + median);
  }
  const double bw = median * multiplier;
  if (!(bw > 0.0)) {
    throw ValidationError("median heuristic bandwidth is zero (points coincide); configure a fixed bandwidth");
  }
  return bw;
}

double resolve_bandwidth(const Matrix& points, const KernelConfig& config, RandomSeed seed) {
  if (config.bandwidth_mode == BandwidthMode::fixed) return config.bandwidth_value;
  return median_heuristic_bandwidth(points, config.bandwidth_value, seed);
}

SliceModel fit_slice(const Matrix& training_points, const Matrix& target_velocities, double t,
                     const KernelConfig& kernel, const CgConfig& cg, RandomSeed seed) {
  kernel.validate();
  if (training_points.rows() == 0) throw ValidationError("fit_slice needs at least one training point");
  if (training_points.rows() != target_velocities.rows() || training_points.cols() != target_velocities.cols()) {
    throw ValidationError("training points and target velocities must have the same shape");
  }
  const double beta = kernel.regularization_beta;
  SliceModel model;
  model.slice_time = t;
  model.bandwidth = resolve_bandwidth(training_points, kernel, derive_seed(seed, 1));

  const std::size_t m = training_points.rows();
  if (kernel.max_centers && *kernel.max_centers < m) {
    model.centers = select_rows(training_points, seeded_subset(m, *kernel.max_centers, derive_seed(seed, 2)));
    if (beta == 0.0 && has_duplicate_rows(model.centers)) {
      throw ValidationError("duplicate centers with beta = 0 give a singular kernel; set beta > 0");
    }
    Matrix cross;
    kernels::parallel::gaussian_cross(training_points, model.centers, model.bandwidth, cross);
    Matrix rhs;
    kernels::parallel::multiply_transposed(cross, target_velocities, rhs);
    Matrix tmp;
    const BlockOperator normal_op = [&](const Matrix& x, Matrix& y) {
      kernels::parallel::multiply(cross, x, tmp);
      kernels::parallel::multiply_transposed(cross, tmp, y);
      add_scaled_identity(x, beta, y);
    };
    model.cg = conjugate_gradient(normal_op, rhs, model.coefficients, cg);
    return model;
  }

  if (beta == 0.0 && has_duplicate_rows(training_points)) {
    throw ValidationError("duplicate centers with beta = 0 give a singular kernel; set beta > 0");
  }
  model.centers = training_points;
  const Matrix phi = assemble_kernel_matrix(model.centers, model.bandwidth);
  const BlockOperator op = [&](const Matrix& x, Matrix& y) {
    kernels::parallel::multiply(phi, x, y);
    add_scaled_identity(x, beta, y);
  };
  model.cg = conjugate_gradient(op, target_velocities, model.coefficients, cg);
  return model;
}

Matrix evaluate_slice(const SliceModel& slice, const Matrix& queries) {
  Matrix out;
  kernels::parallel::gaussian_apply(queries, slice.centers, slice.bandwidth, slice.coefficients, out);
  return out;
}

Matrix evaluate_field(const RbfVelocityField& field, const Matrix& queries, double t) {
  return field.evaluate(queries, t);
}

void save_field(const RbfVelocityField& field, const std::filesystem::path& path) {
  using detail::put_le;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CloudFormatError(CloudFormatError::Kind::io, 0, "cannot write '" + path.string() + "'");
  const KernelConfig& cfg = field.kernel_config();
  out.write(kFieldMagic.data(), kFieldMagic.size());
  put_le(out, kFieldVersion);
  put_le(out, static_cast<std::uint32_t>(cfg.bandwidth_mode));
  put_le(out, cfg.bandwidth_value);
  put_le(out, cfg.regularization_beta);
  put_le(out, static_cast<std::uint64_t>(cfg.max_centers.value_or(0)));
  put_le(out, static_cast<std::uint64_t>(field.slices().size()));
  for (const SliceModel& s : field.slices()) {
    put_le(out, s.slice_time);
    put_le(out, s.bandwidth);
    put_le(out, static_cast<std::uint64_t>(s.centers.rows()));
    put_le(out, static_cast<std::uint64_t>(s.centers.cols()));
    put_le(out, static_cast<std::uint64_t>(s.cg.iterations));
    put_le(out, s.cg.final_relative_residual);
    put_le(out, static_cast<std::uint8_t>(s.cg.converged));
    put_le(out, s.cg.min_curvature);
    for (double v : s.centers.values()) put_le(out, v);
    for (double v : s.coefficients.values()) put_le(out, v);
  }
  if (!out.flush()) throw CloudFormatError(CloudFormatError::Kind::io, 0, "write failed for '" + path.string() + "'");
}

RbfVelocityField load_field(const std::filesystem::path& path) {
  using detail::get_le;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CloudFormatError(CloudFormatError::Kind::io, 0, "cannot open '" + path.string() + "'");
  auto fail = [&](const char* what) {
    return CloudFormatError(CloudFormatError::Kind::header, 0, "'" + path.string() + "': " + what);
  };
  std::array<char, 4> magic{};
  std::uint32_t version = 0;
  std::uint32_t mode = 0;
  std::uint64_t max_centers = 0;
  std::uint64_t count = 0;
  KernelConfig cfg;
  if (!in.read(magic.data(), magic.size()) || magic != kFieldMagic || !get_le(in, version) ||
      version != kFieldVersion) {
    throw fail("not a version-1 field file");
  }
  if (!get_le(in, mode) || mode > 1 || !get_le(in, cfg.bandwidth_value) ||
      !get_le(in, cfg.regularization_beta) || !get_le(in, max_centers) || !get_le(in, count)) {
    throw fail("truncated header");
  }
  cfg.bandwidth_mode = static_cast<BandwidthMode>(mode);
  if (max_centers) cfg.max_centers = max_centers;
  std::vector<SliceModel> slices(count);
  for (SliceModel& s : slices) {
    std::uint64_t rows = 0;
    std::uint64_t cols = 0;
    std::uint64_t iterations = 0;
    std::uint8_t converged = 0;
    if (!get_le(in, s.slice_time) || !get_le(in, s.bandwidth) || !get_le(in, rows) || !get_le(in, cols) ||
        !get_le(in, iterations) || !get_le(in, s.cg.final_relative_residual) || !get_le(in, converged) ||
        !get_le(in, s.cg.min_curvature)) {
      throw fail("truncated slice header");
    }
    s.cg.iterations = iterations;
    s.cg.converged = converged != 0;
    s.centers = Matrix(rows, cols);
    s.coefficients = Matrix(rows, cols);
    for (double& v : s.centers.values()) {
      if (!get_le(in, v)) throw fail("truncated centers");
    }
    for (double& v : s.coefficients.values()) {
      if (!get_le(in, v)) throw fail("truncated coefficients");
    }
  }
  return RbfVelocityField(std::move(slices), cfg);
}

}  // namespace iterflow
