#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "iterflow/matrix.hpp"
#include "iterflow/random.hpp"

namespace iterflow {

// N points in d dimensions. Always nonempty and finite; enforced on construction.
class PointCloud {
 public:
  explicit PointCloud(Matrix points);

  std::size_t count() const noexcept { return points_.rows(); }
  std::size_t dim() const noexcept { return points_.cols(); }
  const Matrix& points() const noexcept { return points_; }
  std::span<const double> point(std::size_t i) const noexcept { return points_.row(i); }

  friend bool operator==(const PointCloud&, const PointCloud&) = default;

 private:
  Matrix points_;
};

struct MixtureComponent {
  double weight = 0.0;
  std::vector<double> mean;
  Matrix covariance;  // d x d, symmetric positive definite
};

struct GaussianMixtureSpec {
  std::vector<MixtureComponent> components;

  std::size_t dim() const { return components.empty() ? 0 : components.front().mean.size(); }
  // Throws ValidationError on unnormalized weights, shape mismatch or non-SPD covariance.
  void validate() const;
};

PointCloud sample_gaussian_mixture(const GaussianMixtureSpec& spec, std::size_t n, RandomSeed seed);
PointCloud sample_standard_normal(std::size_t dim, std::size_t n, RandomSeed seed);

enum class CloudFormat { csv, packed_binary };

// csv: "# dim=<d>" header then one comma-separated row per point.
// packed_binary: "IFMC", u32 version, u64 N, u64 d, N*d little-endian IEEE-754 doubles.
PointCloud load_cloud(const std::filesystem::path& path, CloudFormat format);
// Detects packed-binary by its magic, otherwise parses csv.
PointCloud load_cloud(const std::filesystem::path& path);
void save_cloud(const PointCloud& cloud, const std::filesystem::path& path, CloudFormat format);

// Matrix overload so callers holding raw data hit the same validation as PointCloud.
void save_cloud(const Matrix& points, const std::filesystem::path& path, CloudFormat format);

CloudFormat format_for_path(const std::filesystem::path& path);

}  // namespace iterflow
