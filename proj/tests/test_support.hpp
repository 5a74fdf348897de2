#pragma once

// Hand-rolled generators for property tests. Independent of the library's samplers so a bug
// there cannot hide itself.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "iterflow/matrix.hpp"
#include "iterflow/pointcloud.hpp"

namespace testing {

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * (static_cast<double>(engine_() >> 11) * 0x1.0p-53);
  }
  std::size_t index(std::size_t lo, std::size_t hi) {  // inclusive range
    return lo + static_cast<std::size_t>(engine_() % (hi - lo + 1));
  }
  double gaussian() {
    // Sum of 12 uniforms: crude but adequate for test data.
    double s = -6.0;
    for (int i = 0; i < 12; ++i) s += uniform(0.0, 1.0);
    return s;
  }

  iterflow::Matrix matrix(std::size_t rows, std::size_t cols, double lo = -1.0, double hi = 1.0) {
    iterflow::Matrix m(rows, cols);
    for (auto& v : m.values()) v = uniform(lo, hi);
    return m;
  }
  iterflow::Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double scale = 1.0) {
    iterflow::Matrix m(rows, cols);
    for (auto& v : m.values()) v = scale * gaussian();
    return m;
  }
  iterflow::PointCloud cloud(std::size_t rows, std::size_t cols, double scale = 1.0) {
    return iterflow::PointCloud(gaussian_matrix(rows, cols, scale));
  }

 private:
  std::mt19937_64 engine_;
};

inline double max_abs_diff(const iterflow::Matrix& a, const iterflow::Matrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

inline double frobenius(const iterflow::Matrix& a) {
  double s = 0.0;
  for (const double v : a.values()) s += v * v;
  return std::sqrt(s);
}

inline double relative_error(const iterflow::Matrix& got, const iterflow::Matrix& want) {
  double num = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    const double d = got.data()[i] - want.data()[i];
    num += d * d;
  }
  return std::sqrt(num) / std::max(frobenius(want), 1e-300);
}

// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("iterflow_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing
