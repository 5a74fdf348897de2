#pragma once

#include <cstddef>

#include "iterflow/pointcloud.hpp"
#include "iterflow/random.hpp"

namespace iterflow {

// Symmetric closest-point transport cost
//   value = (sum_{i in a} min_{k in b} |a_i - b_k|^2 + sum_{i in b} min_{k in a} |b_i - a_k|^2) / (2 N)
// with N = max(n_a, n_b).
struct CostReport {
  double value = 0.0;
  std::size_t n_a = 0;
  std::size_t n_b = 0;
  std::size_t normalizer = 0;  // N
  double a_to_b = 0.0;
  double b_to_a = 0.0;
};

// Row-parallel nearest-neighbor search; the per-row minima are summed in index order.
CostReport closest_point_cost(const PointCloud& a, const PointCloud& b);
// Single-threaded brute-force reference.
CostReport closest_point_cost_reference(const PointCloud& a, const PointCloud& b);

// Cost between two disjoint random subsets of `data`, each of `subset_size` points.
CostReport internal_similarity(const PointCloud& data, std::size_t subset_size, RandomSeed seed);

}  // namespace iterflow
