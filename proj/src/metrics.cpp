#include "iterflow/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "iterflow/errors.hpp"
#include "iterflow/kernels.hpp"

namespace iterflow {

namespace {

void check_pair(const PointCloud& a, const PointCloud& b) {
  if (a.dim() != b.dim()) {
    throw ValidationError("clouds differ in dimension (" + std::to_string(a.dim()) + " vs " +
                          std::to_string(b.dim()) + ")");
  }
}

double ordered_sum(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

CostReport make_report(const PointCloud& a, const PointCloud& b, double ab, double ba) {
  CostReport r;
  r.n_a = a.count();
  r.n_b = b.count();
  r.normalizer = std::max(r.n_a, r.n_b);
  r.a_to_b = ab;
  r.b_to_a = ba;
  r.value = (ab + ba) / (2.0 * static_cast<double>(r.normalizer));
  return r;
}

}  // namespace

CostReport closest_point_cost(const PointCloud& a, const PointCloud& b) {
  check_pair(a, b);
  std::vector<double> nearest;
  kernels::parallel::nearest_squared_distances(a.points(), b.points(), nearest);
  const double ab = ordered_sum(nearest);
  kernels::parallel::nearest_squared_distances(b.points(), a.points(), nearest);
  const double ba = ordered_sum(nearest);
  return make_report(a, b, ab, ba);
}

CostReport closest_point_cost_reference(const PointCloud& a, const PointCloud& b) {
  check_pair(a, b);
  std::vector<double> nearest;
  kernels::serial::nearest_squared_distances(a.points(), b.points(), nearest);
  const double ab = ordered_sum(nearest);
  kernels::serial::nearest_squared_distances(b.points(), a.points(), nearest);
  const double ba = ordered_sum(nearest);
  return make_report(a, b, ab, ba);
}

CostReport internal_similarity(const PointCloud& data, std::size_t subset_size, RandomSeed seed) {
  if (subset_size == 0) throw ValidationError("internal similarity subset size must be >= 1");
  if (2 * subset_size > data.count()) {
    throw ValidationError("internal similarity needs 2 * " + std::to_string(subset_size) + " points, cloud has " +
                          std::to_string(data.count()));
  }
  std::vector<std::size_t> perm(data.count());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = 0; i < 2 * subset_size; ++i) {
    const std::size_t j = i + rng.uniform_index(perm.size() - i);
    std::swap(perm[i], perm[j]);
  }
  Matrix first(subset_size, data.dim());
  Matrix second(subset_size, data.dim());
  for (std::size_t i = 0; i < subset_size; ++i) {
    std::copy_n(data.point(perm[i]).begin(), data.dim(), first.row(i).begin());
    std::copy_n(data.point(perm[subset_size + i]).begin(), data.dim(), second.row(i).begin());
  }
  return closest_point_cost(PointCloud(std::move(first)), PointCloud(std::move(second)));
}

}  // namespace iterflow
