#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "iterflow/errors.hpp"
#include "iterflow/flowmatch.hpp"
#include "test_support.hpp"

using namespace iterflow;
using testing::Gen;

namespace {

double norm_row(const Matrix& m, std::size_t i) {
  double s = 0.0;
  for (const double v : m.row(i)) s += v * v;
  return std::sqrt(s);
}

double norm(std::span<const double> v) {
  double s = 0.0;
  for (const double e : v) s += e * e;
  return std::sqrt(s);
}

KernelConfig fixed_kernel(double bw) {
  KernelConfig k;
  k.bandwidth_mode = BandwidthMode::fixed;
  k.bandwidth_value = bw;
  return k;
}

}  // namespace

TEST_CASE("time grids") {
  const TimeGrid g = TimeGrid::uniform(5);
  CHECK(g.times() == std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0});
  CHECK(TimeGrid::uniform(1).times() == std::vector<double>{0.5});
  const TimeGrid seg = TimeGrid::uniform(3, 0.2, 0.6);
  CHECK(seg.times().front() == 0.2);
  CHECK(seg.times().back() == 0.6);
  CHECK_THROWS_AS(TimeGrid::uniform(0), ValidationError);
  CHECK_THROWS_AS(TimeGrid::uniform(3, 0.5, 0.5), ValidationError);
  CHECK_THROWS_AS(TimeGrid({}), ValidationError);
  CHECK_THROWS_AS(TimeGrid({0.2, 0.2}), ValidationError);
  CHECK_THROWS_AS(TimeGrid({-0.1}), ValidationError);
  CHECK_THROWS_AS(TimeGrid({1.5}), ValidationError);
}

TEST_CASE("default pair count") {
  CHECK(default_pair_count(2000, 2000) == 4096);
  CHECK(default_pair_count(10, 20) == 200);
  CHECK(default_pair_count(1, 1) == 1);
  CHECK(default_pair_count(5000, 1) == 4096);
}

TEST_CASE("hand-evaluated homotopy row") {
  Matrix a(1, 2), b(1, 2);
  b(0, 0) = 2.0;
  b(0, 1) = 4.0;
  const HomotopyBatch batch = build_homotopy_batch(PointCloud(a), PointCloud(b), 0.5, PairingPlan{3, RandomSeed{}});
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(batch.points(i, 0) == 1.0);
    CHECK(batch.points(i, 1) == 2.0);
    CHECK(batch.velocities(i, 0) == 2.0);
    CHECK(batch.velocities(i, 1) == 4.0);
  }
}

TEST_CASE("endpoints reproduce the selected samples exactly") {
  Gen gen(71);
  const PointCloud start = gen.cloud(30, 3);
  const PointCloud target = gen.cloud(40, 3, 5.0);
  const PairingPlan plan{64, RandomSeed{4}};
  const HomotopyBatch b0 = build_homotopy_batch(start, target, 0.0, plan);
  const HomotopyBatch b1 = build_homotopy_batch(start, target, 1.0, plan);
  for (std::size_t i = 0; i < 64; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(b0.points(i, j) == start.points()(b0.start_index[i], j));
      CHECK(b1.points(i, j) == target.points()(b1.target_index[i], j));
    }
  }
}

TEST_CASE("batch identity, velocity bound and pair coverage (property)") {
  Gen gen(72);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = gen.index(1, 6);
    const PointCloud start = gen.cloud(gen.index(1, 40), d);
    const PointCloud target = gen.cloud(gen.index(1, 40), d, 3.0);
    const double origin = trial % 2 ? gen.uniform(0.0, 0.9) : 0.0;
    const double t = gen.uniform(origin, 1.0);
    const HomotopyBatch batch =
        build_homotopy_batch(start, target, t, PairingPlan{gen.index(1, 200), RandomSeed{trial + 0ULL}}, origin);
    Matrix points, velocities;
    recompute_homotopy_rows(start, target, batch, points, velocities);
    CHECK(points == batch.points);
    CHECK(velocities == batch.velocities);
    for (std::size_t i = 0; i < batch.points.rows(); ++i) {
      REQUIRE(batch.start_index[i] < start.count());
      REQUIRE(batch.target_index[i] < target.count());
      const double bound =
          (norm(target.point(batch.target_index[i])) + norm(start.point(batch.start_index[i]))) / (1.0 - origin);
      CHECK(norm_row(batch.velocities, i) <= bound * (1.0 + 1e-15));
    }
  }
}

TEST_CASE("pairs are drawn uniformly from start x target") {
  Gen gen(73);
  const PointCloud start = gen.cloud(4, 1);
  const PointCloud target = gen.cloud(5, 1);
  const std::size_t p = 40000;
  const HomotopyBatch batch = build_homotopy_batch(start, target, 0.3, PairingPlan{p, RandomSeed{8}});
  std::vector<double> counts(20, 0.0);
  for (std::size_t i = 0; i < p; ++i) counts[batch.start_index[i] * 5 + batch.target_index[i]] += 1.0;
  double chi2 = 0.0;
  for (const double c : counts) chi2 += (c - p / 20.0) * (c - p / 20.0) / (p / 20.0);
  CHECK(chi2 < 43.8);  // 0.999 quantile, 19 degrees of freedom
}

TEST_CASE("corrected homotopy starts at the re-based state and ends at the target") {
  Gen gen(74);
  const PointCloud xhat = gen.cloud(10, 2);
  const PointCloud target = gen.cloud(10, 2, 2.0);
  const double tj = 2.0 / 3.0;
  const PairingPlan plan{50, RandomSeed{1}};
  const HomotopyBatch at_start = build_homotopy_batch(xhat, target, tj, plan, tj);
  const HomotopyBatch at_end = build_homotopy_batch(xhat, target, 1.0, plan, tj);
  for (std::size_t i = 0; i < 50; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      CHECK(at_start.points(i, j) == xhat.points()(at_start.start_index[i], j));
      CHECK(at_end.points(i, j) == target.points()(at_end.target_index[i], j));
      const double v = (target.points()(at_end.target_index[i], j) - xhat.points()(at_end.start_index[i], j)) / (1.0 - tj);
      CHECK(at_end.velocities(i, j) == v);
    }
  }
  CHECK_THROWS_AS(build_homotopy_batch(xhat, target, 1.0, plan, 1.0), ValidationError);
  CHECK_THROWS_AS(build_homotopy_batch(xhat, target, 0.1, plan, 0.5), ValidationError);
}

TEST_CASE("batch argument validation") {
  const PointCloud a(Matrix(3, 2)), b(Matrix(3, 3));
  CHECK_THROWS_AS(build_homotopy_batch(a, b, 0.5, PairingPlan{}), ValidationError);
  CHECK_THROWS_AS(build_homotopy_batch(a, a, 0.5, PairingPlan{0, RandomSeed{}}), ValidationError);
  CHECK_THROWS_AS(build_homotopy_batch(a, a, 1.5, PairingPlan{}), ValidationError);
}

TEST_CASE("fit_round is seed-deterministic") {
  Gen gen(75);
  const PointCloud start = gen.cloud(60, 2);
  const PointCloud target = gen.cloud(60, 2, 2.0);
  const TimeGrid grid = TimeGrid::uniform(4);
  const PairingPlan plan{80, RandomSeed{12}};
  const RbfVelocityField a = fit_round(start, target, grid, plan, KernelConfig{}, CgConfig{});
  const RbfVelocityField b = fit_round(start, target, grid, plan, KernelConfig{}, CgConfig{});
  CHECK(a == b);
  CHECK(a.slices().size() == 4);
  for (std::size_t s = 0; s < 4; ++s) CHECK(a.slices()[s].slice_time == grid.times()[s]);
  const RbfVelocityField c = fit_round(start, target, grid, PairingPlan{80, RandomSeed{13}}, KernelConfig{}, CgConfig{});
  CHECK_FALSE(a == c);
}

TEST_CASE("identical single-point clouds give a zero field and no displacement") {
  Matrix p(1, 2);
  p(0, 0) = 0.75;
  p(0, 1) = -1.5;
  const PointCloud c(p);
  const RbfVelocityField field =
      fit_round(c, c, TimeGrid::uniform(4), PairingPlan{8, RandomSeed{1}}, fixed_kernel(1.0), CgConfig{});
  Gen gen(76);
  Matrix near = gen.gaussian_matrix(10, 2, 0.5);
  for (std::size_t i = 0; i < 10; ++i) {
    near(i, 0) += 0.75;
    near(i, 1) -= 1.5;
  }
  CHECK(field.evaluate(near, 0.3) == Matrix(10, 2));
  const PointCloud moved = transport(c, field, OdeConfig{});
  CHECK(std::hypot(moved.points()(0, 0) - 0.75, moved.points()(0, 1) + 1.5) <= 1e-9);
}

TEST_CASE("single-slice grid with two pairs clamps everywhere") {
  Gen gen(77);
  const PointCloud start = gen.cloud(5, 2);
  const PointCloud target = gen.cloud(5, 2);
  const RbfVelocityField field =
      fit_round(start, target, TimeGrid::uniform(1), PairingPlan{2, RandomSeed{3}}, fixed_kernel(1.0), CgConfig{});
  REQUIRE(field.slices().size() == 1);
  CHECK(field.slices()[0].slice_time == 0.5);
  const Matrix q = gen.gaussian_matrix(3, 2);
  const Matrix mid = field.evaluate(q, 0.5);
  CHECK(field.evaluate(q, 0.0) == mid);
  CHECK(field.evaluate(q, 0.9) == mid);
}

TEST_CASE("zero field transport leaves the cloud unchanged") {
  Gen gen(78);
  SliceModel s;
  s.centers = gen.gaussian_matrix(4, 2);
  s.coefficients = Matrix(4, 2);
  const RbfVelocityField field({s}, KernelConfig{});
  const PointCloud c = gen.cloud(6, 2);
  CHECK(transport(c, field, OdeConfig{}) == c);
  CHECK_THROWS_AS(transport(gen.cloud(2, 3), field, OdeConfig{}), ValidationError);
}

TEST_CASE("translation flow moves the mean by the shift") {
  const std::size_t n = 400;
  const PointCloud start = sample_standard_normal(2, n, RandomSeed{1});
  Matrix shifted = sample_standard_normal(2, n, RandomSeed{2}).points();
  const double c[2] = {3.0, 1.5};
  for (std::size_t i = 0; i < n; ++i) {
    shifted(i, 0) += c[0];
    shifted(i, 1) += c[1];
  }
  const PointCloud target(shifted);
  const RbfVelocityField field =
      fit_round(start, target, TimeGrid::uniform(8), PairingPlan{600, RandomSeed{5}}, KernelConfig{}, CgConfig{});
  // Per-slice training velocities average to the shift up to pair-sampling noise.
  const HomotopyBatch batch = build_homotopy_batch(start, target, 0.5, PairingPlan{600, derive_seed(RandomSeed{5}, 3)});
  for (std::size_t j = 0; j < 2; ++j) {
    double m = 0.0;
    for (std::size_t i = 0; i < 600; ++i) m += batch.velocities(i, j);
    CHECK(std::abs(m / 600 - c[j]) < 4.0 * std::sqrt(2.0 / 600));
  }
  const PointCloud moved = transport(start, field, OdeConfig{});
  for (std::size_t j = 0; j < 2; ++j) {
    double disp = 0.0;
    for (std::size_t i = 0; i < n; ++i) disp += moved.points()(i, j) - start.points()(i, j);
    CHECK(std::abs(disp / n - c[j]) < 0.35);
  }
}
