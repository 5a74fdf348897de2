// Acceptance suite: one PASS/FAIL line per criterion, detail lines prefixed with '#'.
// Exit status is nonzero if any criterion fails.

#include <sys/wait.h>

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "iterflow/experiment.hpp"
#include "iterflow/kernels.hpp"
#include "iterflow/metrics.hpp"
#include "iterflow/ode.hpp"
#include "iterflow/rbf.hpp"
#include "iterflow/refine.hpp"
#include "test_support.hpp"

using namespace iterflow;
using nlohmann::json;
using testing::Gen;
using testing::TempDir;

namespace {

int failures = 0;

void report(int id, bool pass, const std::string& summary) {
  std::printf("%s criterion %d: %s\n", pass ? "PASS" : "FAIL", id, summary.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

template <class... Args>
void detail(const char* fmt, Args... args) {
  std::printf("#   ");
  std::printf(fmt, args...);
  std::printf("\n");
  std::fflush(stdout);
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

// ---------------------------------------------------------------------------------------------
// Criteria 1-4: mixture preset at full size, defaults, five seeds.

constexpr std::uint64_t kSeeds[] = {1, 2, 3, 4, 5};

struct SeedRuns {
  std::vector<double> end_path;  // trace costs: initial, round 0, round 1, ... (stop-rule run)
  std::string end_path_reason;
  double similarity = 0.0;
  double gradual_final = 0.0;
  double seconds_first_two_rounds = 0.0;
};

ExperimentConfig mixture_preset(std::uint64_t seed, const std::filesystem::path& out) {
  ExperimentConfig cfg = preset_config("two-to-three-gaussians");
  cfg.seed = seed;
  cfg.output_dir = cfg.output_resolved = out;
  cfg.save_iterates = false;
  cfg.round.record_every.reset();
  return cfg;
}

SeedRuns run_mixture_seed(std::uint64_t seed, const TempDir& dir) {
  SeedRuns r;
  // Round seeds do not depend on the stop rule, so the stop-rule run's first rounds are exactly
  // the rounds of a fixed-length run. Only if it stops before three rounds is an extension needed.
  ExperimentConfig cfg = mixture_preset(seed, dir / ("end_" + std::to_string(seed)));
  const auto t0 = std::chrono::steady_clock::now();
  const RunResult end = run_experiment(cfg);
  r.end_path = end.trace.costs();
  r.end_path_reason = end.trace.termination_reason;
  r.similarity = end.internal_similarity ? end.internal_similarity->value : NAN;
  r.seconds_first_two_rounds = 0.0;
  for (std::size_t k = 1; k < std::min<std::size_t>(3, end.trace.iterates.size()); ++k) {
    r.seconds_first_two_rounds += end.trace.iterates[k].wall_seconds;
  }
  detail("seed %llu end-path (%s, %.0fs): %s", static_cast<unsigned long long>(seed), r.end_path_reason.c_str(),
         seconds_since(t0), [&] {
           std::string s;
           for (double c : r.end_path) s += fmt(c) + " ";
           return s;
         }().c_str());
  if (r.end_path.size() < 4) {
    ExperimentConfig fixed = mixture_preset(seed, dir / ("end3_" + std::to_string(seed)));
    fixed.stop.tolerance = 0.0;
    fixed.stop.max_iterations = 3;
    r.end_path = run_experiment(fixed).trace.costs();
    detail("seed %llu extended to three rounds: %s %s %s %s", static_cast<unsigned long long>(seed),
           fmt(r.end_path[0]).c_str(), fmt(r.end_path[1]).c_str(), fmt(r.end_path[2]).c_str(),
           fmt(r.end_path[3]).c_str());
  }

  ExperimentConfig g = mixture_preset(seed, dir / ("grad_" + std::to_string(seed)));
  g.algorithm = Algorithm::gradual;
  g.checkpoints = GradualConfig::uniform_checkpoints(6);
  const auto t1 = std::chrono::steady_clock::now();
  r.gradual_final = run_experiment(g).trace.costs().back();
  detail("seed %llu gradual, 6 intervals (%.0fs): final %s; internal similarity %s",
         static_cast<unsigned long long>(seed), seconds_since(t1), fmt(r.gradual_final).c_str(),
         fmt(r.similarity).c_str());
  return r;
}

void mixture_criteria() {
  TempDir dir("acceptance");
  std::vector<SeedRuns> runs;
  for (const std::uint64_t s : kSeeds) runs.push_back(run_mixture_seed(s, dir));

  // 1. First correction (round 1) against one-shot flow matching (round 0).
  {
    std::vector<double> c0, c1, secs;
    for (const SeedRuns& r : runs) {
      c0.push_back(r.end_path[1]);
      c1.push_back(r.end_path[2]);
      secs.push_back(r.seconds_first_two_rounds);
    }
    const double m0 = median(c0), m1 = median(c1);
    detail("median seconds for round 0 + round 1: %.1f (target < 120 on a laptop)", median(secs));
    report(1, m1 <= m0 / 10.0,
           "median cost after first correction " + fmt(m1) + " vs round 0 " + fmt(m0) + " (reduction " +
               fmt(m0 / m1) + "x, need >= 10x)");
  }

  // 2. Contraction over three rounds.
  {
    bool pass = true;
    std::string s;
    for (std::size_t k = 0; k < 3; ++k) {
      std::vector<double> ratios;
      for (const SeedRuns& r : runs) ratios.push_back(r.end_path[k + 1] / r.end_path[k]);
      const double m = median(ratios);
      pass = pass && m < 1.0;
      s += "k=" + std::to_string(k) + ": " + fmt(m) + "  ";
    }
    report(2, pass, "median cost ratios " + s);
  }

  // 3. Gradual refinement (6 intervals) within 2x of the cost after three end-path rounds.
  {
    int ok = 0;
    std::string s;
    for (const SeedRuns& r : runs) {
      const double ratio = r.gradual_final / r.end_path[3];
      ok += ratio <= 2.0;
      s += fmt(ratio) + " ";
    }
    report(3, ok >= 3, "gradual/end-path ratios " + s + "(" + std::to_string(ok) + "/5 within 2x, need >= 3)");
  }

  // 4. Stop-rule run against the internal similarity of the target.
  {
    std::vector<double> ratios;
    std::string s;
    for (const SeedRuns& r : runs) {
      ratios.push_back(r.end_path.back() / r.similarity);
      s += fmt(ratios.back()) + " ";
    }
    report(4, median(ratios) <= 2.0, "final cost / internal similarity per seed " + s + "(median " +
                                         fmt(median(ratios)) + ", need <= 2)");
  }
}

// ---------------------------------------------------------------------------------------------
// Criteria 5, 6: RBF solves against a dense direct solve built independently in Eigen.

Eigen::MatrixXd oracle_kernel(const Matrix& x, double bw) {
  const std::size_t m = x.rows();
  Eigen::MatrixXd k(m, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double d2 = 0.0;
      for (std::size_t a = 0; a < x.cols(); ++a) d2 += (x(i, a) - x(j, a)) * (x(i, a) - x(j, a));
      k(i, j) = std::exp(-d2 / (2.0 * bw * bw));
    }
  return k;
}

Eigen::MatrixXd to_eigen(const Matrix& m) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) e(i, j) = m(i, j);
  return e;
}

void rbf_criteria() {
  Gen gen(2024);
  double worst = 0.0;
  bool converged = true;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = gen.index(2, 200), d = gen.index(1, 8);
    const Matrix x = gen.gaussian_matrix(m, d, 1.5);
    const Matrix v = gen.gaussian_matrix(m, d);
    KernelConfig k;
    k.bandwidth_value = gen.uniform(0.3, 1.5);
    k.regularization_beta = std::pow(10.0, gen.uniform(-4.0, 0.0));
    const SliceModel s = fit_slice(x, v, 0.0, k, CgConfig{}, RandomSeed{static_cast<std::uint64_t>(trial)});
    converged = converged && s.cg.converged;
    Eigen::MatrixXd a = oracle_kernel(x, s.bandwidth);
    a.diagonal().array() += k.regularization_beta;
    const Eigen::MatrixXd direct = a.ldlt().solve(to_eigen(v));
    const double err = (to_eigen(s.coefficients) - direct).norm() / direct.norm();
    worst = std::max(worst, err);
  }
  report(5, converged && worst <= 1e-6, "20 instances, worst relative error " + fmt(worst) + " (need <= 1e-6)");

  // Jittered grid of distinct centers; bandwidth below the spacing keeps Phi well conditioned.
  worst = 0.0;
  converged = true;
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t d = gen.index(1, 3), side = d == 1 ? 40 : d == 2 ? 8 : 4;
    std::size_t m = 1;
    for (std::size_t a = 0; a < d; ++a) m *= side;
    Matrix x(m, d);
    for (std::size_t i = 0; i < m; ++i) {
      std::size_t rest = i;
      for (std::size_t a = 0; a < d; ++a) {
        x(i, a) = static_cast<double>(rest % side) + gen.uniform(-0.2, 0.2);
        rest /= side;
      }
    }
    const Matrix v = gen.gaussian_matrix(m, d);
    KernelConfig k;
    k.bandwidth_mode = BandwidthMode::fixed;
    k.bandwidth_value = gen.uniform(0.3, 0.6);
    k.regularization_beta = 0.0;
    const SliceModel s = fit_slice(x, v, 0.0, k, CgConfig{1e-12, std::nullopt, false});
    converged = converged && s.cg.converged;
    worst = std::max(worst, testing::relative_error(evaluate_slice(s, x), v));
  }
  report(6, converged && worst <= 1e-6,
         "beta = 0, 10 center sets, worst relative error at centers " + fmt(worst) + " (need <= 1e-6)");
}

// ---------------------------------------------------------------------------------------------

void integrator_criterion() {
  const VelocityFn identity = [](const Matrix& x, double, Matrix& v) { v = x; };
  const auto exact = [](const Matrix& x0, double t) {
    Matrix out = x0;
    for (auto& e : out.values()) e *= std::exp(t);
    return out;
  };
  Gen gen(7);
  const PointCloud c = gen.cloud(10, 3);
  const OrderEstimate e = convergence_order(identity, exact, c, OdeMethod::euler, 0.0, 1.0, {32, 64, 128, 256, 512});
  const OrderEstimate r = convergence_order(identity, exact, c, OdeMethod::rk4, 0.0, 1.0, {4, 8, 16, 32, 64});
  const bool pass = !e.exact && !r.exact && e.slope >= 0.9 && e.slope <= 1.1 && r.slope >= 3.7 && r.slope <= 4.3;
  report(7, pass, "Euler slope " + fmt(e.slope) + " (need [0.9, 1.1]), RK4 slope " + fmt(r.slope) + " (need [3.7, 4.3])");
}

double enumerated_cost(const PointCloud& a, const PointCloud& b) {
  auto directed = [](const PointCloud& from, const PointCloud& to) {
    double sum = 0.0;
    for (std::size_t i = 0; i < from.count(); ++i) {
      double best = INFINITY;
      for (std::size_t k = 0; k < to.count(); ++k) {
        double d2 = 0.0;
        for (std::size_t j = 0; j < from.dim(); ++j) {
          const double diff = to.points()(k, j) - from.points()(i, j);
          d2 += diff * diff;
        }
        best = std::min(best, d2);
      }
      sum += best;
    }
    return sum;
  };
  return (directed(a, b) + directed(b, a)) / (2.0 * static_cast<double>(std::max(a.count(), b.count())));
}

void metric_criterion() {
  const PointCloud same(Matrix(3, 2, std::vector<double>{0.5, 1.0, -2.0, 3.0, 7.0, 0.0}));
  Matrix b(1, 2);
  b(0, 0) = 3.0;
  b(0, 1) = 4.0;
  const PointCloud u(Matrix(2, 1, std::vector<double>{0.0, 1.0}));
  const PointCloud w(Matrix(3, 1, std::vector<double>{0.0, 1.0, 10.0}));
  const double f0 = closest_point_cost(same, same).value;
  const double f25 = closest_point_cost(PointCloud(Matrix(1, 2)), PointCloud(b)).value;
  const double f135 = closest_point_cost(u, w).value;
  bool pass = f0 == 0.0 && f25 == 25.0 && f135 == 13.5;

  Gen gen(88);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t d = gen.index(1, 8);
    const PointCloud x = gen.cloud(gen.index(1, 400), d);
    const PointCloud y = gen.cloud(gen.index(1, 400), d, 2.0);
    const double fast = closest_point_cost(x, y).value;
    const double scale = std::max(1.0, enumerated_cost(x, y));
    worst = std::max({worst, std::abs(fast - closest_point_cost_reference(x, y).value) / scale,
                      std::abs(fast - enumerated_cost(x, y)) / scale});
  }
  pass = pass && worst <= 1e-12;
  report(8, pass, "fixtures " + fmt(f0) + ", " + fmt(f25) + ", " + fmt(f135) +
                      "; 50 random pairs, worst difference to brute force " + fmt(worst) + " (need <= 1e-12)");
}

void translation_criterion() {
  // One-shot flow matching on the gaussian-shift preset.
  const ExperimentConfig cfg = preset_config("gaussian-shift");
  const PointCloud start = materialize(cfg.source, source_seed(cfg.seed));
  const PointCloud target = materialize(cfg.target, target_seed(cfg.seed));
  EndPathConfig e;
  e.round = cfg.round;
  e.round.record_every.reset();
  e.stop.max_iterations = 1;
  e.seed = RandomSeed{cfg.seed};
  const RefinementTrace trace = end_path_correct(start, target, e);
  const PointCloud& moved = trace.final_cloud();
  const std::vector<double>& c = cfg.target.mixture.components[0].mean;
  bool pass = true;
  std::string s;
  for (std::size_t j = 0; j < 2; ++j) {
    double disp = 0.0, ms = 0.0, mt = 0.0;
    for (std::size_t i = 0; i < start.count(); ++i) {
      disp += moved.points()(i, j) - start.points()(i, j);
      ms += start.points()(i, j);
    }
    for (std::size_t i = 0; i < target.count(); ++i) mt += target.points()(i, j);
    disp /= start.count();
    ms /= start.count();
    mt /= target.count();
    // Standard error of a difference of two sample means.
    double vs = 0.0, vt = 0.0;
    for (std::size_t i = 0; i < start.count(); ++i) vs += std::pow(start.points()(i, j) - ms, 2);
    for (std::size_t i = 0; i < target.count(); ++i) vt += std::pow(target.points()(i, j) - mt, 2);
    vs /= start.count() - 1;
    vt /= target.count() - 1;
    const double se = std::sqrt(vs / start.count() + vt / target.count());
    pass = pass && std::abs(disp - c[j]) <= 3.0 * se;
    s += "axis " + std::to_string(j) + ": " + fmt(disp) + " vs " + fmt(c[j]) + " (" + fmt(std::abs(disp - c[j]) / se) +
         " SE)  ";
  }
  report(9, pass, "mean displacement " + s + "(need <= 3 SE)");
}

// ---------------------------------------------------------------------------------------------
// Criterion 10: every preset re-run through the CLI with the same seed, under different thread counts.

int run_cli(const std::string& args, const std::string& env) {
  const std::string cmd = env + " \"" + ITERFLOW_CLI_PATH + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void determinism_criterion() {
  TempDir dir("acceptance_det");
  // Reduced sizes keep the four presets affordable; every code path is the preset's own.
  std::map<std::string, json> overrides;
  overrides["two-to-three-gaussians"] = json::parse(R"({"source": {"count": 400}, "target": {"count": 400},
                                                       "pairing": {"pairs_per_slice": 512},
                                                       "refinement": {"max_outer_iterations": 3}})");
  overrides["gaussian-shift"] =
      json::parse(R"({"source": {"count": 400}, "target": {"count": 400}, "pairing": {"pairs_per_slice": 512}})");
  for (const std::size_t dim : {32, 64}) {
    const std::string file = "latent_" + std::to_string(dim) + ".bin";
    save_cloud(sample_standard_normal(dim, 300, RandomSeed{dim}), dir / file, CloudFormat::packed_binary);
    overrides["latent-" + std::to_string(dim)] =
        json{{"source", {{"count", 300}}},
             {"target", {{"path", file}}},
             {"pairing", {{"pairs_per_slice", 512}}},
             {"refinement", {{"max_outer_iterations", 2}}}};
  }

  bool pass = true;
  std::string s;
  for (const auto& [name, patch] : overrides) {
    json cfg = patch;
    cfg["preset"] = name;
    cfg["seed"] = 11;
    cfg["output"] = {{"directory", "run_" + name}};
    std::ofstream(dir / (name + ".json")) << cfg.dump(2);
    const std::filesystem::path out = dir / ("run_" + name);
    std::string manifest, costs;
    bool same = true;
    int code = 0;
    for (const char* env : {"ITERFLOW_THREADS=1", "ITERFLOW_THREADS=3"}) {
      code |= run_cli("run -q \"" + (dir / (name + ".json")).string() + "\"", env);
      const std::string m = slurp(out / "manifest.json"), c = slurp(out / "costs.csv");
      if (!manifest.empty()) same = same && m == manifest && c == costs;
      manifest = m;
      costs = c;
      std::filesystem::remove_all(out);
    }
    const bool ok = code == 0 && same && !manifest.empty();
    pass = pass && ok;
    s += name + (ok ? " identical  " : " DIFFERS  ");
  }
  report(10, pass, s);
}

}  // namespace

int main(int argc, char** argv) {
  // --quick skips the full-size mixture runs (criteria 1-4).
  const bool quick = argc > 1 && std::string(argv[1]) == "--quick";
  std::printf("# iterflow acceptance suite (%d OpenMP threads)\n", kernels::max_threads());
  if (!quick) {
    mixture_criteria();
  } else {
    std::printf("# criteria 1-4 skipped (--quick)\n");
  }
  rbf_criteria();
  integrator_criterion();
  metric_criterion();
  translation_criterion();
  determinism_criterion();
  std::printf("# %d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
