// iterflow: command-line harness for iterative flow matching.
//
//   iterflow run [CONFIG] [--preset NAME] [--seed N] [--out DIR]
//   iterflow metric A B
//   iterflow sample (--preset MIXTURE | --spec FILE) --n N --seed S --out PATH
//   iterflow inspect MANIFEST|RUN_DIR
//
// Exit status: 0 success, 1 runtime failure, 2 validation failure.
// ITERFLOW_THREADS overrides the OpenMP thread count.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "iterflow/errors.hpp"
#include "iterflow/experiment.hpp"
#include "iterflow/kernels.hpp"
#include "iterflow/metrics.hpp"
#include "iterflow/pointcloud.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace iterflow;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitValidation = 2;

int cmd_run(const std::string& config_path, const std::string& preset, std::optional<std::uint64_t> seed,
            const std::string& out_dir, bool quiet) {
  ExperimentConfig cfg;
  try {
    if (!config_path.empty()) {
      cfg = load_experiment_config(config_path);
    } else if (!preset.empty()) {
      cfg = preset_config(preset);
    } else {
      std::cerr << "error: run needs a config file or --preset\n";
      return kExitValidation;
    }
    if (seed) cfg.seed = *seed;
    if (!out_dir.empty()) cfg.output_dir = cfg.output_resolved = out_dir;
    cfg.validate();
  } catch (const ValidationError& e) {
    std::cerr << "invalid configuration: " << e.what() << '\n';
    return kExitValidation;
  } catch (const CloudFormatError& e) {
    std::cerr << "invalid configuration: " << e.what() << '\n';
    return kExitValidation;
  }

  if (cfg.algorithm == Algorithm::gradual) {
    std::cerr << "notice: gradual refinement is less robust than end-path correction; "
                 "prefer algorithm=end-path unless comparing the two\n";
  }
  try {
    const RunResult r = run_experiment(cfg, quiet ? nullptr : &std::cerr);
    std::cout << "termination: " << r.trace.termination_reason << "\n"
              << "final cost:  " << r.trace.iterates.back().cost.value << "\n";
    if (r.internal_similarity) std::cout << "internal similarity: " << r.internal_similarity->value << "\n";
    std::cout << "outputs:     " << cfg.output_resolved.string() << "\n";
    return 0;
  } catch (const ValidationError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kExitValidation;
  } catch (const CloudFormatError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "run failed: " << e.what() << '\n';
    return kExitRuntime;
  }
}

int cmd_metric(const std::string& a_path, const std::string& b_path) {
  try {
    const PointCloud a = load_cloud(a_path);
    const PointCloud b = load_cloud(b_path);
    const CostReport r = closest_point_cost(a, b);
    const json out = {{"value", r.value},   {"n_a", r.n_a},       {"n_b", r.n_b},
                      {"normalizer", r.normalizer}, {"a_to_b", r.a_to_b}, {"b_to_a", r.b_to_a}};
    std::cout << out.dump(2) << '\n';
    return 0;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const CloudFormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  }
}

int cmd_sample(const std::string& preset, const std::string& spec_path, long long n, std::uint64_t seed,
               const std::string& out, const std::string& format) {
  try {
    if (n <= 0) throw ValidationError("--n must be >= 1");
    if (preset.empty() == spec_path.empty()) throw ValidationError("give exactly one of --preset or --spec");
    GaussianMixtureSpec spec;
    if (!preset.empty()) {
      spec = preset_mixture(preset);
    } else {
      std::ifstream in(spec_path);
      if (!in) throw ValidationError("--spec: cannot open '" + spec_path + "'");
      json j = json::parse(in, nullptr, true, true);
      // Either a bare component list or a full cloud source object.
      json source = j.is_array() ? json{{"kind", "mixture"}, {"count", n}, {"components", j}} : j;
      source["count"] = n;
      json cfg = {{"source", source}, {"target", source}, {"output", {{"directory", "."}}}};
      spec = ExperimentConfig::from_json(cfg).source.mixture;
    }
    const CloudFormat fmt = format.empty() ? format_for_path(out)
                            : format == "csv" ? CloudFormat::csv
                            : format == "bin" ? CloudFormat::packed_binary
                                              : throw ValidationError("--format must be csv or bin");
    const PointCloud cloud = sample_gaussian_mixture(spec, static_cast<std::size_t>(n), RandomSeed{seed});
    save_cloud(cloud, out, fmt);
    std::cout << "wrote " << cloud.count() << " x " << cloud.dim() << " points to " << out << '\n';
    return 0;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const json::exception& e) {
    std::cerr << "error: --spec: " << e.what() << '\n';
    return kExitValidation;
  } catch (const CloudFormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

int cmd_inspect(const std::string& target) {
  fs::path path = target;
  if (fs::is_directory(path)) path /= "manifest.json";
  std::ifstream in(path);
  if (!in) {
    std::cerr << "error: cannot open '" << path.string() << "'\n";
    return kExitValidation;
  }
  json m;
  try {
    m = json::parse(in);
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  }
  const json& cfg = m.value("config", json::object());
  std::cout << "status:      " << m.value("status", "?") << '\n'
            << "library:     " << m.value("library_version", "?") << "  prng: " << m.value("prng", "?") << '\n'
            << "preset:      " << (cfg.contains("preset") && cfg["preset"].is_string() ? cfg["preset"].get<std::string>() : "-")
            << "  algorithm: " << cfg.value("algorithm", "?") << "  seed: " << cfg.value("seed", 0ULL) << '\n';
  if (m.contains("resolved")) {
    const json& r = m["resolved"];
    std::cout << "clouds:      " << r.value("source_count", 0) << " -> " << r.value("target_count", 0) << " points, d="
              << r.value("dim", 0) << ", pairs/slice " << r.value("pairs_per_slice", 0) << '\n';
  }
  if (m.contains("internal_similarity")) {
    std::cout << "internal similarity: " << m["internal_similarity"].value("value", 0.0) << '\n';
  }
  for (const json& it : m.value("iterations", json::array())) {
    std::cout << "  " << it.value("index", 0) << "  " << it.value("label", "") << "  cost " << it.value("cost", 0.0) << '\n';
  }
  if (m.contains("termination_reason")) std::cout << "termination: " << m["termination_reason"].get<std::string>() << '\n';
  if (m.contains("failure")) std::cout << "failure:     " << m["failure"].value("message", "") << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* threads = std::getenv("ITERFLOW_THREADS")) {
    kernels::set_num_threads(std::atoi(threads));
  }

  CLI::App app{"Iterative flow matching with RBF velocity fields"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run an experiment from a config file or preset");
  std::string config_path, run_preset, out_dir;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
  run->add_option("config", config_path, "Experiment config (JSON)");
  run->add_option("--preset", run_preset, "Start from a named preset instead of a config file");
  run->add_option("--seed", seed, "Override the config seed");
  run->add_option("--out", out_dir, "Override the output directory");
  run->add_flag("-q,--quiet", quiet, "No per-iteration progress on stderr");

  auto* metric = app.add_subcommand("metric", "Closest-point transport cost between two cloud files");
  std::string a_path, b_path;
  metric->add_option("a", a_path)->required();
  metric->add_option("b", b_path)->required();

  auto* sample = app.add_subcommand("sample", "Sample a Gaussian mixture into a cloud file");
  std::string sample_preset, spec_path, sample_out, format;
  long long n = 0;
  std::uint64_t sample_seed = 0;
  sample->add_option("--preset", sample_preset, "Named mixture (two-gaussians, three-gaussians)");
  sample->add_option("--spec", spec_path, "Mixture spec JSON (component list)");
  sample->add_option("--n", n, "Number of points")->required();
  sample->add_option("--seed", sample_seed, "Seed");
  sample->add_option("--out", sample_out, "Output path (.csv for csv, otherwise packed binary)")->required();
  sample->add_option("--format", format, "csv or bin (default: from extension)");

  auto* inspect = app.add_subcommand("inspect", "Summarize a run manifest");
  std::string inspect_target;
  inspect->add_option("manifest", inspect_target, "manifest.json or run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  if (*run) return cmd_run(config_path, run_preset, seed, out_dir, quiet);
  if (*metric) return cmd_metric(a_path, b_path);
  if (*sample) return cmd_sample(sample_preset, spec_path, n, sample_seed, sample_out, format);
  if (*inspect) return cmd_inspect(inspect_target);
  return kExitValidation;
}
