#pragma once

// Declarative experiment runs: configuration schema, named presets, and the on-disk layout
// of run outputs (manifest, metric CSVs, iterate clouds, trajectory snapshots).

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "iterflow/pointcloud.hpp"
#include "iterflow/refine.hpp"

namespace iterflow {

inline constexpr std::string_view kLibraryVersion = "0.1.0";
inline constexpr int kConfigSchemaVersion = 1;

enum class Algorithm { one_shot, end_path, gradual };

std::string_view to_string(Algorithm algorithm);

struct CloudSource {
  enum class Kind { mixture, standard_normal, file };
  Kind kind = Kind::mixture;
  std::size_t count = 0;           // mixture, standard-normal
  std::size_t dim = 0;             // standard-normal
  GaussianMixtureSpec mixture;     // mixture
  std::filesystem::path path;      // file, as written in the config
  std::filesystem::path resolved;  // file, resolved against the config directory
};

struct ExperimentConfig {
  std::string preset;  // empty if none
  std::uint64_t seed = 0;
  Algorithm algorithm = Algorithm::end_path;
  CloudSource source;
  CloudSource target;
  RoundSettings round;
  StopRule stop;
  std::vector<double> checkpoints = GradualConfig::uniform_checkpoints(6);
  std::filesystem::path output_dir;       // as written
  std::filesystem::path output_resolved;  // resolved
  bool save_iterates = true;
  bool save_fields = false;
  std::size_t similarity_subset = 1024;

  // Normalized echo; from_json(to_json()) round-trips.
  nlohmann::json to_json() const;
  // Throws ValidationError whose message starts with the offending field path.
  static ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  void validate() const;
};

std::vector<std::string> preset_names();
ExperimentConfig preset_config(std::string_view name);
// Named mixtures: "two-gaussians", "three-gaussians".
GaussianMixtureSpec preset_mixture(std::string_view name);

// Reads a config file; a "preset" key selects a base config that the file's other keys patch.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

PointCloud materialize(const CloudSource& source, RandomSeed seed);

struct RunResult {
  RefinementTrace trace;
  std::optional<CostReport> internal_similarity;
  nlohmann::json manifest;
};

// Executes the configured algorithm and writes every output under cfg.output_resolved.
// On runtime failure the manifest is still written (status "failed") and the error rethrown.
RunResult run_experiment(const ExperimentConfig& cfg, std::ostream* log = nullptr);

// Stream seeds derived from the master seed.
RandomSeed source_seed(std::uint64_t master);
RandomSeed target_seed(std::uint64_t master);
RandomSeed similarity_seed(std::uint64_t master);

}  // namespace iterflow
