#include "iterflow/experiment.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string_view>

#include "iterflow/errors.hpp"
#include "iterflow/metrics.hpp"

namespace iterflow {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ValidationError(path + ": " + what);
}

const json& require(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) fail(path + "." + key, "missing");
  return j.at(key);
}

double get_number(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  return j.get<double>();
}

std::size_t get_count(const json& j, const std::string& path) {
  if (!j.is_number_integer() || j.get<std::int64_t>() < 0) fail(path, "expected a non-negative integer");
  return j.get<std::size_t>();
}

std::optional<std::size_t> get_optional_count(const json& j, const std::string& key, const std::string& path) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return get_count(j.at(key), path + "." + key);
}

std::string get_string(const json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected a string");
  return j.get<std::string>();
}

// Rejects keys outside `allowed` so a misspelled setting cannot be silently ignored.
void check_keys(const json& j, const std::string& path, std::initializer_list<std::string_view> allowed) {
  for (const auto& item : j.items()) {
    bool known = false;
    for (const auto a : allowed) known = known || item.key() == a;
    if (!known) fail(path.empty() ? item.key() : path + "." + item.key(), "unknown key");
  }
}

bool get_bool(const json& j, const std::string& path) {
  if (!j.is_boolean()) fail(path, "expected true or false");
  return j.get<bool>();
}

json mixture_to_json(const GaussianMixtureSpec& spec) {
  json comps = json::array();
  for (const auto& c : spec.components) {
    json cov = json::array();
    for (std::size_t i = 0; i < c.covariance.rows(); ++i) {
      const auto row = c.covariance.row(i);
      cov.push_back(std::vector<double>(row.begin(), row.end()));
    }
    comps.push_back({{"weight", c.weight}, {"mean", c.mean}, {"covariance", cov}});
  }
  return comps;
}

GaussianMixtureSpec mixture_from_json(const json& j, const std::string& path) {
  if (j.is_string()) {
    try {
      return preset_mixture(j.get<std::string>());
    } catch (const ValidationError& e) {
      fail(path, e.what());
    }
  }
  if (!j.is_array() || j.empty()) fail(path, "expected a nonempty list of components or a mixture name");
  GaussianMixtureSpec spec;
  for (std::size_t k = 0; k < j.size(); ++k) {
    const std::string cp = path + "[" + std::to_string(k) + "]";
    const json& c = j[k];
    if (!c.is_object()) fail(cp, "expected an object");
    check_keys(c, cp, {"weight", "mean", "covariance"});
    MixtureComponent comp;
    comp.weight = get_number(require(c, "weight", cp), cp + ".weight");
    const json& mean = require(c, "mean", cp);
    if (!mean.is_array() || mean.empty()) fail(cp + ".mean", "expected a nonempty list of numbers");
    for (std::size_t i = 0; i < mean.size(); ++i) {
      comp.mean.push_back(get_number(mean[i], cp + ".mean[" + std::to_string(i) + "]"));
    }
    const std::size_t d = comp.mean.size();
    const json& cov = require(c, "covariance", cp);
    if (!cov.is_array() || cov.size() != d) fail(cp + ".covariance", "expected a " + std::to_string(d) + "x" + std::to_string(d) + " matrix");
    comp.covariance = Matrix(d, d);
    for (std::size_t r = 0; r < d; ++r) {
      if (!cov[r].is_array() || cov[r].size() != d) fail(cp + ".covariance", "expected a square matrix");
      for (std::size_t q = 0; q < d; ++q) {
        comp.covariance(r, q) = get_number(cov[r][q], cp + ".covariance");
      }
    }
    spec.components.push_back(std::move(comp));
  }
  try {
    spec.validate();
  } catch (const ValidationError& e) {
    fail(path, e.what());
  }
  return spec;
}

json source_to_json(const CloudSource& s) {
  switch (s.kind) {
    case CloudSource::Kind::mixture:
      return {{"kind", "mixture"}, {"count", s.count}, {"components", mixture_to_json(s.mixture)}};
    case CloudSource::Kind::standard_normal:
      return {{"kind", "standard-normal"}, {"count", s.count}, {"dim", s.dim}};
    case CloudSource::Kind::file:
      return {{"kind", "file"}, {"path", s.path.generic_string()}};
  }
  return {};
}

CloudSource source_from_json(const json& j, const std::string& path, const fs::path& base_dir) {
  if (!j.is_object()) fail(path, "expected an object");
  CloudSource s;
  const std::string kind = get_string(require(j, "kind", path), path + ".kind");
  if (kind == "mixture") {
    check_keys(j, path, {"kind", "count", "components"});
    s.kind = CloudSource::Kind::mixture;
    s.count = get_count(require(j, "count", path), path + ".count");
    s.mixture = mixture_from_json(require(j, "components", path), path + ".components");
  } else if (kind == "standard-normal") {
    check_keys(j, path, {"kind", "count", "dim"});
    s.kind = CloudSource::Kind::standard_normal;
    s.count = get_count(require(j, "count", path), path + ".count");
    s.dim = get_count(require(j, "dim", path), path + ".dim");
  } else if (kind == "file") {
    check_keys(j, path, {"kind", "path"});
    s.kind = CloudSource::Kind::file;
    s.path = get_string(require(j, "path", path), path + ".path");
    s.resolved = s.path.is_absolute() || base_dir.empty() ? s.path : base_dir / s.path;
  } else {
    fail(path + ".kind", "unknown kind '" + kind + "' (expected mixture, standard-normal or file)");
  }
  return s;
}

void validate_source(const CloudSource& s, const std::string& path) {
  switch (s.kind) {
    case CloudSource::Kind::mixture:
      if (s.count == 0) fail(path + ".count", "must be >= 1");
      break;
    case CloudSource::Kind::standard_normal:
      if (s.count == 0) fail(path + ".count", "must be >= 1");
      if (s.dim == 0) fail(path + ".dim", "must be >= 1");
      break;
    case CloudSource::Kind::file:
      if (s.path.empty()) fail(path + ".path", "is required");
      if (!fs::exists(s.resolved)) fail(path + ".path", "file '" + s.resolved.string() + "' does not exist");
      break;
  }
}

std::size_t source_dim(const CloudSource& s) {
  switch (s.kind) {
    case CloudSource::Kind::mixture:
      return s.mixture.dim();
    case CloudSource::Kind::standard_normal:
      return s.dim;
    case CloudSource::Kind::file:
      return 0;  // known only after loading
  }
  return 0;
}

Algorithm parse_algorithm(const std::string& name, const std::string& path) {
  if (name == "one-shot") return Algorithm::one_shot;
  if (name == "end-path") return Algorithm::end_path;
  if (name == "gradual") return Algorithm::gradual;
  fail(path, "unknown algorithm '" + name + "' (expected one-shot, end-path or gradual)");
}

json optional_json(const std::optional<std::size_t>& v) { return v ? json(*v) : json(nullptr); }

Matrix scaled_identity(std::size_t d, double s) {
  Matrix m(d, d);
  for (std::size_t i = 0; i < d; ++i) m(i, i) = s;
  return m;
}

std::string fixed(double v, int digits) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(digits) << v;
  return out.str();
}

std::string indexed(const std::string& stem, std::size_t i, const std::string& ext) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03zu", i);
  return stem + buf + ext;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out.flush()) throw CloudFormatError(CloudFormatError::Kind::io, 0, "cannot write '" + path.string() + "'");
}

std::string shortest(double v) {
  std::ostringstream out;
  out << json(v).dump();
  return out.str();
}

}  // namespace

std::string_view to_string(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::one_shot:
      return "one-shot";
    case Algorithm::end_path:
      return "end-path";
    case Algorithm::gradual:
      return "gradual";
  }
  return "";
}

RandomSeed source_seed(std::uint64_t master) { return derive_seed(RandomSeed{master}, 1); }
RandomSeed target_seed(std::uint64_t master) { return derive_seed(RandomSeed{master}, 2); }
RandomSeed similarity_seed(std::uint64_t master) { return derive_seed(RandomSeed{master}, 3); }

json ExperimentConfig::to_json() const {
  const KernelConfig& k = round.kernel;
  return {
      {"schema_version", kConfigSchemaVersion},
      {"preset", preset.empty() ? json(nullptr) : json(preset)},
      {"seed", seed},
      {"algorithm", std::string(iterflow::to_string(algorithm))},
      {"source", source_to_json(source)},
      {"target", source_to_json(target)},
      {"kernel",
       {{"bandwidth_mode", k.bandwidth_mode == BandwidthMode::fixed ? "fixed" : "median-heuristic"},
        {"bandwidth_value", k.bandwidth_value},
        {"beta", k.regularization_beta},
        {"max_centers", optional_json(k.max_centers)}}},
      {"cg",
       {{"tolerance", round.cg.tolerance},
        {"max_iterations", optional_json(round.cg.max_iterations)},
        {"on_failure", round.cg.abort_on_failure ? "abort" : "warn"}}},
      {"ode", {{"method", std::string(iterflow::to_string(round.method))}, {"num_steps", round.num_steps}}},
      {"pairing", {{"num_slices", round.num_slices}, {"pairs_per_slice", optional_json(round.pairs_per_slice)}}},
      {"refinement",
       {{"stop_mode", std::string(iterflow::to_string(stop.mode))},
        {"stop_tolerance", stop.tolerance},
        {"max_outer_iterations", stop.max_iterations},
        {"checkpoints", checkpoints}}},
      {"output",
       {{"directory", output_dir.generic_string()},
        {"trajectory_every", optional_json(round.record_every)},
        {"save_iterates", save_iterates},
        {"save_fields", save_fields},
        {"similarity_subset", similarity_subset}}},
  };
}

ExperimentConfig ExperimentConfig::from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) fail("config", "expected a JSON object");
  ExperimentConfig c;
  check_keys(j, "", {"schema_version", "preset", "seed", "algorithm", "source", "target", "kernel", "cg", "ode",
                     "pairing", "refinement", "output"});
  if (j.contains("schema_version")) {
    const auto v = get_count(j.at("schema_version"), "schema_version");
    if (v != static_cast<std::size_t>(kConfigSchemaVersion)) fail("schema_version", "unsupported version " + std::to_string(v));
  }
  if (j.contains("preset") && !j.at("preset").is_null()) c.preset = get_string(j.at("preset"), "preset");
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_unsigned() && !j.at("seed").is_number_integer()) fail("seed", "expected an integer");
    if (j.at("seed").is_number_integer() && j.at("seed").get<std::int64_t>() < 0) fail("seed", "must be >= 0");
    c.seed = j.at("seed").get<std::uint64_t>();
  }
  if (j.contains("algorithm")) c.algorithm = parse_algorithm(get_string(j.at("algorithm"), "algorithm"), "algorithm");
  c.source = source_from_json(require(j, "source", "config"), "source", base_dir);
  c.target = source_from_json(require(j, "target", "config"), "target", base_dir);

  if (j.contains("kernel")) {
    const json& k = j.at("kernel");
    if (!k.is_object()) fail("kernel", "expected an object");
    check_keys(k, "kernel", {"bandwidth_mode", "bandwidth_value", "beta", "max_centers"});
    KernelConfig& kc = c.round.kernel;
    if (k.contains("bandwidth_mode")) {
      const std::string mode = get_string(k.at("bandwidth_mode"), "kernel.bandwidth_mode");
      if (mode == "fixed") {
        kc.bandwidth_mode = BandwidthMode::fixed;
      } else if (mode == "median-heuristic") {
        kc.bandwidth_mode = BandwidthMode::median_heuristic;
      } else {
        fail("kernel.bandwidth_mode", "expected fixed or median-heuristic");
      }
    }
    if (k.contains("bandwidth_value")) kc.bandwidth_value = get_number(k.at("bandwidth_value"), "kernel.bandwidth_value");
    if (k.contains("beta")) kc.regularization_beta = get_number(k.at("beta"), "kernel.beta");
    kc.max_centers = get_optional_count(k, "max_centers", "kernel");
  }
  if (j.contains("cg")) {
    const json& g = j.at("cg");
    if (!g.is_object()) fail("cg", "expected an object");
    check_keys(g, "cg", {"tolerance", "max_iterations", "on_failure"});
    if (g.contains("tolerance")) c.round.cg.tolerance = get_number(g.at("tolerance"), "cg.tolerance");
    c.round.cg.max_iterations = get_optional_count(g, "max_iterations", "cg");
    if (g.contains("on_failure")) {
      const std::string policy = get_string(g.at("on_failure"), "cg.on_failure");
      if (policy != "warn" && policy != "abort") fail("cg.on_failure", "expected warn or abort");
      c.round.cg.abort_on_failure = policy == "abort";
    }
  }
  if (j.contains("ode")) {
    const json& o = j.at("ode");
    if (!o.is_object()) fail("ode", "expected an object");
    check_keys(o, "ode", {"method", "num_steps"});
    if (o.contains("method")) {
      try {
        c.round.method = parse_ode_method(get_string(o.at("method"), "ode.method"));
      } catch (const ValidationError& e) {
        fail("ode.method", e.what());
      }
    }
    if (o.contains("num_steps")) c.round.num_steps = get_count(o.at("num_steps"), "ode.num_steps");
  }
  if (j.contains("pairing")) {
    const json& p = j.at("pairing");
    if (!p.is_object()) fail("pairing", "expected an object");
    check_keys(p, "pairing", {"num_slices", "pairs_per_slice"});
    if (p.contains("num_slices")) c.round.num_slices = get_count(p.at("num_slices"), "pairing.num_slices");
    c.round.pairs_per_slice = get_optional_count(p, "pairs_per_slice", "pairing");
  }
  if (j.contains("refinement")) {
    const json& r = j.at("refinement");
    if (!r.is_object()) fail("refinement", "expected an object");
    check_keys(r, "refinement", {"stop_mode", "stop_tolerance", "max_outer_iterations", "num_intervals", "checkpoints"});
    if (r.contains("stop_mode")) {
      try {
        c.stop.mode = parse_stop_mode(get_string(r.at("stop_mode"), "refinement.stop_mode"));
      } catch (const ValidationError& e) {
        fail("refinement.stop_mode", e.what());
      }
    }
    if (r.contains("stop_tolerance")) c.stop.tolerance = get_number(r.at("stop_tolerance"), "refinement.stop_tolerance");
    if (r.contains("max_outer_iterations")) {
      c.stop.max_iterations = get_count(r.at("max_outer_iterations"), "refinement.max_outer_iterations");
    }
    if (r.contains("num_intervals") && !r.at("num_intervals").is_null()) {
      const std::size_t n = get_count(r.at("num_intervals"), "refinement.num_intervals");
      if (n == 0) fail("refinement.num_intervals", "must be >= 1");
      c.checkpoints = GradualConfig::uniform_checkpoints(n);
    } else if (r.contains("checkpoints")) {
      const json& cp = r.at("checkpoints");
      if (!cp.is_array()) fail("refinement.checkpoints", "expected a list of times");
      c.checkpoints.clear();
      for (std::size_t i = 0; i < cp.size(); ++i) {
        c.checkpoints.push_back(get_number(cp[i], "refinement.checkpoints[" + std::to_string(i) + "]"));
      }
    }
  }
  if (j.contains("output")) {
    const json& o = j.at("output");
    if (!o.is_object()) fail("output", "expected an object");
    check_keys(o, "output", {"directory", "trajectory_every", "save_iterates", "save_fields", "similarity_subset"});
    if (o.contains("directory")) c.output_dir = get_string(o.at("directory"), "output.directory");
    c.round.record_every = get_optional_count(o, "trajectory_every", "output");
    if (o.contains("save_iterates")) c.save_iterates = get_bool(o.at("save_iterates"), "output.save_iterates");
    if (o.contains("save_fields")) c.save_fields = get_bool(o.at("save_fields"), "output.save_fields");
    if (o.contains("similarity_subset")) {
      c.similarity_subset = get_count(o.at("similarity_subset"), "output.similarity_subset");
    }
  }
  c.output_resolved = c.output_dir.is_absolute() || base_dir.empty() ? c.output_dir : base_dir / c.output_dir;
  return c;
}

void ExperimentConfig::validate() const {
  validate_source(source, "source");
  validate_source(target, "target");
  const std::size_t ds = source_dim(source);
  const std::size_t dt = source_dim(target);
  if (ds && dt && ds != dt) fail("target", "dimension " + std::to_string(dt) + " differs from source dimension " + std::to_string(ds));
  auto rethrow_at = [](const std::string& prefix, auto&& fn) {
    try {
      fn();
    } catch (const ValidationError& e) {
      const std::string msg = e.what();
      // Messages from the library already name their config field.
      if (msg.find(':') != std::string::npos && msg.find('.') < msg.find(':')) throw;
      fail(prefix, msg);
    }
  };
  rethrow_at("kernel", [&] { round.kernel.validate(); });
  if (!(round.cg.tolerance > 0.0)) fail("cg.tolerance", "must be > 0");
  if (round.num_steps == 0) fail("ode.num_steps", "must be >= 1");
  if (round.num_slices == 0) fail("pairing.num_slices", "must be >= 1");
  if (round.pairs_per_slice && *round.pairs_per_slice == 0) fail("pairing.pairs_per_slice", "must be >= 1");
  if (round.record_every && *round.record_every == 0) fail("output.trajectory_every", "must be >= 1");
  if (!(stop.tolerance >= 0.0)) fail("refinement.stop_tolerance", "must be >= 0");
  if (stop.max_iterations == 0) fail("refinement.max_outer_iterations", "must be >= 1");
  if (algorithm == Algorithm::gradual) {
    GradualConfig g;
    g.checkpoints = checkpoints;
    g.round = round;
    g.validate();
  }
  if (output_dir.empty()) fail("output.directory", "is required");
}

std::vector<std::string> preset_names() {
  return {"two-to-three-gaussians", "gaussian-shift", "latent-32", "latent-64"};
}

GaussianMixtureSpec preset_mixture(std::string_view name) {
  GaussianMixtureSpec spec;
  if (name == "two-gaussians") {
    spec.components = {
        {0.5, {-2.0, -2.5}, scaled_identity(2, 0.3)},
        {0.5, {-2.0, 2.5}, scaled_identity(2, 0.3)},
    };
  } else if (name == "three-gaussians") {
    spec.components = {
        {1.0 / 3.0, {2.0, -3.5}, scaled_identity(2, 0.2)},
        {1.0 / 3.0, {2.0, 0.0}, scaled_identity(2, 0.2)},
        {1.0 - 2.0 / 3.0, {2.0, 3.5}, scaled_identity(2, 0.2)},
    };
  } else {
    throw ValidationError("unknown mixture '" + std::string(name) + "' (expected two-gaussians or three-gaussians)");
  }
  return spec;
}

ExperimentConfig preset_config(std::string_view name) {
  ExperimentConfig c;
  c.preset = std::string(name);
  c.seed = 1;
  c.output_dir = "runs/" + std::string(name);
  c.output_resolved = c.output_dir;
  // The 2-D presets pair 4096 points per slice with heavily conflicting velocities; the library's
  // near-interpolating beta leaves that noise in the field, so these presets smooth harder.
  const auto toy_kernel = [&c] {
    c.round.kernel.bandwidth_value = 0.5;
    c.round.kernel.regularization_beta = 0.1;
  };
  if (name == "two-to-three-gaussians") {
    toy_kernel();
    c.algorithm = Algorithm::end_path;
    c.source = CloudSource{CloudSource::Kind::mixture, 2000, 0, preset_mixture("two-gaussians"), {}, {}};
    c.target = CloudSource{CloudSource::Kind::mixture, 2000, 0, preset_mixture("three-gaussians"), {}, {}};
    c.round.record_every = 5;
  } else if (name == "gaussian-shift") {
    c.algorithm = Algorithm::one_shot;
    toy_kernel();
    c.source = CloudSource{CloudSource::Kind::standard_normal, 2000, 2, {}, {}, {}};
    GaussianMixtureSpec shifted;
    shifted.components = {{1.0, {3.0, 1.5}, scaled_identity(2, 1.0)}};
    c.target = CloudSource{CloudSource::Kind::mixture, 2000, 0, shifted, {}, {}};
    c.round.record_every = 5;
  } else if (name == "latent-32" || name == "latent-64") {
    const std::size_t d = name == "latent-32" ? 32 : 64;
    c.algorithm = Algorithm::end_path;
    // At beta 1e-4 block CG stalls on the 4096-center latent systems (no convergence in 300 iterations).
    c.round.kernel.regularization_beta = 0.1;
    c.source = CloudSource{CloudSource::Kind::standard_normal, 2000, d, {}, {}, {}};
    // The encoded data set must be supplied: set target.path.
    c.target = CloudSource{CloudSource::Kind::file, 0, 0, {}, {}, {}};
  } else {
    std::string known;
    for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
    throw ValidationError("preset: unknown preset '" + std::string(name) + "' (known: " + known + ")");
  }
  return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config: cannot open '" + path.string() + "'");
  json user;
  try {
    user = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ValidationError("config: " + std::string(e.what()));
  }
  if (!user.is_object()) fail("config", "expected a JSON object");
  const fs::path base = path.parent_path();
  if (user.contains("preset") && !user.at("preset").is_null()) {
    json merged = preset_config(get_string(user.at("preset"), "preset")).to_json();
    // A cloud section that names a different kind replaces the preset's instead of patching it.
    for (const char* side : {"source", "target"}) {
      if (user.contains(side) && user.at(side).is_object() && user.at(side).contains("kind") &&
          user.at(side).at("kind") != merged.at(side).at("kind")) {
        merged.erase(side);
      }
    }
    merged.merge_patch(user);
    return ExperimentConfig::from_json(merged, base);
  }
  return ExperimentConfig::from_json(user, base);
}

PointCloud materialize(const CloudSource& source, RandomSeed seed) {
  switch (source.kind) {
    case CloudSource::Kind::mixture:
      return sample_gaussian_mixture(source.mixture, source.count, seed);
    case CloudSource::Kind::standard_normal:
      return sample_standard_normal(source.dim, source.count, seed);
    case CloudSource::Kind::file:
      return load_cloud(source.resolved);
  }
  throw ValidationError("unknown source kind");
}

RunResult run_experiment(const ExperimentConfig& cfg, std::ostream* log) {
  cfg.validate();
  const fs::path out = cfg.output_resolved;
  fs::create_directories(out);

  json manifest;
  manifest["schema_version"] = kConfigSchemaVersion;
  manifest["library_version"] = std::string(kLibraryVersion);
  manifest["prng"] = std::string(kPrngIdentifier);
  manifest["config"] = cfg.to_json();
  manifest["status"] = "running";
  manifest["iterations"] = json::array();
  json files = json::array();

  std::ostringstream costs_csv;
  costs_csv << "iteration,label,time,cost,a_to_b,b_to_a,normalizer,cg_max_iterations,cg_max_residual,cg_converged\n";
  std::ostringstream timing_csv;
  timing_csv << "iteration,label,wall_seconds\n";
  std::size_t completed = 0;

  auto write_manifest = [&] {
    manifest["files"] = files;
    write_text(out / "manifest.json", manifest.dump(2) + "\n");
  };

  const auto record = [&](const Iterate& it) {
    const std::size_t index = completed++;
    json entry = {{"index", index},
                  {"label", it.label},
                  {"time", it.time_reached},
                  {"cost", it.cost.value},
                  {"a_to_b", it.cost.a_to_b},
                  {"b_to_a", it.cost.b_to_a},
                  {"normalizer", it.cost.normalizer},
                  {"solver",
                   {{"slices", it.solver.slices},
                    {"max_iterations", it.solver.max_iterations},
                    {"max_relative_residual", it.solver.max_relative_residual},
                    {"all_converged", it.solver.all_converged}}}};
    if (cfg.save_iterates) {
      const std::string name = indexed("iterates/iterate_", index, ".bin");
      fs::create_directories(out / "iterates");
      save_cloud(it.cloud, out / name, CloudFormat::packed_binary);
      entry["cloud_file"] = name;
      files.push_back(name);
    }
    manifest["iterations"].push_back(entry);
    costs_csv << index << ',' << it.label << ',' << shortest(it.time_reached) << ',' << shortest(it.cost.value) << ','
              << shortest(it.cost.a_to_b) << ',' << shortest(it.cost.b_to_a) << ',' << it.cost.normalizer << ','
              << it.solver.max_iterations << ',' << shortest(it.solver.max_relative_residual) << ','
              << (it.solver.all_converged ? 1 : 0) << '\n';
    timing_csv << index << ',' << it.label << ',' << it.wall_seconds << '\n';
    if (log) {
      *log << "[" << it.label << "] cost " << it.cost.value;
      if (it.solver.slices) {
        *log << "  cg<=" << it.solver.max_iterations << " it" << (it.solver.all_converged ? "" : "  (NOT CONVERGED)");
      }
      *log << "  " << fixed(it.wall_seconds, 1) << "s\n";
    }
  };

  RunResult result;
  try {
    const PointCloud source = materialize(cfg.source, source_seed(cfg.seed));
    const PointCloud target = materialize(cfg.target, target_seed(cfg.seed));
    if (source.dim() != target.dim()) {
      throw ValidationError("target: dimension " + std::to_string(target.dim()) + " differs from source dimension " +
                            std::to_string(source.dim()));
    }
    save_cloud(source, out / "source.bin", CloudFormat::packed_binary);
    save_cloud(target, out / "target.bin", CloudFormat::packed_binary);
    files.push_back("source.bin");
    files.push_back("target.bin");
    manifest["resolved"] = {
        {"dim", source.dim()},
        {"source_count", source.count()},
        {"target_count", target.count()},
        {"pairs_per_slice", cfg.round.pairs_per_slice.value_or(default_pair_count(source.count(), target.count()))},
        {"pairs_per_slice_is_default", !cfg.round.pairs_per_slice.has_value()},
        {"stop_rule", cfg.algorithm == Algorithm::end_path ? json(std::string(to_string(cfg.stop.mode))) : json(nullptr)},
    };

    const std::size_t subset = std::min(cfg.similarity_subset, target.count() / 2);
    if (subset >= 1) {
      result.internal_similarity = internal_similarity(target, subset, similarity_seed(cfg.seed));
      const CostReport& r = *result.internal_similarity;
      manifest["internal_similarity"] = {{"subset_size", subset}, {"value", r.value}, {"a_to_b", r.a_to_b}, {"b_to_a", r.b_to_a}};
    }

    if (cfg.algorithm == Algorithm::gradual) {
      GradualConfig g;
      g.checkpoints = cfg.checkpoints;
      g.round = cfg.round;
      g.seed = RandomSeed{cfg.seed};
      g.keep_fields = cfg.save_fields;
      g.on_iterate = record;
      record(Iterate{"initial", 0.0, source, closest_point_cost(source, target), {}, 0.0});
      result.trace = gradual_refine(source, target, g);
    } else {
      EndPathConfig e;
      e.round = cfg.round;
      e.stop = cfg.stop;
      if (cfg.algorithm == Algorithm::one_shot) e.stop.max_iterations = 1;
      e.seed = RandomSeed{cfg.seed};
      e.keep_fields = cfg.save_fields;
      e.on_iterate = record;
      record(Iterate{"initial", 0.0, source, closest_point_cost(source, target), {}, 0.0});
      result.trace = end_path_correct(source, target, e);
      if (cfg.algorithm == Algorithm::one_shot) result.trace.termination_reason = "single-round";
    }
  } catch (const std::exception& e) {
    manifest["status"] = "failed";
    manifest["failure"] = {{"after_iterations", completed}, {"message", e.what()}};
    write_text(out / "costs.csv", costs_csv.str());
    write_text(out / "timings.csv", timing_csv.str());
    write_manifest();
    throw;
  }

  const RefinementTrace& trace = result.trace;
  if (trace.final_cloud().dim() == 2) {
    for (std::size_t r = 0; r < trace.trajectories.size(); ++r) {
      const TrajectoryRecord& rec = trace.trajectories[r];
      for (std::size_t k = 0; k < rec.times.size(); ++k) {
        const std::string name = indexed("trajectories/round_", r, "_t" + fixed(rec.times[k], 4) + ".csv");
        fs::create_directories(out / "trajectories");
        save_cloud(rec.states[k], out / name, CloudFormat::csv);
        files.push_back(name);
      }
    }
  }
  for (std::size_t f = 0; f < trace.fields.size(); ++f) {
    const std::string name = indexed("fields/field_", f, ".bin");
    fs::create_directories(out / "fields");
    save_field(trace.fields[f], out / name);
    files.push_back(name);
  }

  manifest["status"] = "ok";
  manifest["termination_reason"] = trace.termination_reason;
  manifest["final_cost"] = trace.iterates.back().cost.value;
  manifest["metrics_file"] = "costs.csv";
  manifest["timings_file"] = "timings.csv";
  write_text(out / "costs.csv", costs_csv.str());
  write_text(out / "timings.csv", timing_csv.str());
  write_manifest();
  result.manifest = manifest;
  return result;
}

}  // namespace iterflow
