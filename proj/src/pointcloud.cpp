#include "iterflow/pointcloud.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

#include "binary_io.hpp"
#include "iterflow/errors.hpp"

namespace iterflow {

namespace {

using detail::get_le;
using detail::put_le;

constexpr std::array<char, 4> kCloudMagic{'I', 'F', 'M', 'C'};
constexpr std::uint32_t kCloudVersion = 1;

// Lower-triangular Cholesky factor; empty matrix if `a` is not SPD.
Matrix cholesky(const Matrix& a) {
  const std::size_t n = a.rows();
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double diag = a(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
    if (!(diag > 0.0)) return {};
    l(j, j) = std::sqrt(diag);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  return l;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// Parses "dim=<d>" (optionally preceded by '#'); returns 0 if the line is not a header.
std::size_t parse_header(std::string_view line, std::size_t line_no) {
  line = trim(line);
  if (!line.empty() && line.front() == '#') line = trim(line.substr(1));
  if (!line.starts_with("dim=")) return 0;
  auto digits = trim(line.substr(4));
  std::size_t d = 0;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), d);
  if (ec != std::errc{} || ptr != digits.data() + digits.size() || d == 0) {
    throw CloudFormatError(CloudFormatError::Kind::header, line_no,
                           "line " + std::to_string(line_no) + ": invalid dim header '" +
                               std::string(line) + "'");
  }
  return d;
}

PointCloud load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw CloudFormatError(CloudFormatError::Kind::io, 0, "cannot open '" + path.string() + "'");
  }
  std::size_t dim = 0;
  std::vector<double> values;
  std::size_t rows = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = trim(line);
    if (view.empty()) continue;
    if (view.front() == '#' || view.starts_with("dim=")) {
      if (rows == 0 && dim == 0) {
        dim = parse_header(view, line_no);
        if (dim != 0) continue;
      }
      if (view.front() == '#') continue;  // comment
    }
    std::size_t width = 0;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = view.find(',', start);
      std::string_view field =
          trim(view.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
      double value = 0.0;
      auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
      if (field.empty() || ec != std::errc{} || ptr != field.data() + field.size()) {
        throw CloudFormatError(CloudFormatError::Kind::non_numeric, line_no,
                               "line " + std::to_string(line_no) + ": non-numeric field '" +
                                   std::string(field) + "'");
      }
      if (!std::isfinite(value)) {
        throw CloudFormatError(CloudFormatError::Kind::non_finite, line_no,
                               "line " + std::to_string(line_no) + ": non-finite value '" +
                                   std::string(field) + "'");
      }
      values.push_back(value);
      ++width;
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (dim == 0) dim = width;
    if (width != dim) {
      throw CloudFormatError(CloudFormatError::Kind::ragged, line_no,
                             "line " + std::to_string(line_no) + ": expected " + std::to_string(dim) +
                                 " fields, found " + std::to_string(width));
    }
    ++rows;
  }
  if (in.bad()) {
    throw CloudFormatError(CloudFormatError::Kind::io, line_no, "read error in '" + path.string() + "'");
  }
  if (rows == 0) {
    throw CloudFormatError(CloudFormatError::Kind::empty, 0, "'" + path.string() + "' contains no points");
  }
  return PointCloud(Matrix(rows, dim, std::move(values)));
}

bool has_binary_magic(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::array<char, 4> magic{};
  return in.read(magic.data(), magic.size()) && magic == kCloudMagic;
}

PointCloud load_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw CloudFormatError(CloudFormatError::Kind::io, 0, "cannot open '" + path.string() + "'");
  }
  std::array<char, 4> magic{};
  std::uint32_t version = 0;
  std::uint64_t n = 0;
  std::uint64_t d = 0;
  if (!in.read(magic.data(), magic.size()) || magic != kCloudMagic || !get_le(in, version) ||
      version != kCloudVersion || !get_le(in, n) || !get_le(in, d)) {
    throw CloudFormatError(CloudFormatError::Kind::header, 0,
                           "'" + path.string() + "' is not a version-1 packed cloud");
  }
  if (n == 0 || d == 0) {
    throw CloudFormatError(CloudFormatError::Kind::empty, 0, "'" + path.string() + "' contains no points");
  }
  std::vector<double> values(n * d);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!get_le(in, values[i])) {
      throw CloudFormatError(CloudFormatError::Kind::io, 0,
                             "'" + path.string() + "' is truncated at value " + std::to_string(i));
    }
    if (!std::isfinite(values[i])) {
      throw CloudFormatError(CloudFormatError::Kind::non_finite, 0,
                             "'" + path.string() + "': non-finite value at point " +
                                 std::to_string(i / d));
    }
  }
  return PointCloud(Matrix(n, d, std::move(values)));
}

}  // namespace

PointCloud::PointCloud(Matrix points) : points_(std::move(points)) {
  if (points_.rows() == 0 || points_.cols() == 0) {
    throw ValidationError("point cloud must have at least one point and one dimension");
  }
  for (std::size_t i = 0; i < points_.rows(); ++i) {
    for (double v : points_.row(i)) {
      if (!std::isfinite(v)) {
        throw ValidationError("point cloud has a non-finite coordinate at point " + std::to_string(i));
      }
    }
  }
}

void GaussianMixtureSpec::validate() const {
  if (components.empty()) throw ValidationError("mixture has no components");
  const std::size_t d = components.front().mean.size();
  if (d == 0) throw ValidationError("mixture mean has dimension 0");
  double total = 0.0;
  for (std::size_t k = 0; k < components.size(); ++k) {
    const auto& c = components[k];
    const std::string where = "component " + std::to_string(k) + ": ";
    if (!(c.weight >= 0.0) || !std::isfinite(c.weight)) throw ValidationError(where + "weight must be >= 0");
    if (c.mean.size() != d) throw ValidationError(where + "mean dimension mismatch");
    if (c.covariance.rows() != d || c.covariance.cols() != d) {
      throw ValidationError(where + "covariance must be " + std::to_string(d) + "x" + std::to_string(d));
    }
    for (double m : c.mean) {
      if (!std::isfinite(m)) throw ValidationError(where + "non-finite mean");
    }
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        if (c.covariance(i, j) != c.covariance(j, i)) throw ValidationError(where + "covariance not symmetric");
      }
    }
    if (cholesky(c.covariance).empty()) throw ValidationError(where + "covariance not positive definite");
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "mixture weights sum to " << total << ", expected 1";
    throw ValidationError(msg.str());
  }
}

PointCloud sample_gaussian_mixture(const GaussianMixtureSpec& spec, std::size_t n, RandomSeed seed) {
  if (n == 0) throw ValidationError("sample count must be >= 1");
  spec.validate();
  const std::size_t d = spec.dim();
  std::vector<Matrix> factors;
  std::vector<double> cumulative;
  double acc = 0.0;
  for (const auto& c : spec.components) {
    factors.push_back(cholesky(c.covariance));
    acc += c.weight;
    cumulative.push_back(acc);
  }
  Rng rng(seed);
  Matrix out(n, d);
  std::vector<double> z(d);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform01() * acc;
    std::size_t k = std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin();
    k = std::min(k, cumulative.size() - 1);
    for (auto& zj : z) zj = rng.normal();
    const Matrix& l = factors[k];
    auto row = out.row(i);
    for (std::size_t r = 0; r < d; ++r) {
      double v = spec.components[k].mean[r];
      for (std::size_t c = 0; c <= r; ++c) v += l(r, c) * z[c];
      row[r] = v;
    }
  }
  return PointCloud(std::move(out));
}

PointCloud sample_standard_normal(std::size_t dim, std::size_t n, RandomSeed seed) {
  if (dim == 0 || n == 0) throw ValidationError("standard normal sampler needs dim >= 1 and n >= 1");
  Rng rng(seed);
  Matrix out(n, dim);
  for (double& v : out.values()) v = rng.normal();
  return PointCloud(std::move(out));
}

CloudFormat format_for_path(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? CloudFormat::csv : CloudFormat::packed_binary;
}

PointCloud load_cloud(const std::filesystem::path& path, CloudFormat format) {
  return format == CloudFormat::csv ? load_csv(path) : load_binary(path);
}

PointCloud load_cloud(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw CloudFormatError(CloudFormatError::Kind::io, 0, "'" + path.string() + "' does not exist");
  }
  return has_binary_magic(path) ? load_binary(path) : load_csv(path);
}

void save_cloud(const Matrix& points, const std::filesystem::path& path, CloudFormat format) {
  // Validates (nonempty, finite) before touching the filesystem.
  save_cloud(PointCloud(points), path, format);
}

void save_cloud(const PointCloud& cloud, const std::filesystem::path& path, CloudFormat format) {
  std::ofstream out(path, format == CloudFormat::csv ? std::ios::out : std::ios::binary);
  if (!out) {
    throw CloudFormatError(CloudFormatError::Kind::io, 0, "cannot write '" + path.string() + "'");
  }
  const Matrix& m = cloud.points();
  if (format == CloudFormat::csv) {
    out << "# dim=" << m.cols() << '\n';
    std::array<char, 32> buf{};
    std::string line;
    for (std::size_t i = 0; i < m.rows(); ++i) {
      line.clear();
      for (std::size_t j = 0; j < m.cols(); ++j) {
        if (j) line.push_back(',');
        auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), m(i, j));
        line.append(buf.data(), ptr);
      }
      line.push_back('\n');
      out << line;
    }
  } else {
    out.write(kCloudMagic.data(), kCloudMagic.size());
    put_le(out, kCloudVersion);
    put_le(out, static_cast<std::uint64_t>(m.rows()));
    put_le(out, static_cast<std::uint64_t>(m.cols()));
    for (double v : m.values()) put_le(out, v);
  }
  if (!out.flush()) {
    throw CloudFormatError(CloudFormatError::Kind::io, 0, "write failed for '" + path.string() + "'");
  }
}

}  // namespace iterflow
