#include "stmd/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <sstream>

namespace stmd {
namespace {

constexpr double kWeightTolerance = 1e-9;

double log_normal_pdf_1d(double x, double mean, double scale) {
  const double z = (x - mean) / scale;
  return -0.5 * z * z - std::log(scale) - 0.5 * std::log(2.0 * std::numbers::pi);
}

// Rows of csv datasets, re-read only when the file's modification time changes.
std::shared_ptr<const Batch> cached_points(const std::string& path) {
  struct Entry {
    std::filesystem::file_time_type stamp;
    std::shared_ptr<const Batch> points;
  };
  static std::mutex mutex;
  static std::map<std::string, Entry> cache;
  std::error_code ec;
  const auto stamp = std::filesystem::last_write_time(path, ec);
  if (ec) throw FormatError("cannot stat " + path);
  const std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find(path);
  if (it == cache.end() || it->second.stamp != stamp) {
    cache[path] = Entry{stamp, std::make_shared<const Batch>(read_points_csv(path))};
    it = cache.find(path);
  }
  return it->second.points;
}

}  // namespace

void IsoGmm::validate() const {
  if (weights.empty()) throw ConfigError("mixture needs at least one component");
  if (means.size() != weights.size() || scales.size() != weights.size()) {
    throw ConfigError("mixture weights, means and scales must have equal length");
  }
  double total = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (!(weights[k] >= 0.0)) throw ConfigError("mixture weights must be nonnegative");
    if (!(scales[k] >= 0.0)) throw ConfigError("mixture scales must be nonnegative");
    if (means[k].size() != means.front().size() || means[k].size() == 0) {
      throw ConfigError("mixture means must share one positive dimension");
    }
    total += weights[k];
  }
  if (std::abs(total - 1.0) > kWeightTolerance) throw ConfigError("mixture weights must sum to 1");
}

IsoGmm IsoGmm::gaussian(Vec mean, double scale) {
  IsoGmm g;
  g.weights = {1.0};
  g.means = {std::move(mean)};
  g.scales = {scale};
  return g;
}

IsoGmm IsoGmm::ring(int count, double radius, double scale) {
  if (count <= 0) throw ConfigError("ring mixture needs a positive component count");
  IsoGmm g;
  for (int k = 0; k < count; ++k) {
    const double angle = 2.0 * std::numbers::pi * k / count;
    Vec m(2);
    m << radius * std::cos(angle), radius * std::sin(angle);
    g.weights.push_back(1.0 / count);
    g.means.push_back(m);
    g.scales.push_back(scale);
  }
  return g;
}

const char* to_string(DatasetSpec::Kind kind) {
  switch (kind) {
    case DatasetSpec::Kind::gaussian: return "gaussian";
    case DatasetSpec::Kind::gmm: return "gmm";
    case DatasetSpec::Kind::two_moons: return "two_moons";
    case DatasetSpec::Kind::checkerboard: return "checkerboard";
    case DatasetSpec::Kind::csv: return "csv";
  }
  return "unknown";
}

DatasetSpec::Kind dataset_kind_from_string(const std::string& name) {
  if (name == "gaussian") return DatasetSpec::Kind::gaussian;
  if (name == "gmm") return DatasetSpec::Kind::gmm;
  if (name == "two_moons") return DatasetSpec::Kind::two_moons;
  if (name == "checkerboard") return DatasetSpec::Kind::checkerboard;
  if (name == "csv") return DatasetSpec::Kind::csv;
  throw ConfigError("unknown dataset kind '" + name + "'");
}

void DatasetSpec::validate() const {
  if (dim <= 0) throw ConfigError("dataset: dim must be positive");
  switch (kind) {
    case Kind::gaussian:
      mixture.validate();
      if (mixture.size() != 1) throw ConfigError("dataset: gaussian kind has exactly one component");
      if (!(mixture.scales[0] > 0.0)) throw ConfigError("dataset: gaussian scale must be positive");
      break;
    case Kind::gmm:
      mixture.validate();
      break;
    case Kind::two_moons:
      if (dim != 2) throw ConfigError("dataset: two_moons is two-dimensional");
      if (!(noise >= 0.0)) throw ConfigError("dataset: noise must be nonnegative");
      break;
    case Kind::checkerboard:
      if (dim != 2) throw ConfigError("dataset: checkerboard is two-dimensional");
      if (cells <= 0 || cells % 2 != 0) throw ConfigError("dataset: checkerboard cells must be even");
      if (!(half_width > 0.0)) throw ConfigError("dataset: half_width must be positive");
      break;
    case Kind::csv:
      if (path.empty()) throw ConfigError("dataset: csv kind needs a path");
      break;
  }
  if ((kind == Kind::gaussian || kind == Kind::gmm) && mixture.dim() != dim) {
    throw ConfigError("dataset: mixture dimension does not match dim");
  }
}

std::optional<IsoGmm> DatasetSpec::as_mixture() const {
  if (kind == Kind::gaussian || kind == Kind::gmm) return mixture;
  return std::nullopt;
}

DatasetSpec DatasetSpec::gaussian(int dim, double scale, std::optional<Vec> mean) {
  DatasetSpec spec;
  spec.kind = Kind::gaussian;
  spec.dim = dim;
  spec.mixture = IsoGmm::gaussian(mean.value_or(Vec::Zero(dim)), scale);
  return spec;
}

DatasetSpec DatasetSpec::gmm(IsoGmm mixture) {
  DatasetSpec spec;
  spec.kind = Kind::gmm;
  spec.dim = static_cast<int>(mixture.dim());
  spec.mixture = std::move(mixture);
  return spec;
}

DatasetSpec DatasetSpec::ring(int count, double radius, double scale) {
  return gmm(IsoGmm::ring(count, radius, scale));
}

DatasetSpec DatasetSpec::two_moons(double noise) {
  DatasetSpec spec;
  spec.kind = Kind::two_moons;
  spec.dim = 2;
  spec.noise = noise;
  return spec;
}

DatasetSpec DatasetSpec::checkerboard(int cells, double half_width) {
  DatasetSpec spec;
  spec.kind = Kind::checkerboard;
  spec.dim = 2;
  spec.cells = cells;
  spec.half_width = half_width;
  return spec;
}

DatasetSpec DatasetSpec::csv(std::string path) {
  DatasetSpec spec;
  spec.kind = Kind::csv;
  spec.path = std::move(path);
  spec.dim = static_cast<int>(read_points_csv(spec.path).rows());
  return spec;
}

Batch sample_mixture(const IsoGmm& gmm, Eigen::Index n, Rng& rng) {
  const Eigen::Index d = gmm.dim();
  std::discrete_distribution<std::size_t> pick(gmm.weights.begin(), gmm.weights.end());
  std::normal_distribution<double> normal(0.0, 1.0);
  Batch out(d, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const std::size_t k = gmm.size() == 1 ? 0 : pick(rng);
    for (Eigen::Index i = 0; i < d; ++i) out(i, j) = gmm.means[k](i) + gmm.scales[k] * normal(rng);
  }
  return out;
}

Batch sample_dataset(const DatasetSpec& spec, Eigen::Index n, Rng& rng) {
  if (n < 1) throw ConfigError("sample_dataset: n must be at least 1");
  spec.validate();
  switch (spec.kind) {
    case DatasetSpec::Kind::gaussian:
    case DatasetSpec::Kind::gmm:
      return sample_mixture(spec.mixture, n, rng);
    case DatasetSpec::Kind::two_moons: {
      std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
      std::bernoulli_distribution upper(0.5);
      std::normal_distribution<double> normal(0.0, 1.0);
      Batch out(2, n);
      for (Eigen::Index j = 0; j < n; ++j) {
        const double a = angle(rng);
        if (upper(rng)) {
          out(0, j) = std::cos(a);
          out(1, j) = std::sin(a);
        } else {
          out(0, j) = 1.0 - std::cos(a);
          out(1, j) = 0.5 - std::sin(a);
        }
        out(0, j) += spec.noise * normal(rng);
        out(1, j) += spec.noise * normal(rng);
      }
      return out;
    }
    case DatasetSpec::Kind::checkerboard: {
      const double cell = 2.0 * spec.half_width / spec.cells;
      std::uniform_int_distribution<int> col(0, spec.cells - 1);
      std::uniform_int_distribution<int> pair(0, spec.cells / 2 - 1);
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      Batch out(2, n);
      for (Eigen::Index j = 0; j < n; ++j) {
        const int ix = col(rng);
        const int iy = 2 * pair(rng) + (ix % 2);
        out(0, j) = -spec.half_width + (ix + unit(rng)) * cell;
        out(1, j) = -spec.half_width + (iy + unit(rng)) * cell;
      }
      return out;
    }
    case DatasetSpec::Kind::csv: {
      const Batch& points = *cached_points(spec.path);
      if (points.rows() != spec.dim) throw ConfigError("dataset: csv columns do not match dim");
      std::uniform_int_distribution<Eigen::Index> row(0, points.cols() - 1);
      Batch out(points.rows(), n);
      for (Eigen::Index j = 0; j < n; ++j) out.col(j) = points.col(row(rng));
      return out;
    }
  }
  throw ConfigError("sample_dataset: unsupported kind");
}

double second_moment(const DatasetSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case DatasetSpec::Kind::gaussian:
    case DatasetSpec::Kind::gmm: {
      double m2 = 0.0;
      const IsoGmm& g = spec.mixture;
      for (std::size_t k = 0; k < g.size(); ++k) {
        m2 += g.weights[k] * (g.means[k].squaredNorm() + spec.dim * g.scales[k] * g.scales[k]);
      }
      return m2;
    }
    case DatasetSpec::Kind::two_moons:
      return 0.5 * 1.0 + 0.5 * (2.25 - 2.0 / std::numbers::pi) + 2.0 * spec.noise * spec.noise;
    case DatasetSpec::Kind::checkerboard:
      return 2.0 * spec.half_width * spec.half_width / 3.0;
    case DatasetSpec::Kind::csv: {
      const Batch points = read_points_csv(spec.path);
      return points.colwise().squaredNorm().mean();
    }
  }
  return 0.0;
}

double GridDensity::integral() const {
  double acc = 0.0;
  for (Eigen::Index i = 0; i + 1 < grid.size(); ++i) {
    acc += 0.5 * (density(i) + density(i + 1)) * (grid(i + 1) - grid(i));
  }
  return acc;
}

Vec GridDensity::sample(Eigen::Index n, Rng& rng) const {
  const Eigen::Index cells = grid.size() - 1;
  if (cells < 1) throw ConfigError("grid density needs at least two nodes");
  std::vector<double> mass(cells);
  for (Eigen::Index i = 0; i < cells; ++i) {
    mass[i] = 0.5 * (density(i) + density(i + 1)) * (grid(i + 1) - grid(i));
  }
  std::discrete_distribution<Eigen::Index> pick(mass.begin(), mass.end());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Vec out(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::Index i = pick(rng);
    // Linear density on the cell: invert its CDF.
    const double a = density(i);
    const double b = density(i + 1);
    const double u = unit(rng);
    double frac;
    if (std::abs(b - a) < 1e-12 * std::max(a, b)) {
      frac = u;
    } else {
      frac = (-a + std::sqrt(a * a + u * (b * b - a * a))) / (b - a);
    }
    out(j) = grid(i) + frac * (grid(i + 1) - grid(i));
  }
  return out;
}

GridDensity gmm_conditional_grid(const DatasetSpec& spec, int observed_coord, double value,
                                 const Vec& grid) {
  const auto mixture = spec.as_mixture();
  if (!mixture || spec.dim != 2) throw ConfigError("conditional grid needs a 2D gaussian mixture");
  if (observed_coord != 0 && observed_coord != 1) throw ConfigError("observed_coord must be 0 or 1");
  if (grid.size() < 2) throw ConfigError("conditional grid needs at least two nodes");
  const IsoGmm& g = *mixture;
  const int other = 1 - observed_coord;
  std::vector<double> logw(g.size());
  double max_logw = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (!(g.scales[k] > 0.0)) throw ConfigError("conditional grid needs positive component scales");
    logw[k] = g.weights[k] > 0.0 ? std::log(g.weights[k]) +
                                       log_normal_pdf_1d(value, g.means[k](observed_coord), g.scales[k])
                                 : -std::numeric_limits<double>::infinity();
    max_logw = std::max(max_logw, logw[k]);
  }
  if (!std::isfinite(max_logw)) throw NumericError("conditional density underflows at this value");
  GridDensity out;
  out.grid = grid;
  out.density = Vec::Zero(grid.size());
  for (std::size_t k = 0; k < g.size(); ++k) {
    const double w = std::exp(logw[k] - max_logw);
    if (w == 0.0) continue;
    for (Eigen::Index i = 0; i < grid.size(); ++i) {
      out.density(i) += w * std::exp(log_normal_pdf_1d(grid(i), g.means[k](other), g.scales[k]));
    }
  }
  const double total = out.integral();
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw NumericError("conditional density vanishes on the grid");
  }
  out.density /= total;
  return out;
}

void write_points_csv(const std::string& path, const Batch& points) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (f == nullptr) throw FormatError("cannot open '" + path + "' for writing");
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    std::fprintf(f, i == 0 ? "x%ld" : ",x%ld", static_cast<long>(i));
  }
  std::fputc('\n', f);
  for (Eigen::Index j = 0; j < points.cols(); ++j) {
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
      std::fprintf(f, i == 0 ? "%.17g" : ",%.17g", points(i, j));
    }
    std::fputc('\n', f);
  }
  if (std::fclose(f) != 0) throw FormatError("failed writing '" + path + "'");
}

Batch read_points_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw FormatError("'" + path + "' is empty");
  const Eigen::Index dim = std::count(line.begin(), line.end(), ',') + 1;
  std::vector<double> values;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const char* p = line.c_str();
    for (Eigen::Index i = 0; i < dim; ++i) {
      char* end = nullptr;
      const double v = std::strtod(p, &end);
      if (end == p) throw FormatError(path + ":" + std::to_string(line_no) + ": bad number");
      values.push_back(v);
      p = end;
      if (i + 1 < dim) {
        if (*p != ',') throw FormatError(path + ":" + std::to_string(line_no) + ": too few columns");
        ++p;
      }
    }
    if (*p != '\0' && *p != '\r') {
      throw FormatError(path + ":" + std::to_string(line_no) + ": too many columns");
    }
  }
  if (values.empty()) throw FormatError("'" + path + "' has no data rows");
  return Eigen::Map<const Batch>(values.data(), dim, static_cast<Eigen::Index>(values.size()) / dim);
}

}  // namespace stmd
