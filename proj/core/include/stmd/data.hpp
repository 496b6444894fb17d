#pragma once

#include "stmd/common.hpp"

#include <optional>
#include <string>
#include <vector>

namespace stmd {

/// Mixture of isotropic Gaussians sum_k w_k N(mean_k, scale_k^2 I). A scale of 0 is a point mass.
struct IsoGmm {
  std::vector<double> weights;
  std::vector<Vec> means;
  std::vector<double> scales;

  Eigen::Index dim() const { return means.empty() ? 0 : means.front().size(); }
  std::size_t size() const { return weights.size(); }
  /// Throws ConfigError on inconsistent sizes, negative scales or weights not summing to 1.
  void validate() const;

  static IsoGmm gaussian(Vec mean, double scale);
  /// `count` equal-weight components evenly spaced on a circle in the first two coordinates.
  static IsoGmm ring(int count, double radius, double scale);
};

struct DatasetSpec {
  enum class Kind { gaussian, gmm, two_moons, checkerboard, csv };

  Kind kind = Kind::gaussian;
  int dim = 2;
  std::uint64_t seed = 0;
  // gaussian / gmm
  IsoGmm mixture;
  // two_moons
  double noise = 0.05;
  // checkerboard: cells per side on [-half_width, half_width]^2
  int cells = 4;
  double half_width = 2.0;
  // csv
  std::string path;

  void validate() const;
  /// Gaussian and GMM kinds as a mixture; nullopt for the others.
  std::optional<IsoGmm> as_mixture() const;

  static DatasetSpec gaussian(int dim, double scale, std::optional<Vec> mean = std::nullopt);
  static DatasetSpec gmm(IsoGmm mixture);
  static DatasetSpec ring(int count = 8, double radius = 2.0, double scale = 0.2);
  static DatasetSpec two_moons(double noise = 0.05);
  static DatasetSpec checkerboard(int cells = 4, double half_width = 2.0);
  static DatasetSpec csv(std::string path);
};

const char* to_string(DatasetSpec::Kind kind);
DatasetSpec::Kind dataset_kind_from_string(const std::string& name);

/// n i.i.d. draws, deterministic given the rng state. csv kinds resample rows uniformly.
Batch sample_dataset(const DatasetSpec& spec, Eigen::Index n, Rng& rng);
Batch sample_mixture(const IsoGmm& gmm, Eigen::Index n, Rng& rng);

/// E||x0||^2: closed form for analytic kinds, empirical for csv.
double second_moment(const DatasetSpec& spec);

/// Discretized conditional density of the unobserved coordinate of a 2D mixture.
struct GridDensity {
  Vec grid;
  Vec density;  // normalized so that the trapezoid integral over grid is 1

  /// Inverse-CDF draws (piecewise-linear density between grid nodes).
  Vec sample(Eigen::Index n, Rng& rng) const;
  double integral() const;
};

/// Bayes conditional p(x_other | x_observed = value) for a 2D mixture on the given grid.
/// Throws NumericError if every component underflows at `value`.
GridDensity gmm_conditional_grid(const DatasetSpec& spec, int observed_coord, double value,
                                 const Vec& grid);

/// CSV with header x0,x1,... and 17-significant-digit values, one point per line.
void write_points_csv(const std::string& path, const Batch& points);
Batch read_points_csv(const std::string& path);

}  // namespace stmd
