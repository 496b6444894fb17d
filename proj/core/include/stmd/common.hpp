#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace stmd {

/// A batch of points in R^d, one sample per column.
using Batch = Eigen::MatrixXd;
/// A batch of scalars (one entry per sample) or a single point in R^d.
using Vec = Eigen::VectorXd;
using Rng = std::mt19937_64;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain (time outside [0,1], r > s, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class CapacityError : public Error {
 public:
  using Error::Error;
};

/// Fills a d x n batch with independent standard normal draws, column by column.
inline Batch standard_normal(Rng& rng, Eigen::Index dim, Eigen::Index n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Batch out(dim, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < dim; ++i) out(i, j) = normal(rng);
  }
  return out;
}

inline Vec uniform_vec(Rng& rng, Eigen::Index n) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Vec out(n);
  for (Eigen::Index i = 0; i < n; ++i) out(i) = unif(rng);
  return out;
}

inline void require_shape(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace stmd
