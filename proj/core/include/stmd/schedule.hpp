#pragma once

#include "stmd/common.hpp"

namespace stmd {

/// Variance-preserving noise schedule with linear beta(t) on t in [0, 1].
///
///   beta(t)    = beta_min + t (beta_max - beta_min)
///   alpha(t)^2 = exp(-int_0^t beta)
///   sigma(t)   = sqrt(1 - alpha(t)^2)
struct NoiseSchedule {
  enum class Kind { linear };

  double beta_min = 0.1;
  double beta_max = 20.0;
  Kind kind = Kind::linear;

  /// Throws ConfigError unless 0 <= beta_min <= beta_max.
  void validate() const;

  double beta(double t) const;
};

struct AlphaSigma {
  double alpha;
  double sigma;
  double alpha_sq;
  double sigma_sq;  // 1 - alpha_sq, computed without cancellation near t = 0
};

/// Gaussian bridge x_{t'} | x_0, x_t with isotropic covariance std^2 I.
struct BridgeParams {
  double mean_coeff_x0;
  double mean_coeff_xt;
  double std;
};

double integral_beta(const NoiseSchedule& sched, double t);
AlphaSigma alpha_sigma(const NoiseSchedule& sched, double t);

/// x_t = alpha_t x0 + sigma_t eps. Works column-wise on batches.
Batch perturb(const NoiseSchedule& sched, const Batch& x0, double t, const Batch& eps);
/// Per-sample times.
Batch perturb(const NoiseSchedule& sched, const Batch& x0, const Vec& t, const Batch& eps);

/// Closed-form bridge coefficients for 0 <= t_prime <= t <= 1.
/// Throws DomainError for t_prime > t and for t_prime < t with sigma_t^2 < 1e-12.
BridgeParams bridge_params(const NoiseSchedule& sched, double t_prime, double t);

Batch bridge_sample(const NoiseSchedule& sched, double t_prime, double t, const Batch& x0,
                    const Batch& xt, const Batch& eps);

}  // namespace stmd
