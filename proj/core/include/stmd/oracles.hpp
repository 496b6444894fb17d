#pragma once

#include "stmd/common.hpp"
#include "stmd/data.hpp"
#include "stmd/network.hpp"
#include "stmd/schedule.hpp"

#include <functional>

namespace stmd {

/// Straight-line flow between rho_0 = N(mean, scale^2 I) at s = 0 and N(0, I) at s = 1.
///
/// With D(s) = (1-s)^2 scale^2 + s^2 the marginal velocity is
///   v_s(z) = -mean + k(s) (z - (1-s) mean),  k(s) = (s - (1-s) scale^2) / D(s),
/// and the flow map is z_r = (1-r) mean + sqrt(D(r)/D(s)) (z_s - (1-s) mean).
struct GaussianFlow {
  Vec mean;
  double scale = 1.0;

  Eigen::Index dim() const { return mean.size(); }
  double spread(double s) const;
  double rate(double s) const;
  /// (1 - sqrt(D(r)/D(s))) / (s - r), equal to rate(s) at r = s.
  double mean_rate(double r, double s) const;

  Batch velocity(double s, const Batch& z) const;
  Batch mean_velocity(double r, double s, const Batch& z) const;
  Batch flow_map(double r, double s, const Batch& z) const;
};

/// Marginal velocity for rho_0 = N(0, sigma0^2 I).
Batch gauss_velocity(double sigma0, double s, const Batch& z);
/// Mean velocity u(z, r, s) for rho_0 = N(0, sigma0^2 I); throws DomainError for r > s.
Batch gauss_meanflow_u(double sigma0, double r, double s, const Batch& z);

/// Marginal velocity of the straight-line flow from a mixture source to N(0, I).
Batch mixture_velocity(const IsoGmm& source, double s, const Batch& z);

/// p(x0 | x_t) for a mixture prior under the VP perturbation at time t; again a mixture.
IsoGmm mixture_posterior(const IsoGmm& prior, const NoiseSchedule& sched, double t, const Vec& xt);

/// Exact unconditional mean velocity of a Gaussian source, ignoring x and t.
class GaussianMeanFlowField : public ConditionalField {
 public:
  explicit GaussianMeanFlowField(GaussianFlow flow) : flow_(std::move(flow)) {}
  Eigen::Index dim() const override { return flow_.dim(); }
  Batch evaluate(const FieldInput& in) const override;

 private:
  GaussianFlow flow_;
};

/// Exact conditional mean velocity u(z, r, s | x_t, t) for a Gaussian data law: the flow from
/// the Gaussian posterior p(x0 | x_t) to N(0, I).
class GaussianPosteriorField : public ConditionalField {
 public:
  GaussianPosteriorField(NoiseSchedule sched, Vec mean, double scale)
      : sched_(sched), mean_(std::move(mean)), scale_(scale) {}
  Eigen::Index dim() const override { return mean_.size(); }
  Batch evaluate(const FieldInput& in) const override;

  /// Posterior N(mean', tau^2 I) of x0 given x_t.
  GaussianFlow posterior(double t, const Vec& xt) const;

 private:
  NoiseSchedule sched_;
  Vec mean_;
  double scale_;
};

/// Conditional mean velocity for mixture data: the flow map of the posterior mixture
/// p(x0 | x_t) is integrated with RK4 (`steps_per_unit` steps per unit of s).
class MixturePosteriorField : public ConditionalField {
 public:
  MixturePosteriorField(NoiseSchedule sched, IsoGmm prior, int steps_per_unit = 200);
  Eigen::Index dim() const override { return prior_.dim(); }
  Batch evaluate(const FieldInput& in) const override;

 private:
  NoiseSchedule sched_;
  IsoGmm prior_;
  int steps_per_unit_;
};

/// z_r from z_s by RK4 integration of `velocity` backwards in s.
Vec integrate_flow(const std::function<Vec(double, const Vec&)>& velocity, double r, double s, const Vec& z,
                   int steps);

/// Optimal noise predictor eps(x_t, t) = (x_t - alpha_t E[x0 | x_t]) / sigma_t for Gaussian data,
/// under the epsilon_input convention.
class GaussianEpsField : public ConditionalField {
 public:
  GaussianEpsField(NoiseSchedule sched, Vec mean, double scale)
      : sched_(sched), mean_(std::move(mean)), scale_(scale) {}
  Eigen::Index dim() const override { return mean_.size(); }
  Batch evaluate(const FieldInput& in) const override;

 private:
  NoiseSchedule sched_;
  Vec mean_;
  double scale_;
};

/// Flow-matching velocity field of a Gaussian source under the velocity_input convention.
class GaussianVelocityField : public ConditionalField {
 public:
  explicit GaussianVelocityField(GaussianFlow flow) : flow_(std::move(flow)) {}
  Eigen::Index dim() const override { return flow_.dim(); }
  Batch evaluate(const FieldInput& in) const override;

 private:
  GaussianFlow flow_;
};

/// u == 0.
class ZeroField : public ConditionalField {
 public:
  explicit ZeroField(Eigen::Index dim) : dim_(dim) {}
  Eigen::Index dim() const override { return dim_; }
  Batch evaluate(const FieldInput& in) const override { return Batch::Zero(dim_, in.size()); }
  JvpResult jvp(const FieldInput& in, const FieldTangent&) const override {
    return {Batch::Zero(dim_, in.size()), Batch::Zero(dim_, in.size())};
  }

 private:
  Eigen::Index dim_;
};

}  // namespace stmd
