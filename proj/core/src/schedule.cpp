#include "stmd/schedule.hpp"

#include <cmath>
#include <sstream>

namespace stmd {
namespace {

void check_time(double t) {
  if (!(t >= 0.0 && t <= 1.0)) {
    std::ostringstream msg;
    msg << "time " << t << " outside [0, 1]";
    throw DomainError(msg.str());
  }
}

constexpr double kDegenerateSigmaSq = 1e-12;

}  // namespace

void NoiseSchedule::validate() const {
  if (!(beta_min >= 0.0) || !(beta_max >= beta_min) || !std::isfinite(beta_max)) {
    throw ConfigError("schedule requires 0 <= beta_min <= beta_max");
  }
}

double NoiseSchedule::beta(double t) const {
  check_time(t);
  return beta_min + t * (beta_max - beta_min);
}

double integral_beta(const NoiseSchedule& sched, double t) {
  check_time(t);
  return sched.beta_min * t + 0.5 * (sched.beta_max - sched.beta_min) * t * t;
}

AlphaSigma alpha_sigma(const NoiseSchedule& sched, double t) {
  const double ib = integral_beta(sched, t);
  AlphaSigma out{};
  out.alpha = std::exp(-0.5 * ib);
  out.alpha_sq = std::exp(-ib);
  out.sigma_sq = -std::expm1(-ib);
  out.sigma = std::sqrt(out.sigma_sq);
  return out;
}

Batch perturb(const NoiseSchedule& sched, const Batch& x0, double t, const Batch& eps) {
  require_shape(x0.rows() == eps.rows() && x0.cols() == eps.cols(),
                "perturb: x0 and eps shapes differ");
  const AlphaSigma as = alpha_sigma(sched, t);
  return as.alpha * x0 + as.sigma * eps;
}

Batch perturb(const NoiseSchedule& sched, const Batch& x0, const Vec& t, const Batch& eps) {
  require_shape(x0.rows() == eps.rows() && x0.cols() == eps.cols(),
                "perturb: x0 and eps shapes differ");
  require_shape(t.size() == x0.cols(), "perturb: one time per sample required");
  Batch out(x0.rows(), x0.cols());
  for (Eigen::Index j = 0; j < x0.cols(); ++j) {
    const AlphaSigma as = alpha_sigma(sched, t(j));
    out.col(j) = as.alpha * x0.col(j) + as.sigma * eps.col(j);
  }
  return out;
}

BridgeParams bridge_params(const NoiseSchedule& sched, double t_prime, double t) {
  check_time(t_prime);
  check_time(t);
  if (t_prime > t) throw DomainError("bridge_params: t_prime must not exceed t");
  if (t_prime == t) return {0.0, 1.0, 0.0};
  const AlphaSigma at = alpha_sigma(sched, t);
  if (at.sigma_sq < kDegenerateSigmaSq) {
    throw DomainError("bridge_params: sigma_t vanishes, bridge is degenerate");
  }
  if (t_prime == 0.0) return {1.0, 0.0, 0.0};
  const AlphaSigma ap = alpha_sigma(sched, t_prime);
  const double gap = ap.alpha_sq - at.alpha_sq;
  BridgeParams out{};
  out.mean_coeff_x0 = gap / (ap.alpha * at.sigma_sq);
  out.mean_coeff_xt = at.alpha * ap.sigma_sq / (ap.alpha * at.sigma_sq);
  out.std = std::sqrt(ap.sigma_sq * gap / (ap.alpha_sq * at.sigma_sq));
  return out;
}

Batch bridge_sample(const NoiseSchedule& sched, double t_prime, double t, const Batch& x0,
                    const Batch& xt, const Batch& eps) {
  require_shape(x0.rows() == xt.rows() && x0.cols() == xt.cols(),
                "bridge_sample: x0 and xt shapes differ");
  require_shape(eps.rows() == x0.rows() && eps.cols() == x0.cols(),
                "bridge_sample: eps shape differs");
  const BridgeParams bp = bridge_params(sched, t_prime, t);
  if (bp.std == 0.0) {
    if (bp.mean_coeff_xt == 0.0) return x0;
    if (bp.mean_coeff_x0 == 0.0) return xt;
    return bp.mean_coeff_x0 * x0 + bp.mean_coeff_xt * xt;
  }
  return bp.mean_coeff_x0 * x0 + bp.mean_coeff_xt * xt + bp.std * eps;
}

}  // namespace stmd
