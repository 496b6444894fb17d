#include "stmd/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace stmd {

double GaussianFlow::spread(double s) const {
  const double a = 1.0 - s;
  return a * a * scale * scale + s * s;
}

double GaussianFlow::rate(double s) const {
  const double d = spread(s);
  if (!(d > 0.0)) throw DomainError("GaussianFlow: degenerate variance at s = 0 with zero scale");
  return (s - (1.0 - s) * scale * scale) / d;
}

double GaussianFlow::mean_rate(double r, double s) const {
  if (r == s) return rate(s);
  const double dr = spread(r);
  const double gap = s - r;
  if (!(dr > 0.0)) return 1.0 / gap;
  const double q = (s + r) - scale * scale * (2.0 - s - r);
  // 1 - sqrt(D(s)/D(r))^-1 with D(s)/D(r) = 1 + gap q / D(r)
  const double one_minus_g = -std::expm1(-0.5 * std::log1p(gap * q / dr));
  return one_minus_g / gap;
}

Batch GaussianFlow::velocity(double s, const Batch& z) const {
  require_shape(z.rows() == dim(), "GaussianFlow::velocity: dimension mismatch");
  const double k = rate(s);
  return (k * (z.colwise() - (1.0 - s) * mean)).colwise() - mean;
}

Batch GaussianFlow::mean_velocity(double r, double s, const Batch& z) const {
  require_shape(z.rows() == dim(), "GaussianFlow::mean_velocity: dimension mismatch");
  const double h = mean_rate(r, s);
  return (h * (z.colwise() - (1.0 - s) * mean)).colwise() - mean;
}

Batch GaussianFlow::flow_map(double r, double s, const Batch& z) const {
  require_shape(z.rows() == dim(), "GaussianFlow::flow_map: dimension mismatch");
  const double ds = spread(s);
  if (!(ds > 0.0)) throw DomainError("GaussianFlow::flow_map: degenerate variance at s");
  const double g = std::sqrt(spread(r) / ds);
  return (g * (z.colwise() - (1.0 - s) * mean)).colwise() + (1.0 - r) * mean;
}

namespace {

void check_unit(double v, const char* what) {
  if (!(v >= 0.0 && v <= 1.0)) throw DomainError(std::string(what) + " must lie in [0, 1]");
}

GaussianFlow centered(double sigma0, Eigen::Index dim) {
  if (!(sigma0 > 0.0)) throw DomainError("sigma0 must be positive");
  return GaussianFlow{Vec::Zero(dim), sigma0};
}

}  // namespace

Batch gauss_velocity(double sigma0, double s, const Batch& z) {
  check_unit(s, "gauss_velocity: s");
  return centered(sigma0, z.rows()).velocity(s, z);
}

Batch gauss_meanflow_u(double sigma0, double r, double s, const Batch& z) {
  check_unit(r, "gauss_meanflow_u: r");
  check_unit(s, "gauss_meanflow_u: s");
  if (r > s) throw DomainError("gauss_meanflow_u: requires r <= s");
  return centered(sigma0, z.rows()).mean_velocity(r, s, z);
}

Batch mixture_velocity(const IsoGmm& source, double s, const Batch& z) {
  source.validate();
  const Eigen::Index d = source.dim();
  require_shape(z.rows() == d, "mixture_velocity: dimension mismatch");
  const std::size_t k_count = source.size();
  std::vector<GaussianFlow> flows;
  flows.reserve(k_count);
  for (std::size_t k = 0; k < k_count; ++k) {
    flows.push_back(GaussianFlow{source.means[k], source.scales[k]});
    if (!(flows.back().spread(s) > 0.0)) {
      throw DomainError("mixture_velocity: point-mass component at s = 0");
    }
  }
  Batch out = Batch::Zero(d, z.cols());
  std::vector<double> logw(k_count);
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < k_count; ++k) {
      const double var = flows[k].spread(s);
      const double dist = (z.col(j) - (1.0 - s) * source.means[k]).squaredNorm();
      logw[k] = std::log(source.weights[k]) - 0.5 * dist / var - 0.5 * static_cast<double>(d) * std::log(var);
      top = std::max(top, logw[k]);
    }
    double total = 0.0;
    for (std::size_t k = 0; k < k_count; ++k) {
      logw[k] = std::exp(logw[k] - top);
      total += logw[k];
    }
    for (std::size_t k = 0; k < k_count; ++k) {
      if (logw[k] == 0.0) continue;
      out.col(j) += (logw[k] / total) * flows[k].velocity(s, z.col(j));
    }
  }
  return out;
}

IsoGmm mixture_posterior(const IsoGmm& prior, const NoiseSchedule& sched, double t, const Vec& xt) {
  prior.validate();
  check_unit(t, "mixture_posterior: t");
  require_shape(xt.size() == prior.dim(), "mixture_posterior: dimension mismatch");
  const AlphaSigma as = alpha_sigma(sched, t);
  const double d = static_cast<double>(prior.dim());
  IsoGmm post;
  std::vector<double> logw(prior.size());
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < prior.size(); ++k) {
    const double sk2 = prior.scales[k] * prior.scales[k];
    const double var = as.alpha_sq * sk2 + as.sigma_sq;
    if (!(var > 0.0)) throw DomainError("mixture_posterior: point-mass prior observed at t = 0");
    post.means.push_back((as.sigma_sq * prior.means[k] + as.alpha * sk2 * xt) / var);
    post.scales.push_back(std::sqrt(sk2 * as.sigma_sq / var));
    logw[k] = std::log(prior.weights[k]) - 0.5 * (xt - as.alpha * prior.means[k]).squaredNorm() / var -
              0.5 * d * std::log(var);
    top = std::max(top, logw[k]);
  }
  double total = 0.0;
  for (double& w : logw) {
    w = std::exp(w - top);
    total += w;
  }
  for (double w : logw) post.weights.push_back(w / total);
  return post;
}

Batch GaussianMeanFlowField::evaluate(const FieldInput& in) const {
  in.check(dim());
  Batch out(dim(), in.size());
  for (Eigen::Index j = 0; j < in.size(); ++j) {
    out.col(j) = flow_.mean_velocity(in.r(j), in.s(j), in.z.col(j));
  }
  return out;
}

GaussianFlow GaussianPosteriorField::posterior(double t, const Vec& xt) const {
  const AlphaSigma as = alpha_sigma(sched_, t);
  const double s2 = scale_ * scale_;
  const double var = as.alpha_sq * s2 + as.sigma_sq;
  if (!(var > 0.0)) throw DomainError("GaussianPosteriorField: point-mass prior at t = 0");
  return GaussianFlow{(as.sigma_sq * mean_ + as.alpha * s2 * xt) / var, std::sqrt(s2 * as.sigma_sq / var)};
}

Batch GaussianPosteriorField::evaluate(const FieldInput& in) const {
  in.check(dim());
  Batch out(dim(), in.size());
  for (Eigen::Index j = 0; j < in.size(); ++j) {
    out.col(j) = posterior(in.t(j), in.x.col(j)).mean_velocity(in.r(j), in.s(j), in.z.col(j));
  }
  return out;
}

Vec integrate_flow(const std::function<Vec(double, const Vec&)>& velocity, double r, double s, const Vec& z,
                   int steps) {
  if (steps < 1) throw ConfigError("integrate_flow: steps must be >= 1");
  const double h = (r - s) / steps;
  Vec y = z;
  for (int i = 0; i < steps; ++i) {
    const double tau = s + i * h;
    const Vec k1 = velocity(tau, y);
    const Vec k2 = velocity(tau + 0.5 * h, y + 0.5 * h * k1);
    const Vec k3 = velocity(tau + 0.5 * h, y + 0.5 * h * k2);
    const Vec k4 = velocity(tau + h, y + h * k3);
    y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return y;
}

MixturePosteriorField::MixturePosteriorField(NoiseSchedule sched, IsoGmm prior, int steps_per_unit)
    : sched_(sched), prior_(std::move(prior)), steps_per_unit_(steps_per_unit) {
  prior_.validate();
  if (steps_per_unit_ < 1) throw ConfigError("MixturePosteriorField: steps_per_unit must be >= 1");
}

Batch MixturePosteriorField::evaluate(const FieldInput& in) const {
  in.check(dim());
  Batch out(dim(), in.size());
  for (Eigen::Index j = 0; j < in.size(); ++j) {
    const IsoGmm post = mixture_posterior(prior_, sched_, in.t(j), in.x.col(j));
    const double r = in.r(j);
    const double s = in.s(j);
    const auto v = [&post](double tau, const Vec& z) -> Vec { return mixture_velocity(post, tau, z).col(0); };
    if (r == s) {
      out.col(j) = v(s, in.z.col(j));
      continue;
    }
    const int steps = std::max(1, static_cast<int>(std::ceil(steps_per_unit_ * std::abs(s - r))));
    out.col(j) = (in.z.col(j) - integrate_flow(v, r, s, in.z.col(j), steps)) / (s - r);
  }
  return out;
}

Batch GaussianEpsField::evaluate(const FieldInput& in) const {
  in.check(dim());
  const double s2 = scale_ * scale_;
  Batch out(dim(), in.size());
  for (Eigen::Index j = 0; j < in.size(); ++j) {
    const AlphaSigma as = alpha_sigma(sched_, in.t(j));
    if (!(as.sigma > 0.0)) throw DomainError("GaussianEpsField: undefined at t = 0");
    const double var = as.alpha_sq * s2 + as.sigma_sq;
    const Vec posterior_mean = (as.sigma_sq * mean_ + as.alpha * s2 * in.z.col(j)) / var;
    out.col(j) = (in.z.col(j) - as.alpha * posterior_mean) / as.sigma;
  }
  return out;
}

Batch GaussianVelocityField::evaluate(const FieldInput& in) const {
  in.check(dim());
  Batch out(dim(), in.size());
  for (Eigen::Index j = 0; j < in.size(); ++j) out.col(j) = flow_.velocity(in.s(j), in.z.col(j));
  return out;
}

}  // namespace stmd
