#include "stmd/objectives.hpp"

#include <cmath>

namespace stmd {

void RsSamplerConfig::validate() const {
  if (!(sigma > 0.0)) throw ConfigError("rs_sampler: sigma must be positive");
  if (!(p_equal >= 0.0 && p_equal <= 1.0)) throw ConfigError("rs_sampler: p_equal must lie in [0, 1]");
  if (!std::isfinite(mu)) throw ConfigError("rs_sampler: mu must be finite");
}

void WeightingConfig::validate() const {
  if (!(c > 0.0)) throw ConfigError("weighting: c must be positive");
  if (!std::isfinite(p)) throw ConfigError("weighting: p must be finite");
}

std::pair<double, double> sample_rs(Rng& rng, const RsSamplerConfig& cfg) {
  std::normal_distribution<double> normal(cfg.mu, cfg.sigma);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double a = 1.0 / (1.0 + std::exp(-normal(rng)));
  const double b = 1.0 / (1.0 + std::exp(-normal(rng)));
  const double s = std::max(a, b);
  double r = std::min(a, b);
  if (unif(rng) < cfg.p_equal) r = s;
  return {r, s};
}

double adaptive_weight(double delta_sq, double c, double p) {
  if (!(c > 0.0)) throw ConfigError("adaptive_weight: c must be positive");
  if (!(delta_sq >= 0.0)) throw DomainError("adaptive_weight: delta_sq must be nonnegative");
  if (p == 0.0) return 1.0;
  return std::pow(delta_sq + c, -p);
}

Batch cfm_residual(const Batch& v_pred, const Batch& z0, const Batch& z1) {
  require_shape(v_pred.rows() == z0.rows() && v_pred.cols() == z0.cols() &&
                    z1.rows() == z0.rows() && z1.cols() == z0.cols(),
                "cfm_residual: shapes differ");
  return v_pred - (z1 - z0);
}

namespace {

MeanFlowResidual mean_flow_residual(const ConditionalField& net, FieldInput in, Batch velocity) {
  require_shape(velocity.rows() == in.z.rows() && velocity.cols() == in.z.cols(),
                "mean-flow residual: velocity shape differs from z_s");
  const Vec gap = in.s - in.r;
  JvpResult jr = net.jvp(in, FieldTangent::along_s(velocity));
  MeanFlowResidual out;
  out.target = velocity - jr.du * gap.asDiagonal();
  out.delta = jr.u - out.target;
  out.u = std::move(jr.u);
  out.du = std::move(jr.du);
  return out;
}

}  // namespace

MeanFlowResidual mf_target_and_residual(const ConditionalField& net, const Batch& z_s, const Vec& r,
                                        const Vec& s, const Batch& z0, const Batch& z1) {
  require_shape(z0.rows() == z1.rows() && z0.cols() == z1.cols(), "mf residual: z0/z1 shapes differ");
  return mean_flow_residual(net, FieldInput::unconditional(z_s, r, s), z1 - z0);
}

MeanFlowResidual dcmf_target_and_residual(const ConditionalField& net, const Batch& z_s,
                                          const Vec& r, const Vec& s, const Batch& x_t,
                                          const Vec& t, const Batch& x0, const Batch& z1) {
  require_shape(x0.rows() == z1.rows() && x0.cols() == z1.cols(), "dcmf residual: x0/z1 shapes differ");
  return mean_flow_residual(net, FieldInput::conditional(z_s, r, s, x_t, t), z1 - x0);
}

LossBreakdown weighted_loss(const Batch& delta, const WeightingConfig& cfg, Batch* upstream) {
  cfg.validate();
  const Eigen::Index n = delta.cols();
  require_shape(n > 0, "weighted_loss: empty batch");
  LossBreakdown out;
  out.per_sample = delta.colwise().squaredNorm().transpose();
  if (!out.per_sample.allFinite()) throw NumericError("weighted_loss: non-finite residual");
  out.raw_loss = out.per_sample.mean();
  out.mean_delta_sq = out.raw_loss;
  Vec weights(n);
  if (cfg.per_sample) {
    for (Eigen::Index j = 0; j < n; ++j) weights(j) = adaptive_weight(out.per_sample(j), cfg.c, cfg.p);
  } else {
    weights.setConstant(adaptive_weight(out.mean_delta_sq, cfg.c, cfg.p));
  }
  out.weighted_loss = weights.dot(out.per_sample) / static_cast<double>(n);
  if (upstream != nullptr) {
    *upstream = delta * (2.0 / static_cast<double>(n) * weights).asDiagonal();
  }
  return out;
}

FieldInput velocity_input(Batch z, const Vec& s) { return FieldInput::unconditional(std::move(z), s, s); }

FieldInput epsilon_input(Batch x_t, const Vec& t) {
  const Eigen::Index d = x_t.rows();
  const Eigen::Index n = x_t.cols();
  return FieldInput{std::move(x_t), Vec::Zero(n), Vec::Zero(n), Batch::Zero(d, n), t};
}

}  // namespace stmd
