#include "stmd/sample.hpp"

#include "stmd/objectives.hpp"

#include <cmath>

namespace stmd {

void SamplerSpec::validate() const {
  if (n_inf < 1) throw ConfigError("sampler: n_inf must be >= 1");
  if (n_mf < 1) throw ConfigError("sampler: n_mf must be >= 1");
}

LinearObservation::LinearObservation(Eigen::MatrixXd mask, Vec y) : mask_(std::move(mask)), y_(std::move(y)) {
  if (mask_.rows() == 0 || mask_.cols() == 0) throw ConfigError("observation: empty mask");
  if (mask_.rows() != y_.size()) throw ConfigError("observation: mask rows and y length differ");
  if (!mask_.allFinite() || !y_.allFinite()) throw ConfigError("observation: non-finite entries");
  const Eigen::MatrixXd gram = mask_ * mask_.transpose();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
  lu.setThreshold(1e-12);
  if (!lu.isInvertible()) throw ConfigError("observation: M M^T is singular");
  pinv_ = mask_.transpose() * lu.inverse();
  particular_ = pinv_ * y_;
  null_proj_ = Eigen::MatrixXd::Identity(mask_.cols(), mask_.cols()) - pinv_ * mask_;
}

Batch LinearObservation::project(const Batch& x0) const {
  require_shape(x0.rows() == mask_.cols(), "observation: dimension mismatch");
  return (null_proj_ * x0).colwise() + particular_;
}

double LinearObservation::residual_inf(const Batch& x0) const {
  require_shape(x0.rows() == mask_.cols(), "observation: dimension mismatch");
  if (x0.cols() == 0) return 0.0;
  return ((mask_ * x0).colwise() - y_).cwiseAbs().maxCoeff();
}

namespace {

void require_finite(const Batch& b, const char* where) {
  if (!b.allFinite()) throw NumericError(std::string(where) + ": non-finite network output");
}

Batch run_stmd(const ConditionalField& net, const NoiseSchedule& sched, const SamplerSpec& spec,
               Eigen::Index batch, const LinearObservation* obs, const StepObserver& observer) {
  spec.validate();
  sched.validate();
  require_shape(batch >= 1, "sampler: batch must be positive");
  const Eigen::Index d = net.dim();
  Rng rng(spec.seed);
  Batch xt = standard_normal(rng, d, batch);
  const double n_inf = spec.n_inf;
  const double n_mf = spec.n_mf;
  for (int k = 0; k < spec.n_inf; ++k) {
    const double t = (n_inf - k) / n_inf;
    const double t_next = (n_inf - k - 1) / n_inf;
    const Vec tv = Vec::Constant(batch, t);
    Batch z = standard_normal(rng, d, batch);
    for (int i = 0; i < spec.n_mf; ++i) {
      const double s = (n_mf - i) / n_mf;
      const double r = (n_mf - i - 1) / n_mf;
      const Batch u = net.evaluate(FieldInput::conditional(z, Vec::Constant(batch, r), Vec::Constant(batch, s), xt, tv));
      require_finite(u, "stmd_sample");
      z -= (s - r) * u;
    }
    if (obs != nullptr) z = obs->project(z);
    if (t_next > 0.0) {
      const Batch eps = standard_normal(rng, d, batch);
      xt = bridge_sample(sched, t_next, t, z, xt, eps);
    } else {
      xt = std::move(z);
    }
    if (observer) observer(k, t_next, xt);
  }
  return xt;
}

}  // namespace

Batch stmd_sample(const ConditionalField& net, const NoiseSchedule& sched, const SamplerSpec& spec,
                  Eigen::Index batch, const StepObserver& observer) {
  return run_stmd(net, sched, spec, batch, nullptr, observer);
}

Batch stmd_inpaint(const ConditionalField& net, const NoiseSchedule& sched, const SamplerSpec& spec,
                   const LinearObservation& obs, Eigen::Index batch) {
  require_shape(obs.mask().cols() == net.dim(), "stmd_inpaint: mask width differs from data dimension");
  return run_stmd(net, sched, spec, batch, &obs, {});
}

Batch ddpm_sample(const ConditionalField& eps_net, const NoiseSchedule& sched, int n_steps,
                  Eigen::Index batch, std::uint64_t seed) {
  if (n_steps < 1) throw ConfigError("ddpm_sample: n_steps must be >= 1");
  require_shape(batch >= 1, "ddpm_sample: batch must be positive");
  sched.validate();
  const Eigen::Index d = eps_net.dim();
  Rng rng(seed);
  Batch xt = standard_normal(rng, d, batch);
  for (int k = 0; k < n_steps; ++k) {
    const double t = static_cast<double>(n_steps - k) / n_steps;
    const double t_next = static_cast<double>(n_steps - k - 1) / n_steps;
    const AlphaSigma as = alpha_sigma(sched, t);
    const Batch eps_hat = eps_net.evaluate(epsilon_input(xt, Vec::Constant(batch, t)));
    require_finite(eps_hat, "ddpm_sample");
    const Batch x0_hat = (xt - as.sigma * eps_hat) / as.alpha;
    if (t_next > 0.0) {
      const Batch eps = standard_normal(rng, d, batch);
      xt = bridge_sample(sched, t_next, t, x0_hat, xt, eps);
    } else {
      xt = x0_hat;
    }
  }
  return xt;
}

Batch fm_euler_sample(const ConditionalField& v_net, int n_steps, Eigen::Index batch, std::uint64_t seed) {
  if (n_steps < 1) throw ConfigError("fm_euler_sample: n_steps must be >= 1");
  require_shape(batch >= 1, "fm_euler_sample: batch must be positive");
  Rng rng(seed);
  Batch z = standard_normal(rng, v_net.dim(), batch);
  const double ds = 1.0 / n_steps;
  for (int i = 0; i < n_steps; ++i) {
    const double s = static_cast<double>(n_steps - i) / n_steps;
    const Batch v = v_net.evaluate(velocity_input(z, Vec::Constant(batch, s)));
    require_finite(v, "fm_euler_sample");
    z -= ds * v;
  }
  return z;
}

Batch meanflow_sample(const ConditionalField& u_net, int n_steps, Eigen::Index batch, std::uint64_t seed) {
  if (n_steps < 1) throw ConfigError("meanflow_sample: n_steps must be >= 1");
  require_shape(batch >= 1, "meanflow_sample: batch must be positive");
  Rng rng(seed);
  Batch z = standard_normal(rng, u_net.dim(), batch);
  for (int i = 0; i < n_steps; ++i) {
    const double s = static_cast<double>(n_steps - i) / n_steps;
    const double r = static_cast<double>(n_steps - i - 1) / n_steps;
    const Batch u = u_net.evaluate(
        FieldInput::unconditional(z, Vec::Constant(batch, r), Vec::Constant(batch, s)));
    require_finite(u, "meanflow_sample");
    z -= (s - r) * u;
  }
  return z;
}

SamplerSpec sampler_for_nfe(int nfe, std::uint64_t seed) {
  if (nfe < 1) throw ConfigError("sampler_for_nfe: nfe must be >= 1");
  SamplerSpec spec;
  spec.n_mf = (nfe >= 4 && nfe % 2 == 0) ? 2 : 1;
  spec.n_inf = nfe / spec.n_mf;
  spec.seed = seed;
  return spec;
}

Batch sample_trained(const ConditionalField& net, Objective objective, const NoiseSchedule& sched,
                     const SamplerSpec& spec, Eigen::Index batch) {
  spec.validate();
  switch (objective) {
    case Objective::stmd:
      return stmd_sample(net, sched, spec, batch);
    case Objective::meanflow:
      return meanflow_sample(net, spec.nfe(), batch, spec.seed);
    case Objective::cfm:
      return fm_euler_sample(net, spec.nfe(), batch, spec.seed);
    case Objective::ddpm:
      return ddpm_sample(net, sched, spec.nfe(), batch, spec.seed);
  }
  throw ConfigError("sample_trained: unknown objective");
}

}  // namespace stmd
