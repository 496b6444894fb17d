#include "stmd/eval.hpp"

#include "stmd/assignment.hpp"
#include "stmd/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

namespace stmd {

const char* to_string(W2Report::Method method) {
  switch (method) {
    case W2Report::Method::exact_assignment:
      return "exact_assignment";
    case W2Report::Method::gaussian_closed_form:
      return "gaussian_closed_form";
  }
  return "unknown";
}

W2Report w2_exact(const Batch& a, const Batch& b) {
  require_shape(a.rows() == b.rows(), "w2_exact: dimensions differ");
  require_shape(a.cols() == b.cols(), "w2_exact: sample counts differ");
  const Eigen::Index n = a.cols();
  require_shape(n >= 1, "w2_exact: empty sample sets");
  if (n > kMaxAssignmentSize) {
    throw CapacityError("w2_exact: n = " + std::to_string(n) + " exceeds " + std::to_string(kMaxAssignmentSize));
  }
  Eigen::MatrixXd cost(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) cost(i, j) = (a.col(i) - b.col(j)).squaredNorm();
  }
  const Assignment match = solve_assignment(cost);
  // Summing the matched costs in sorted order makes the result independent of argument order.
  std::vector<double> matched(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) matched[i] = cost(i, match.row_to_col[i]);
  std::sort(matched.begin(), matched.end());
  double total = 0.0;
  for (double c : matched) total += c;
  return W2Report{total / static_cast<double>(n), n, W2Report::Method::exact_assignment};
}

double w2_gaussian(const Vec& m1, double s1, const Vec& m2, double s2) {
  require_shape(m1.size() == m2.size(), "w2_gaussian: dimensions differ");
  if (!(s1 >= 0.0) || !(s2 >= 0.0)) throw DomainError("w2_gaussian: scales must be nonnegative");
  const double gap = s1 - s2;
  return (m1 - m2).squaredNorm() + static_cast<double>(m1.size()) * gap * gap;
}

W2Report w2_gaussian_fit(const Batch& samples, const Vec& mean, double scale) {
  require_shape(samples.rows() == mean.size(), "w2_gaussian_fit: dimensions differ");
  require_shape(samples.cols() >= 2, "w2_gaussian_fit: need at least two samples");
  if (!(scale >= 0.0)) throw DomainError("w2_gaussian_fit: scale must be nonnegative");
  const double n = static_cast<double>(samples.cols());
  const Vec m = samples.rowwise().mean();
  const Batch centered = samples.colwise() - m;
  const Eigen::MatrixXd cov = centered * centered.transpose() / (n - 1.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  double trace_sqrt = 0.0;
  for (Eigen::Index i = 0; i < eig.eigenvalues().size(); ++i) trace_sqrt += std::sqrt(std::max(0.0, eig.eigenvalues()(i)));
  const double d = static_cast<double>(mean.size());
  const double value = (m - mean).squaredNorm() + cov.trace() + d * scale * scale - 2.0 * scale * trace_sqrt;
  return W2Report{std::max(0.0, value), samples.cols(), W2Report::Method::gaussian_closed_form};
}

double energy_distance(const Batch& a, const Batch& b) {
  require_shape(a.cols() >= 1 && b.cols() >= 1, "energy_distance: empty sample set");
  require_shape(a.rows() == b.rows(), "energy_distance: dimensions differ");
  const Eigen::Index n = a.cols();
  const Eigen::Index m = b.cols();
  double cross = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) cross += (a.col(i) - b.col(j)).norm();
  }
  cross /= static_cast<double>(n) * static_cast<double>(m);
  auto within = [](const Batch& x) {
    const Eigen::Index k = x.cols();
    if (k < 2) return 0.0;
    double sum = 0.0;
    for (Eigen::Index i = 0; i < k; ++i) {
      for (Eigen::Index j = i + 1; j < k; ++j) sum += (x.col(i) - x.col(j)).norm();
    }
    return 2.0 * sum / (static_cast<double>(k) * static_cast<double>(k - 1));
  };
  return 2.0 * cross - within(a) - within(b);
}

namespace {

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mean_se(const std::vector<double>& xs) {
  MeanSe out;
  if (xs.empty()) return out;
  for (double x : xs) out.mean += x;
  out.mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return out;
  double ss = 0.0;
  for (double x : xs) ss += (x - out.mean) * (x - out.mean);
  out.se = std::sqrt(ss / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
  return out;
}

}  // namespace

W2Estimate w2_debiased(const BatchSampler& model, const BatchSampler& data, Eigen::Index n,
                       int replicates, std::uint64_t seed) {
  if (replicates < 1) throw ConfigError("w2_debiased: replicates must be >= 1");
  Rng rng(seed);
  std::vector<double> debiased;
  std::vector<double> raw;
  for (int k = 0; k < replicates; ++k) {
    const Batch a = model(n, rng);
    const Batch a2 = model(n, rng);
    const Batch b = data(n, rng);
    const Batch b2 = data(n, rng);
    const double cross = w2_exact(a, b).value;
    const double self_a = w2_exact(a, a2).value;
    const double self_b = w2_exact(b, b2).value;
    raw.push_back(cross);
    debiased.push_back(cross - 0.5 * (self_a + self_b));
  }
  const MeanSe d = mean_se(debiased);
  const MeanSe r = mean_se(raw);
  return W2Estimate{d.mean, d.se, r.mean, r.se, replicates, n};
}

void EpsilonConfig::validate() const {
  if (grid < 1) throw ConfigError("epsilon: grid must be >= 1");
  if (draws < 2) throw ConfigError("epsilon: draws must be >= 2");
}

namespace {

// Accumulates per-node residual means into a stratified estimate.
class NodeAccumulator {
 public:
  explicit NodeAccumulator(int grid) : per_node_(grid), var_sum_(0.0) {}

  void add(int node, const Batch& residual) {
    const Vec sq = residual.colwise().squaredNorm().transpose();
    const double n = static_cast<double>(sq.size());
    const double mean = sq.mean();
    const double var = (sq.array() - mean).square().sum() / (n - 1.0);
    per_node_(node) = mean;
    var_sum_ += var / n;
  }

  EpsilonEstimate finish() const {
    const double g = static_cast<double>(per_node_.size());
    return EpsilonEstimate{per_node_.mean(), std::sqrt(var_sum_) / g, per_node_};
  }

 private:
  Vec per_node_;
  double var_sum_;
};

double node_time(int i, int grid) { return (i + 0.5) / grid; }

Batch interpolate(const Batch& z0, const Batch& z1, double s) { return (1.0 - s) * z0 + s * z1; }

Batch mean_flow_residual(const ConditionalField& model, const FieldInput& in, const Batch& velocity, double s) {
  const JvpResult jr = model.jvp(in, FieldTangent::along_s(velocity));
  return jr.u - (velocity - s * jr.du);
}

}  // namespace

EpsilonEstimate estimate_epsilon(const ConditionalField& model, const VelocityOracle& velocity,
                                 const DatasetSpec& data, const EpsilonConfig& cfg) {
  cfg.validate();
  require_shape(data.dim == model.dim(), "estimate_epsilon: data and model dimensions differ");
  Rng rng(cfg.seed);
  const Eigen::Index n = cfg.draws;
  NodeAccumulator acc(cfg.grid);
  for (int i = 0; i < cfg.grid; ++i) {
    const double s = node_time(i, cfg.grid);
    const Batch z0 = sample_dataset(data, n, rng);
    const Batch z1 = standard_normal(rng, model.dim(), n);
    const Batch zs = interpolate(z0, z1, s);
    const Batch v = velocity(s, zs);
    const FieldInput in = FieldInput::unconditional(zs, Vec::Zero(n), Vec::Constant(n, s));
    acc.add(i, mean_flow_residual(model, in, v, s));
  }
  return acc.finish();
}

EpsilonEstimate estimate_conditional_epsilon(const ConditionalField& model, const IsoGmm& data,
                                             const NoiseSchedule& sched, double t,
                                             const EpsilonConfig& cfg) {
  cfg.validate();
  data.validate();
  require_shape(data.dim() == model.dim(), "estimate_conditional_epsilon: dimensions differ");
  Rng rng(cfg.seed);
  const Eigen::Index n = cfg.draws;
  const Eigen::Index d = model.dim();
  NodeAccumulator acc(cfg.grid);
  for (int i = 0; i < cfg.grid; ++i) {
    const double s = node_time(i, cfg.grid);
    // (x0, x_t) drawn jointly, so x0 is a draw from p(x0 | x_t).
    const Batch x0 = sample_mixture(data, n, rng);
    const Batch xt = perturb(sched, x0, t, standard_normal(rng, d, n));
    const Batch z1 = standard_normal(rng, d, n);
    const Batch zs = interpolate(x0, z1, s);
    Batch v(d, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const IsoGmm post = mixture_posterior(data, sched, t, xt.col(j));
      v.col(j) = mixture_velocity(post, s, zs.col(j));
    }
    const FieldInput in = FieldInput::conditional(zs, Vec::Zero(n), Vec::Constant(n, s), xt, Vec::Constant(n, t));
    acc.add(i, mean_flow_residual(model, in, v, s));
  }
  return acc.finish();
}

EpsilonEstimate estimate_gamma(const ConditionalField& model, const IsoGmm& data, const NoiseSchedule& sched,
                               double t, const Vec& xt, const EpsilonConfig& cfg) {
  cfg.validate();
  require_shape(xt.size() == model.dim(), "estimate_gamma: dimensions differ");
  const IsoGmm post = mixture_posterior(data, sched, t, xt);
  Rng rng(cfg.seed);
  const Eigen::Index n = cfg.draws;
  const Batch xt_rep = xt.replicate(1, n);
  NodeAccumulator acc(cfg.grid);
  for (int i = 0; i < cfg.grid; ++i) {
    const double s = node_time(i, cfg.grid);
    const Batch x0 = sample_mixture(post, n, rng);
    const Batch z1 = standard_normal(rng, model.dim(), n);
    const Batch zs = interpolate(x0, z1, s);
    const Batch v = mixture_velocity(post, s, zs);
    const FieldInput in =
        FieldInput::conditional(zs, Vec::Zero(n), Vec::Constant(n, s), xt_rep, Vec::Constant(n, t));
    acc.add(i, mean_flow_residual(model, in, v, s));
  }
  return acc.finish();
}

LipschitzEstimate lipschitz_probe(const ConditionalField& model, const LipschitzConfig& cfg) {
  if (cfg.pairs < 1 || cfg.draws < 1) throw ConfigError("lipschitz_probe: pairs and draws must be positive");
  if (!(cfg.local_scale > 0.0)) throw ConfigError("lipschitz_probe: local_scale must be positive");
  Rng rng(cfg.seed);
  const Eigen::Index d = model.dim();
  const Eigen::Index n = cfg.draws;
  const Vec zeros = Vec::Zero(n);
  const Vec ones = Vec::Ones(n);
  LipschitzEstimate out;
  for (int p = 0; p < cfg.pairs; ++p) {
    const bool local = p >= cfg.pairs / 2;
    const Vec x = standard_normal(rng, d, 1).col(0);
    Vec x2 = standard_normal(rng, d, 1).col(0);
    if (local) x2 = x + cfg.local_scale * x2;
    const double gap = (x - x2).squaredNorm();
    const Batch z1 = standard_normal(rng, d, n);
    if (!(gap > 0.0)) continue;
    const Batch u1 = model.evaluate(FieldInput::conditional(z1, zeros, ones, x.replicate(1, n), ones));
    const Batch u2 = model.evaluate(FieldInput::conditional(z1, zeros, ones, x2.replicate(1, n), ones));
    const double ratio = std::sqrt((u1 - u2).colwise().squaredNorm().mean() / gap);
    if (local) {
      out.local_max = std::max(out.local_max, ratio);
    } else {
      out.global_max = std::max(out.global_max, ratio);
    }
  }
  out.value = std::max(out.local_max, out.global_max);
  return out;
}

std::string bound_report_csv_header() {
  return "name,epsilon_hat,epsilon_se,w2_sq,w2_se,w2_raw,w2_gaussian,bound_rhs,bound_rhs_safe,"
         "lipschitz,m2,alpha1,sigma1,combined_se,slack,satisfied";
}

std::string to_csv_row(const BoundReport& r) {
  std::ostringstream os;
  os.precision(10);
  os << r.name << ',' << r.epsilon_hat << ',' << r.epsilon_se << ',' << r.w2_sq << ',' << r.w2_se << ','
     << r.w2_raw << ',' << r.w2_gaussian << ',' << r.bound_rhs << ',' << r.bound_rhs_safe << ','
     << r.lipschitz << ',' << r.m2 << ',' << r.alpha1 << ',' << r.sigma1 << ',' << r.combined_se << ','
     << r.slack << ',' << (r.satisfied ? "true" : "false");
  return os.str();
}

std::string to_text(const BoundReport& r) {
  std::ostringstream os;
  os.precision(6);
  os << r.name << ": W2^2 = " << r.w2_sq << " (se " << r.w2_se << ", raw " << r.w2_raw << ")"
     << " <= " << r.bound_rhs << " ? " << (r.satisfied ? "yes" : "NO") << "  slack " << r.slack << '\n';
  os << "  eps = " << r.epsilon_hat << " (se " << r.epsilon_se << ")";
  if (r.w2_gaussian > 0.0) os << "  gaussian-fit W2^2 = " << r.w2_gaussian;
  if (r.lipschitz > 0.0 || r.m2 > 0.0) {
    os << "\n  L (probe, lower bound) = " << r.lipschitz << "  bound with 2L = " << r.bound_rhs_safe
       << "  m2 = " << r.m2 << "  alpha1 = " << r.alpha1 << "  sigma1 = " << r.sigma1;
  }
  os << '\n';
  return os.str();
}

namespace {

std::pair<Vec, double> gaussian_params(const DatasetSpec& data, const char* who) {
  const auto mix = data.as_mixture();
  if (data.kind != DatasetSpec::Kind::gaussian || !mix || mix->size() != 1) {
    throw ConfigError(std::string(who) + ": requires a gaussian dataset");
  }
  return {mix->means.front(), mix->scales.front()};
}

void finish_report(BoundReport& report, const W2Estimate& w2, double eps_term_se) {
  report.w2_sq = std::max(0.0, w2.value);
  report.w2_se = w2.std_error;
  report.w2_raw = w2.raw;
  report.combined_se = std::sqrt(w2.std_error * w2.std_error + eps_term_se * eps_term_se);
  report.slack = report.bound_rhs - report.w2_sq;
  report.satisfied = w2.value <= report.bound_rhs + 3.0 * report.combined_se;
}

}  // namespace

BoundReport check_theorem1(const ConditionalField& model, const DatasetSpec& gaussian_data,
                           const BoundCheckConfig& cfg) {
  const auto [mean, scale] = gaussian_params(gaussian_data, "check_theorem1");
  require_shape(mean.size() == model.dim(), "check_theorem1: dimensions differ");
  const GaussianFlow flow{mean, scale};
  const EpsilonEstimate eps = estimate_epsilon(
      model, [&](double s, const Batch& z) { return flow.velocity(s, z); }, gaussian_data, cfg.epsilon);
  const Eigen::Index d = model.dim();
  const BatchSampler one_step = [&](Eigen::Index n, Rng& rng) {
    const Batch z1 = standard_normal(rng, d, n);
    return Batch(z1 - model.evaluate(FieldInput::unconditional(z1, Vec::Zero(n), Vec::Ones(n))));
  };
  const BatchSampler truth = [&](Eigen::Index n, Rng& rng) { return sample_dataset(gaussian_data, n, rng); };
  const W2Estimate w2 = w2_debiased(one_step, truth, cfg.n, cfg.replicates, cfg.seed);

  BoundReport report;
  report.name = "theorem1";
  report.epsilon_hat = eps.value;
  report.epsilon_se = eps.std_error;
  report.bound_rhs = std::numbers::e * eps.value;
  report.bound_rhs_safe = report.bound_rhs;
  Rng rng(cfg.seed + 1);
  report.w2_gaussian = w2_gaussian_fit(one_step(cfg.n, rng), mean, scale).value;
  finish_report(report, w2, std::numbers::e * eps.std_error);
  return report;
}

BoundReport check_corollary1(const ConditionalField& model, const NoiseSchedule& sched,
                             const DatasetSpec& gaussian_data, double t, const Vec& xt,
                             const BoundCheckConfig& cfg) {
  const auto [mean, scale] = gaussian_params(gaussian_data, "check_corollary1");
  require_shape(mean.size() == model.dim() && xt.size() == model.dim(), "check_corollary1: dimensions differ");
  const IsoGmm prior = IsoGmm::gaussian(mean, scale);
  const EpsilonEstimate gamma = estimate_gamma(model, prior, sched, t, xt, cfg.epsilon);
  const IsoGmm post = mixture_posterior(prior, sched, t, xt);
  const Eigen::Index d = model.dim();
  const BatchSampler one_step = [&](Eigen::Index n, Rng& rng) {
    const Batch z1 = standard_normal(rng, d, n);
    const FieldInput in =
        FieldInput::conditional(z1, Vec::Zero(n), Vec::Ones(n), xt.replicate(1, n), Vec::Constant(n, t));
    return Batch(z1 - model.evaluate(in));
  };
  const BatchSampler truth = [&](Eigen::Index n, Rng& rng) { return sample_mixture(post, n, rng); };
  const W2Estimate w2 = w2_debiased(one_step, truth, cfg.n, cfg.replicates, cfg.seed);

  BoundReport report;
  report.name = "corollary1";
  report.epsilon_hat = gamma.value;
  report.epsilon_se = gamma.std_error;
  report.bound_rhs = std::numbers::e * gamma.value;
  report.bound_rhs_safe = report.bound_rhs;
  Rng rng(cfg.seed + 1);
  report.w2_gaussian = w2_gaussian_fit(one_step(cfg.n, rng), post.means.front(), post.scales.front()).value;
  finish_report(report, w2, std::numbers::e * gamma.std_error);
  return report;
}

BoundReport check_corollary2(const ConditionalField& model, const NoiseSchedule& sched,
                             const DatasetSpec& mixture_data, const BoundCheckConfig& cfg) {
  const auto mix = mixture_data.as_mixture();
  if (!mix) throw ConfigError("check_corollary2: requires a gaussian or gmm dataset");
  require_shape(mix->dim() == model.dim(), "check_corollary2: dimensions differ");
  const Eigen::Index d = model.dim();
  const LipschitzEstimate lip = lipschitz_probe(model, cfg.lipschitz);
  const EpsilonEstimate eps1 = estimate_conditional_epsilon(model, *mix, sched, 1.0, cfg.epsilon);
  const AlphaSigma as = alpha_sigma(sched, 1.0);
  const double m2 = second_moment(mixture_data);
  const double drift = as.alpha_sq * m2 + (1.0 - as.sigma) * (1.0 - as.sigma) * static_cast<double>(d);

  const BatchSampler one_step = [&](Eigen::Index n, Rng& rng) {
    const Batch x1 = standard_normal(rng, d, n);
    const Batch z1 = standard_normal(rng, d, n);
    const FieldInput in = FieldInput::conditional(z1, Vec::Zero(n), Vec::Ones(n), x1, Vec::Ones(n));
    return Batch(z1 - model.evaluate(in));
  };
  const BatchSampler truth = [&](Eigen::Index n, Rng& rng) { return sample_dataset(mixture_data, n, rng); };
  const W2Estimate w2 = w2_debiased(one_step, truth, cfg.n, cfg.replicates, cfg.seed);

  BoundReport report;
  report.name = "corollary2";
  report.epsilon_hat = eps1.value;
  report.epsilon_se = eps1.std_error;
  report.lipschitz = lip.value;
  report.m2 = m2;
  report.alpha1 = as.alpha;
  report.sigma1 = as.sigma;
  const double e = std::numbers::e;
  report.bound_rhs = 2.0 * (lip.value * lip.value * drift + e * eps1.value);
  report.bound_rhs_safe = 2.0 * (4.0 * lip.value * lip.value * drift + e * eps1.value);
  finish_report(report, w2, 2.0 * e * eps1.std_error);
  return report;
}

double alpha1_threshold(double m2, int d, double eps1) {
  if (!(m2 >= 0.0) || !std::isfinite(m2)) throw DomainError("alpha1_threshold: m2 must be nonnegative");
  if (d < 1) throw DomainError("alpha1_threshold: d must be >= 1");
  if (!(eps1 > 0.0) || !std::isfinite(eps1)) throw DomainError("alpha1_threshold: eps1 must be positive");
  // Positive root of d a^2 + m2 a - eps1 = 0 in a = alpha^2, written without cancellation.
  const double a = 2.0 * eps1 / (m2 + std::sqrt(m2 * m2 + 4.0 * eps1 * static_cast<double>(d)));
  return std::sqrt(a);
}

namespace {

NetConfig random_config(Rng& rng) {
  std::uniform_int_distribution<int> dim(1, 3);
  std::uniform_int_distribution<int> depth(1, 3);
  std::uniform_int_distribution<int> width(4, 24);
  std::uniform_int_distribution<int> embed(1, 4);
  NetConfig cfg;
  cfg.dim = dim(rng);
  cfg.hidden.clear();
  const int layers = depth(rng);
  for (int l = 0; l < layers; ++l) cfg.hidden.push_back(width(rng));
  cfg.embed_dim = 2 * embed(rng);
  return cfg;
}

FieldInput random_input(Rng& rng, Eigen::Index dim, Eigen::Index n) {
  std::uniform_real_distribution<double> unif(0.05, 0.95);
  Vec r(n), s(n), t(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double a = unif(rng);
    const double b = unif(rng);
    r(j) = std::min(a, b);
    s(j) = std::max(a, b);
    t(j) = unif(rng);
  }
  Batch z = standard_normal(rng, dim, n);
  Batch x = standard_normal(rng, dim, n);
  return FieldInput::conditional(std::move(z), r, s, std::move(x), t);
}

FieldInput shifted(const FieldInput& in, const FieldTangent& tan, double h) {
  return FieldInput::conditional(in.z + h * tan.dz, in.r + h * tan.dr, in.s + h * tan.ds, in.x + h * tan.dx,
                                 in.t + h * tan.dt);
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-4}); }

}  // namespace

FdReport jvp_fd_suite(int net_count, double tol, std::uint64_t seed) {
  if (net_count < 1) throw ConfigError("jvp_fd_suite: net_count must be >= 1");
  constexpr double h = 1e-4;
  constexpr Eigen::Index batch = 4;
  constexpr int params_per_net = 8;
  Rng rng(seed);
  FdReport report;
  report.nets = net_count;
  for (int k = 0; k < net_count; ++k) {
    const NetConfig cfg = random_config(rng);
    MlpNet net = MlpNet::init(cfg, rng());
    const FieldInput in = random_input(rng, cfg.dim, batch);
    const Eigen::Index n = in.size();
    FieldTangent tan{standard_normal(rng, cfg.dim, n), standard_normal(rng, 1, n).row(0).transpose() * 0.1,
                     standard_normal(rng, 1, n).row(0).transpose() * 0.1, standard_normal(rng, cfg.dim, n),
                     standard_normal(rng, 1, n).row(0).transpose() * 0.1};

    const JvpResult jr = net.jvp(in, tan);
    const Batch fd = (net.evaluate(shifted(in, tan, h)) - net.evaluate(shifted(in, tan, -h))) / (2.0 * h);
    report.max_jvp_rel_err =
        std::max(report.max_jvp_rel_err, (jr.du - fd).norm() / std::max(jr.du.norm(), 1e-4));

    const JvpResult zero = net.jvp(in, FieldTangent::zeros_like(in));
    report.max_zero_tangent = std::max(report.max_zero_tangent, zero.du.cwiseAbs().maxCoeff());

    const Batch w = standard_normal(rng, cfg.dim, n);
    const ForwardCache cache = net.forward_cached(in);
    InputGradient ig;
    const GradBuffer grad = net.backward(cache, w, &ig);
    const double vjp = (ig.dz.array() * tan.dz.array()).sum() + ig.dr.dot(tan.dr) + ig.ds.dot(tan.ds) +
                       (ig.dx.array() * tan.dx.array()).sum() + ig.dt.dot(tan.dt);
    const double jvp = (w.array() * jr.du.array()).sum();
    report.max_vjp_rel_err = std::max(report.max_vjp_rel_err, rel_err(vjp, jvp));

    std::uniform_int_distribution<std::size_t> pick(0, net.num_params() - 1);
    for (int p = 0; p < params_per_net; ++p) {
      const std::size_t idx = pick(rng);
      const double saved = net.params()[idx];
      net.mutable_params()[idx] = saved + h;
      const double up = (w.array() * net.evaluate(in).array()).sum();
      net.mutable_params()[idx] = saved - h;
      const double down = (w.array() * net.evaluate(in).array()).sum();
      net.mutable_params()[idx] = saved;
      report.max_grad_rel_err = std::max(report.max_grad_rel_err, rel_err((up - down) / (2.0 * h), grad.values[idx]));
    }
  }
  report.passed = report.max_jvp_rel_err < tol && report.max_grad_rel_err < tol && report.max_vjp_rel_err < tol &&
                  report.max_zero_tangent == 0.0;
  return report;
}

}  // namespace stmd
