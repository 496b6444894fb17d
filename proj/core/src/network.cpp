#include "stmd/network.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace stmd {
namespace {

Eigen::ArrayXXd sigmoid(const Eigen::MatrixXd& h) {
  return (1.0 + (-h.array()).exp()).inverse();
}

// silu(h) = h sigmoid(h); silu'(h) = sigmoid(h) (1 + h (1 - sigmoid(h)))
Eigen::MatrixXd silu(const Eigen::MatrixXd& h) { return (h.array() * sigmoid(h)).matrix(); }

Eigen::MatrixXd silu_grad(const Eigen::MatrixXd& h) {
  const Eigen::ArrayXXd sg = sigmoid(h);
  return (sg * (1.0 + h.array() * (1.0 - sg))).matrix();
}

FieldInput shifted(const FieldInput& in, const FieldTangent& tan, double h) {
  FieldInput out = in;
  out.z += h * tan.dz;
  out.r += h * tan.dr;
  out.s += h * tan.ds;
  out.x += h * tan.dx;
  out.t += h * tan.dt;
  return out;
}

}  // namespace

void FieldInput::check(Eigen::Index dim) const {
  const Eigen::Index n = z.cols();
  std::ostringstream msg;
  if (z.rows() != dim || x.rows() != dim || x.cols() != n || r.size() != n || s.size() != n ||
      t.size() != n) {
    msg << "field input shape mismatch: expected dim " << dim << " and batch " << n
        << ", got z " << z.rows() << "x" << z.cols() << ", x " << x.rows() << "x" << x.cols()
        << ", r/s/t " << r.size() << "/" << s.size() << "/" << t.size();
    throw ShapeError(msg.str());
  }
}

FieldInput FieldInput::unconditional(Batch z, Vec r, Vec s) {
  const Eigen::Index d = z.rows();
  const Eigen::Index n = z.cols();
  return FieldInput{std::move(z), std::move(r), std::move(s), Batch::Zero(d, n), Vec::Zero(n)};
}

FieldInput FieldInput::conditional(Batch z, Vec r, Vec s, Batch x, Vec t) {
  return FieldInput{std::move(z), std::move(r), std::move(s), std::move(x), std::move(t)};
}

FieldTangent FieldTangent::along_s(Batch dz) {
  const Eigen::Index d = dz.rows();
  const Eigen::Index n = dz.cols();
  return FieldTangent{std::move(dz), Vec::Zero(n), Vec::Ones(n), Batch::Zero(d, n), Vec::Zero(n)};
}

FieldTangent FieldTangent::zeros_like(const FieldInput& in) {
  const Eigen::Index n = in.size();
  return FieldTangent{Batch::Zero(in.z.rows(), n), Vec::Zero(n), Vec::Zero(n),
                      Batch::Zero(in.x.rows(), n), Vec::Zero(n)};
}

JvpResult ConditionalField::jvp(const FieldInput& in, const FieldTangent& tangent) const {
  constexpr double h = 1e-5;
  JvpResult out;
  out.u = evaluate(in);
  const Batch plus = evaluate(shifted(in, tangent, h));
  const Batch minus = evaluate(shifted(in, tangent, -h));
  out.du = (plus - minus) / (2.0 * h);
  return out;
}

void NetConfig::validate() const {
  if (dim <= 0) throw ConfigError("network: dim must be positive");
  if (embed_dim <= 0 || embed_dim % 2 != 0) {
    throw ConfigError("network: embed_dim must be a positive even integer");
  }
  for (int w : hidden) {
    if (w <= 0) throw ConfigError("network: hidden widths must be positive");
  }
  if (!(max_frequency >= 1.0) || !std::isfinite(max_frequency)) {
    throw ConfigError("network: max_frequency must be >= 1");
  }
}

std::vector<int> NetConfig::layer_widths() const {
  std::vector<int> widths;
  widths.push_back(input_width());
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(dim);
  return widths;
}

double GradBuffer::dot(const GradBuffer& other) const {
  require_shape(values.size() == other.values.size(), "GradBuffer size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) acc += values[i] * other.values[i];
  return acc;
}

double GradBuffer::norm() const { return std::sqrt(dot(*this)); }

GradBuffer& GradBuffer::operator+=(const GradBuffer& other) {
  require_shape(values.size() == other.values.size(), "GradBuffer size mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) values[i] += other.values[i];
  return *this;
}

GradBuffer& GradBuffer::operator*=(double scale) {
  for (double& v : values) v *= scale;
  return *this;
}

void MlpNet::build_layout() {
  config_.validate();
  const int half = config_.embed_dim / 2;
  frequencies_.resize(half);
  for (int k = 0; k < half; ++k) {
    const double frac = half == 1 ? 0.0 : static_cast<double>(k) / (half - 1);
    frequencies_[k] = std::pow(config_.max_frequency, frac);
  }
  widths_ = config_.layer_widths();
  const std::vector<int>& widths = widths_;
  weight_offset_.clear();
  bias_offset_.clear();
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    weight_offset_.push_back(offset);
    offset += static_cast<std::size_t>(widths[l]) * widths[l + 1];
    bias_offset_.push_back(offset);
    offset += widths[l + 1];
  }
  params_.resize(offset);
}

MlpNet MlpNet::init(const NetConfig& config, std::uint64_t seed) {
  MlpNet net;
  net.config_ = config;
  net.build_layout();
  Rng rng(seed);
  const std::vector<int> widths = config.layer_widths();
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(widths[l]));
    std::uniform_real_distribution<double> unif(-bound, bound);
    auto w = net.weight(l);
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = unif(rng);
    }
    auto b = net.bias(l);
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = unif(rng);
  }
  return net;
}

MlpNet MlpNet::from_params(const NetConfig& config, std::vector<double> params) {
  MlpNet net;
  net.config_ = config;
  net.build_layout();
  if (params.size() != net.params_.size()) {
    std::ostringstream msg;
    msg << "parameter count " << params.size() << " does not match network layout "
        << net.params_.size();
    throw ShapeError(msg.str());
  }
  net.params_ = std::move(params);
  return net;
}

Eigen::Map<const Eigen::MatrixXd> MlpNet::weight(std::size_t layer) const {
  return {params_.data() + weight_offset_.at(layer), widths_[layer + 1], widths_[layer]};
}

Eigen::Map<const Eigen::VectorXd> MlpNet::bias(std::size_t layer) const {
  return {params_.data() + bias_offset_.at(layer), widths_[layer + 1]};
}

Eigen::Map<Eigen::MatrixXd> MlpNet::weight(std::size_t layer) {
  return {params_.data() + weight_offset_.at(layer), widths_[layer + 1], widths_[layer]};
}

Eigen::Map<Eigen::VectorXd> MlpNet::bias(std::size_t layer) {
  return {params_.data() + bias_offset_.at(layer), widths_[layer + 1]};
}

Eigen::MatrixXd MlpNet::features(const FieldInput& in) const {
  in.check(config_.dim);
  const Eigen::Index d = config_.dim;
  const Eigen::Index n = in.size();
  const Eigen::Index half = static_cast<Eigen::Index>(frequencies_.size());
  Eigen::MatrixXd f(config_.input_width(), n);
  f.topRows(d) = in.z;
  f.middleRows(d, d) = in.x;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double scalars[3] = {in.s(j) - in.r(j), in.s(j), in.t(j)};
    for (int e = 0; e < 3; ++e) {
      const Eigen::Index base = 2 * d + e * config_.embed_dim;
      for (Eigen::Index k = 0; k < half; ++k) {
        const double arg = frequencies_[k] * scalars[e];
        f(base + k, j) = std::sin(arg);
        f(base + half + k, j) = std::cos(arg);
      }
    }
  }
  return f;
}

Eigen::MatrixXd MlpNet::feature_tangent(const FieldInput& in, const FieldTangent& tan) const {
  const Eigen::Index d = config_.dim;
  const Eigen::Index n = in.size();
  require_shape(tan.dz.rows() == d && tan.dz.cols() == n && tan.dx.rows() == d &&
                    tan.dx.cols() == n && tan.dr.size() == n && tan.ds.size() == n &&
                    tan.dt.size() == n,
                "jvp: tangent shape does not match input");
  const Eigen::Index half = static_cast<Eigen::Index>(frequencies_.size());
  Eigen::MatrixXd df(config_.input_width(), n);
  df.topRows(d) = tan.dz;
  df.middleRows(d, d) = tan.dx;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double scalars[3] = {in.s(j) - in.r(j), in.s(j), in.t(j)};
    const double dscalars[3] = {tan.ds(j) - tan.dr(j), tan.ds(j), tan.dt(j)};
    for (int e = 0; e < 3; ++e) {
      const Eigen::Index base = 2 * d + e * config_.embed_dim;
      for (Eigen::Index k = 0; k < half; ++k) {
        const double w = frequencies_[k];
        const double arg = w * scalars[e];
        df(base + k, j) = w * std::cos(arg) * dscalars[e];
        df(base + half + k, j) = -w * std::sin(arg) * dscalars[e];
      }
    }
  }
  return df;
}

ForwardCache MlpNet::forward_cached(const FieldInput& in) const {
  ForwardCache cache;
  cache.input = in;
  cache.activations.reserve(num_layers() + 1);
  cache.preacts.reserve(num_layers());
  cache.activations.push_back(features(in));
  for (std::size_t l = 0; l < num_layers(); ++l) {
    Eigen::MatrixXd h;
    h.noalias() = weight(l) * cache.activations.back();
    h.colwise() += bias(l);
    const bool hidden = l + 1 < num_layers();
    cache.activations.push_back(hidden ? silu(h) : h);
    cache.preacts.push_back(std::move(h));
  }
  return cache;
}

Batch MlpNet::evaluate(const FieldInput& in) const {
  ForwardCache cache = forward_cached(in);
  return std::move(cache.activations.back());
}

JvpResult MlpNet::jvp_cached(const FieldInput& in, const FieldTangent& tangent,
                             ForwardCache& cache) const {
  cache = forward_cached(in);
  Eigen::MatrixXd da = feature_tangent(in, tangent);
  for (std::size_t l = 0; l < num_layers(); ++l) {
    Eigen::MatrixXd dh;
    dh.noalias() = weight(l) * da;
    const bool hidden = l + 1 < num_layers();
    da = hidden ? Eigen::MatrixXd(silu_grad(cache.preacts[l]).cwiseProduct(dh)) : dh;
  }
  return JvpResult{cache.activations.back(), std::move(da)};
}

JvpResult MlpNet::jvp(const FieldInput& in, const FieldTangent& tangent) const {
  ForwardCache cache;
  return jvp_cached(in, tangent, cache);
}

GradBuffer MlpNet::backward(const FieldInput& in, const Batch& upstream) const {
  return backward(forward_cached(in), upstream);
}

GradBuffer MlpNet::backward(const ForwardCache& cache, const Batch& upstream,
                            InputGradient* input_grad) const {
  const Eigen::Index n = cache.input.size();
  require_shape(upstream.rows() == config_.dim && upstream.cols() == n,
                "backward: upstream must be shaped like the output");
  GradBuffer grad = zero_grad();
  Eigen::MatrixXd delta = upstream;
  for (std::size_t step = 0; step < num_layers(); ++step) {
    const std::size_t l = num_layers() - 1 - step;
    const bool hidden = l + 1 < num_layers();
    if (hidden) delta = delta.cwiseProduct(silu_grad(cache.preacts[l]));
    const auto w = weight(l);
    Eigen::Map<Eigen::MatrixXd> gw(grad.values.data() + weight_offset_[l], w.rows(), w.cols());
    Eigen::Map<Eigen::VectorXd> gb(grad.values.data() + bias_offset_[l], w.rows());
    gw.noalias() = delta * cache.activations[l].transpose();
    gb = delta.rowwise().sum();
    if (l > 0 || input_grad != nullptr) {
      Eigen::MatrixXd prev;
      prev.noalias() = w.transpose() * delta;
      delta = std::move(prev);
    }
  }
  if (input_grad != nullptr) {
    const Eigen::Index d = config_.dim;
    const Eigen::Index half = static_cast<Eigen::Index>(frequencies_.size());
    const FieldInput& in = cache.input;
    input_grad->dz = delta.topRows(d);
    input_grad->dx = delta.middleRows(d, d);
    input_grad->dr = Vec::Zero(n);
    input_grad->ds = Vec::Zero(n);
    input_grad->dt = Vec::Zero(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const double scalars[3] = {in.s(j) - in.r(j), in.s(j), in.t(j)};
      double g[3] = {0.0, 0.0, 0.0};
      for (int e = 0; e < 3; ++e) {
        const Eigen::Index base = 2 * d + e * config_.embed_dim;
        for (Eigen::Index k = 0; k < half; ++k) {
          const double w = frequencies_[k];
          const double arg = w * scalars[e];
          g[e] += delta(base + k, j) * w * std::cos(arg) - delta(base + half + k, j) * w * std::sin(arg);
        }
      }
      input_grad->dr(j) = -g[0];
      input_grad->ds(j) = g[0] + g[1];
      input_grad->dt(j) = g[2];
    }
  }
  return grad;
}

InputGradient MlpNet::input_gradient(const FieldInput& in, const Batch& upstream) const {
  InputGradient out;
  backward(forward_cached(in), upstream, &out);
  return out;
}

}  // namespace stmd
