#pragma once

#include "stmd/common.hpp"

#include <atomic>
#include <cstddef>
#include <vector>

namespace stmd {

/// Inputs of a conditional mean-velocity field u(z, r, s, x, t).
///
/// Unconditional models receive x = 0 and t = 0.
struct FieldInput {
  Batch z;  // flow variable, d x n
  Vec r;
  Vec s;
  Batch x;  // conditioning state x_t, d x n
  Vec t;

  Eigen::Index size() const { return z.cols(); }
  /// Throws ShapeError unless every member agrees with dimension `dim` and batch size.
  void check(Eigen::Index dim) const;

  static FieldInput unconditional(Batch z, Vec r, Vec s);
  static FieldInput conditional(Batch z, Vec r, Vec s, Batch x, Vec t);
};

/// Tangent directions, shaped like FieldInput.
struct FieldTangent {
  Batch dz;
  Vec dr;
  Vec ds;
  Batch dx;
  Vec dt;

  /// (dz, 0, 1, 0, 0): the total derivative along s used by mean-flow targets.
  static FieldTangent along_s(Batch dz);
  static FieldTangent zeros_like(const FieldInput& in);
};

struct JvpResult {
  Batch u;
  Batch du;
};

/// Anything that can play the role of u(z, r, s, x, t).
class ConditionalField {
 public:
  virtual ~ConditionalField() = default;
  virtual Eigen::Index dim() const = 0;
  virtual Batch evaluate(const FieldInput& in) const = 0;
  /// Default: central differences along the tangent. MlpNet overrides with forward mode.
  virtual JvpResult jvp(const FieldInput& in, const FieldTangent& tangent) const;
};

/// Counts evaluate() calls (one call = one network evaluation of a whole batch).
class CountingField : public ConditionalField {
 public:
  explicit CountingField(const ConditionalField& inner) : inner_(inner) {}
  Eigen::Index dim() const override { return inner_.dim(); }
  Batch evaluate(const FieldInput& in) const override {
    ++count_;
    return inner_.evaluate(in);
  }
  JvpResult jvp(const FieldInput& in, const FieldTangent& tangent) const override {
    ++count_;
    return inner_.jvp(in, tangent);
  }
  std::size_t count() const { return count_.load(); }

 private:
  const ConditionalField& inner_;
  mutable std::atomic<std::size_t> count_{0};
};

struct NetConfig {
  int dim = 2;
  std::vector<int> hidden{128, 128, 128};
  int embed_dim = 32;         // per embedded scalar; must be even
  double max_frequency = 10;  // sinusoidal frequencies are geometric in [1, max_frequency]

  void validate() const;
  int input_width() const { return 2 * dim + 3 * embed_dim; }
  /// input -> hidden... -> output
  std::vector<int> layer_widths() const;
};

/// Flat parameter-shaped buffer (same layout as MlpNet::params()).
struct GradBuffer {
  std::vector<double> values;

  double dot(const GradBuffer& other) const;
  double norm() const;
  GradBuffer& operator+=(const GradBuffer& other);
  GradBuffer& operator*=(double scale);
};

/// Gradients with respect to the field inputs (for VJP consistency checks).
struct InputGradient {
  Batch dz;
  Vec dr;
  Vec ds;
  Batch dx;
  Vec dt;
};

/// Intermediate values of one batched forward pass, reused by backward().
struct ForwardCache {
  std::vector<Eigen::MatrixXd> activations;  // a_0 = features, ..., a_L = output
  std::vector<Eigen::MatrixXd> preacts;      // h_l = W_l a_{l-1} + b_l for l = 1..L
  FieldInput input;
};

/// Fully connected network with SiLU hidden activations and sinusoidal embeddings of
/// (s - r, s, t). Features are concat(z, x, embed(s - r), embed(s), embed(t)).
class MlpNet : public ConditionalField {
 public:
  MlpNet() = default;
  /// Scaled-uniform fan-in initialization, deterministic in `seed`.
  static MlpNet init(const NetConfig& config, std::uint64_t seed);
  /// Wraps an existing flat parameter vector; throws ShapeError on size mismatch.
  static MlpNet from_params(const NetConfig& config, std::vector<double> params);

  const NetConfig& config() const { return config_; }
  Eigen::Index dim() const override { return config_.dim; }
  std::size_t num_layers() const { return config_.hidden.size() + 1; }
  std::size_t num_params() const { return params_.size(); }

  const std::vector<double>& params() const { return params_; }
  std::vector<double>& mutable_params() { return params_; }

  Eigen::Map<const Eigen::MatrixXd> weight(std::size_t layer) const;
  Eigen::Map<const Eigen::VectorXd> bias(std::size_t layer) const;
  Eigen::Map<Eigen::MatrixXd> weight(std::size_t layer);
  Eigen::Map<Eigen::VectorXd> bias(std::size_t layer);

  Batch evaluate(const FieldInput& in) const override;
  JvpResult jvp(const FieldInput& in, const FieldTangent& tangent) const override;

  ForwardCache forward_cached(const FieldInput& in) const;
  /// Forward pass plus forward-mode tangent propagation; the cache serves backward().
  JvpResult jvp_cached(const FieldInput& in, const FieldTangent& tangent,
                       ForwardCache& cache) const;

  /// Reverse-mode gradient of <upstream, u> w.r.t. all parameters.
  GradBuffer backward(const FieldInput& in, const Batch& upstream) const;
  GradBuffer backward(const ForwardCache& cache, const Batch& upstream,
                      InputGradient* input_grad = nullptr) const;
  /// Reverse-mode gradient of <upstream, u> w.r.t. the inputs.
  InputGradient input_gradient(const FieldInput& in, const Batch& upstream) const;

  GradBuffer zero_grad() const { return GradBuffer{std::vector<double>(params_.size(), 0.0)}; }

 private:
  Eigen::MatrixXd features(const FieldInput& in) const;
  Eigen::MatrixXd feature_tangent(const FieldInput& in, const FieldTangent& tangent) const;

  NetConfig config_;
  std::vector<int> widths_;
  std::vector<double> frequencies_;
  std::vector<std::size_t> weight_offset_;
  std::vector<std::size_t> bias_offset_;
  std::vector<double> params_;

  void build_layout();
};

}  // namespace stmd
