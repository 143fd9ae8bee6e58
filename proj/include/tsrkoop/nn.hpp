#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

namespace tsrkoop::nn {

/// Affine layer y = W x + b. W is out x in.
struct DenseLayer {
  Eigen::MatrixXd W;
  Eigen::VectorXd b;

  int in_dim() const { return static_cast<int>(W.cols()); }
  int out_dim() const { return static_cast<int>(W.rows()); }
  bool operator==(const DenseLayer& o) const {
    return W.rows() == o.W.rows() && W.cols() == o.W.cols() && b.size() == o.b.size() &&
           W == o.W && b == o.b;
  }
};

/// Dense feed-forward network: tanh on every hidden layer, identity output.
struct Mlp {
  std::vector<DenseLayer> layers;

  int in_dim() const { return layers.front().in_dim(); }
  int out_dim() const { return layers.back().out_dim(); }
  std::size_t parameter_count() const;
  bool all_finite() const;
  bool operator==(const Mlp&) const = default;
};

/// Layer inputs kept by forward() for the backward pass. `activations[i]` is
/// the input of layer i (batch column-wise); the last entry is the output.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> activations;

  const Eigen::MatrixXd& output() const { return activations.back(); }
};

/// Parameter gradients with the same shapes as the owning network.
struct Gradients {
  std::vector<DenseLayer> layers;
  Eigen::MatrixXd d_input;  ///< empty unless requested

  static Gradients zeros_like(const Mlp& net);
  Gradients& operator+=(const Gradients& other);
  Gradients& operator*=(double s);
};

/// Glorot-uniform weights with bound sqrt(6 / (fan_in + fan_out)), zero biases.
/// Throws ConfigError for fewer than two dimensions.
Mlp init_mlp(std::span<const int> dims, std::uint64_t seed);
Mlp init_mlp(std::initializer_list<int> dims, std::uint64_t seed);

/// Batched forward pass over the columns of `input`. Throws ShapeError.
ForwardCache forward(const Mlp& net, const Eigen::MatrixXd& input);

/// Output only, for a single input vector.
Eigen::VectorXd evaluate(const Mlp& net, const Eigen::VectorXd& input);

/// Reverse-mode gradients of a scalar loss whose gradient with respect to the
/// network output is `upstream` (out_dim x batch). Never mutates `net`.
Gradients backward(const Mlp& net, const ForwardCache& cache, const Eigen::MatrixXd& upstream,
                   bool want_input_grad = false);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  bool operator==(const AdamConfig&) const = default;
};

struct AdamMoments {
  Eigen::MatrixXd m;
  Eigen::MatrixXd v;
};

/// Bias-corrected Adam update of one parameter block. `t` is the 1-based step.
void adam_update(Eigen::Ref<Eigen::MatrixXd> param, const Eigen::Ref<const Eigen::MatrixXd>& grad,
                 AdamMoments& moments, const AdamConfig& cfg, long t);

struct AdamState {
  AdamConfig config;
  long t = 0;
  std::vector<AdamMoments> weight_moments;
  std::vector<AdamMoments> bias_moments;

  static AdamState for_network(const Mlp& net, const AdamConfig& cfg = {});
};

/// Increments state.t and applies one Adam update to every layer.
void adam_step(AdamState& state, Mlp& params, const Gradients& grads);

/// Zero-initialised moments matching a parameter block.
AdamMoments zero_moments(Eigen::Index rows, Eigen::Index cols);

}  // namespace tsrkoop::nn
