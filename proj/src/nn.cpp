#include "tsrkoop/nn.hpp"

#include <cmath>
#include <random>
#include <string>

#include "tsrkoop/errors.hpp"

namespace tsrkoop::nn {

namespace {

void check(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.W.size() + l.b.size());
  return n;
}

bool Mlp::all_finite() const {
  for (const auto& l : layers) {
    if (!l.W.allFinite() || !l.b.allFinite()) return false;
  }
  return true;
}

Gradients Gradients::zeros_like(const Mlp& net) {
  Gradients g;
  g.layers.reserve(net.layers.size());
  for (const auto& l : net.layers) {
    g.layers.push_back({Eigen::MatrixXd::Zero(l.W.rows(), l.W.cols()),
                        Eigen::VectorXd::Zero(l.b.size())});
  }
  return g;
}

Gradients& Gradients::operator+=(const Gradients& other) {
  check(layers.size() == other.layers.size(), "gradient layer count mismatch");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].W += other.layers[i].W;
    layers[i].b += other.layers[i].b;
  }
  return *this;
}

Gradients& Gradients::operator*=(double s) {
  for (auto& l : layers) {
    l.W *= s;
    l.b *= s;
  }
  return *this;
}

Mlp init_mlp(std::span<const int> dims, std::uint64_t seed) {
  if (dims.size() < 2) throw ConfigError("nn", "an MLP needs at least input and output dims");
  for (int d : dims) {
    if (d < 1) throw ConfigError("nn", "layer dimensions must be positive");
  }
  std::mt19937_64 rng(seed);
  Mlp net;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const int fan_in = dims[i];
    const int fan_out = dims[i + 1];
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    DenseLayer layer{Eigen::MatrixXd(fan_out, fan_in), Eigen::VectorXd::Zero(fan_out)};
    for (Eigen::Index c = 0; c < layer.W.cols(); ++c) {
      for (Eigen::Index r = 0; r < layer.W.rows(); ++r) {
        const double unit = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        layer.W(r, c) = bound * (2.0 * unit - 1.0);
      }
    }
    net.layers.push_back(std::move(layer));
  }
  return net;
}

Mlp init_mlp(std::initializer_list<int> dims, std::uint64_t seed) {
  return init_mlp(std::span<const int>(dims.begin(), dims.size()), seed);
}

ForwardCache forward(const Mlp& net, const Eigen::MatrixXd& input) {
  check(!net.layers.empty(), "forward on an empty network");
  check(input.rows() == net.in_dim(), "forward: input has " + std::to_string(input.rows()) +
                                          " rows, network expects " +
                                          std::to_string(net.in_dim()));
  ForwardCache cache;
  cache.activations.reserve(net.layers.size() + 1);
  cache.activations.push_back(input);
  const std::size_t last = net.layers.size() - 1;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto& layer = net.layers[i];
    check(layer.in_dim() == cache.activations.back().rows(), "forward: layer dims do not chain");
    Eigen::MatrixXd y = layer.W * cache.activations.back();
    y.colwise() += layer.b;
    if (i != last) y = y.array().tanh();
    cache.activations.push_back(std::move(y));
  }
  return cache;
}

Eigen::VectorXd evaluate(const Mlp& net, const Eigen::VectorXd& input) {
  return forward(net, input).output().col(0);
}

Gradients backward(const Mlp& net, const ForwardCache& cache, const Eigen::MatrixXd& upstream,
                   bool want_input_grad) {
  check(cache.activations.size() == net.layers.size() + 1, "backward: cache/network mismatch");
  check(upstream.rows() == net.out_dim() && upstream.cols() == cache.output().cols(),
        "backward: upstream gradient shape mismatch");
  Gradients g;
  g.layers.resize(net.layers.size());
  Eigen::MatrixXd delta = upstream;  // dL/d(pre-activation) of the current layer
  for (std::size_t i = net.layers.size(); i-- > 0;) {
    const auto& layer = net.layers[i];
    const Eigen::MatrixXd& in = cache.activations[i];
    g.layers[i].W.noalias() = delta * in.transpose();
    g.layers[i].b = delta.rowwise().sum();
    if (i == 0 && !want_input_grad) break;
    Eigen::MatrixXd d_in = layer.W.transpose() * delta;
    if (i == 0) {
      g.d_input = std::move(d_in);
    } else {
      // tanh'(a) = 1 - tanh(a)^2, and `in` is tanh of the previous pre-activation
      delta = d_in.array() * (1.0 - in.array().square());
    }
  }
  return g;
}

AdamMoments zero_moments(Eigen::Index rows, Eigen::Index cols) {
  return {Eigen::MatrixXd::Zero(rows, cols), Eigen::MatrixXd::Zero(rows, cols)};
}

void adam_update(Eigen::Ref<Eigen::MatrixXd> param, const Eigen::Ref<const Eigen::MatrixXd>& grad,
                 AdamMoments& mo, const AdamConfig& cfg, long t) {
  check(param.rows() == grad.rows() && param.cols() == grad.cols() &&
            mo.m.rows() == grad.rows() && mo.m.cols() == grad.cols(),
        "adam: parameter/gradient/moment shapes differ");
  mo.m = cfg.beta1 * mo.m + (1.0 - cfg.beta1) * grad;
  mo.v = cfg.beta2 * mo.v + (1.0 - cfg.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  param.array() -= cfg.lr * (mo.m.array() / c1) / ((mo.v.array() / c2).sqrt() + cfg.eps);
}

AdamState AdamState::for_network(const Mlp& net, const AdamConfig& cfg) {
  AdamState s;
  s.config = cfg;
  for (const auto& l : net.layers) {
    s.weight_moments.push_back(zero_moments(l.W.rows(), l.W.cols()));
    s.bias_moments.push_back(zero_moments(l.b.size(), 1));
  }
  return s;
}

void adam_step(AdamState& state, Mlp& params, const Gradients& grads) {
  check(params.layers.size() == grads.layers.size() &&
            params.layers.size() == state.weight_moments.size(),
        "adam_step: layer counts differ");
  ++state.t;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    adam_update(params.layers[i].W, grads.layers[i].W, state.weight_moments[i], state.config,
                state.t);
    adam_update(params.layers[i].b, grads.layers[i].b, state.bias_moments[i], state.config,
                state.t);
  }
}

}  // namespace tsrkoop::nn
