#include <cmath>
#include <string>

#include "tsrkoop/errors.hpp"
#include "tsrkoop/koopman.hpp"
#include "tsrkoop/linalg.hpp"

namespace tsrkoop {

namespace {

double softplus(double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); }

bool same_matrix(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("koopman", "gamma must lie in (0, 1)");
  if (alpha < 0.0 || beta < 0.0 || eta < 0.0) {
    throw ConfigError("koopman", "loss weights alpha, beta, eta must be >= 0");
  }
  if (latent_dim < 1) throw ConfigError("koopman", "latent dimension K must be >= 1");
  if (hidden_width < 1 || hidden_layers < 0) throw ConfigError("koopman", "invalid network size");
  if (epochs < 0) throw ConfigError("koopman", "epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("koopman", "batch size must be >= 1");
  if (!(adam.lr > 0.0) || !(final_lr > 0.0)) {
    throw ConfigError("koopman", "learning rates must be positive");
  }
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("koopman", "validation fraction must lie in [0, 1)");
  }
  if (!(gate_floor > 0.0)) throw ConfigError("koopman", "gate floor must be positive");
  if (!(u_max > 0.0)) throw ConfigError("koopman", "u_max must be positive");
  if (!(hinge_margin > 0.0)) throw ConfigError("koopman", "hinge margin must be positive");
}

bool KoopmanModel::operator==(const KoopmanModel& o) const {
  return phi == o.phi && gate_net == o.gate_net && same_matrix(A, o.A) && same_matrix(B, o.B) &&
         input_offset == o.input_offset && input_scale == o.input_scale &&
         control_offset == o.control_offset && gate_floor == o.gate_floor && u_max == o.u_max &&
         config == o.config;
}

Eigen::MatrixXd KoopmanModel::scale_inputs(const Eigen::MatrixXd& states) const {
  return (states.colwise() - input_offset).array().colwise() / input_scale.array();
}

void KoopmanModel::check_shapes() const {
  const int N = lifted_dim();
  if (A.rows() != A.cols()) throw ShapeError("koopman", "A must be square");
  if (B.rows() != N || B.cols() != kControlDim) throw ShapeError("koopman", "B must be N x 1");
  if (phi.layers.empty() || phi.in_dim() != kStateDim || phi.out_dim() != N - kStateDim) {
    throw ShapeError("koopman", "phi must map R^4 to R^K with K = N - 4");
  }
  if (gate_net.layers.empty() || gate_net.in_dim() != kStateDim || gate_net.out_dim() != 1) {
    throw ShapeError("koopman", "gate network must map R^4 to R");
  }
}

KoopmanModel init_koopman(const TrainConfig& cfg, const SampleConfig& sampling) {
  cfg.validate();
  std::vector<int> phi_dims{kStateDim};
  std::vector<int> gate_dims{kStateDim};
  for (int i = 0; i < cfg.hidden_layers; ++i) {
    phi_dims.push_back(cfg.hidden_width);
    gate_dims.push_back(cfg.hidden_width);
  }
  phi_dims.push_back(cfg.latent_dim);
  gate_dims.push_back(1);

  KoopmanModel model;
  model.phi = nn::init_mlp(phi_dims, cfg.seed);
  model.gate_net = nn::init_mlp(gate_dims, cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  const int N = cfg.latent_dim + kStateDim;
  model.A = Eigen::MatrixXd::Identity(N, N);
  model.B = Eigen::MatrixXd::Zero(N, kControlDim);
  for (int i = 0; i < kStateDim; ++i) {
    const auto& r = sampling.state_ranges[i];
    model.input_offset(i) = r.mid();
    model.input_scale(i) = r.hi > r.lo ? 0.5 * (r.hi - r.lo) : 1.0;
  }
  model.control_offset = sampling.control_range.mid();
  model.gate_floor = cfg.gate_floor;
  model.u_max = cfg.u_max;
  model.config = cfg;
  return model;
}

Eigen::MatrixXd selector(int n, int lifted_dim) {
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(n, lifted_dim);
  C.leftCols(n).setIdentity();
  return C;
}

Eigen::MatrixXd lift_batch(const KoopmanModel& model, const Eigen::MatrixXd& states) {
  if (states.rows() != kStateDim) throw ShapeError("koopman", "lift expects 4-row states");
  const auto cache = nn::forward(model.phi, model.scale_inputs(states));
  Eigen::MatrixXd Z(model.lifted_dim(), states.cols());
  Z.topRows(kStateDim) = states;
  Z.bottomRows(model.latent_dim()) = cache.output();
  return Z;
}

Eigen::VectorXd lift(const KoopmanModel& model, const TsrState& x) {
  return lift_batch(model, x).col(0);
}

double gate_value(const KoopmanModel& model, const TsrState& x) {
  const Eigen::MatrixXd s = model.scale_inputs(x);
  return softplus(nn::evaluate(model.gate_net, s.col(0))(0)) + model.gate_floor;
}

double embed_control(const KoopmanModel& model, const TsrState& x, double u) {
  return gate_value(model, x) * (u - model.control_offset);
}

double recover_control(const KoopmanModel& model, const TsrState& x, double u_hat) {
  const double g = gate_value(model, x);
  if (!(g >= model.gate_floor)) {
    throw GateError("control gate " + std::to_string(g) + " is below the floor " +
                    std::to_string(model.gate_floor));
  }
  return std::clamp(model.control_offset + u_hat / g, 0.0, model.u_max);
}

Eigen::MatrixXd rollout_lifted(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                               const Eigen::VectorXd& z0, std::span<const double> u_hat) {
  if (A.rows() != A.cols() || A.rows() != z0.size() || B.rows() != A.rows() || B.cols() != 1) {
    throw ShapeError("koopman", "rollout: inconsistent A, B, z0 shapes");
  }
  const auto len = static_cast<Eigen::Index>(u_hat.size());
  Eigen::MatrixXd Z(A.rows(), len + 1);
  Z.col(0) = z0;
  for (Eigen::Index j = 0; j < len; ++j) {
    Z.col(j + 1).noalias() = A * Z.col(j);
    Z.col(j + 1) += B.col(0) * u_hat[static_cast<std::size_t>(j)];
  }
  return Z;
}

Eigen::MatrixXd rollout(const KoopmanModel& model, const TsrState& x0,
                        std::span<const double> u_hat) {
  return rollout_lifted(model.A, model.B, lift(model, x0), u_hat);
}

std::vector<double> embedded_controls(const KoopmanModel& model, const Trajectory& traj) {
  const int m = traj.steps();
  std::vector<double> u_hat;
  if (m < 2) return u_hat;
  const Eigen::MatrixXd s = model.scale_inputs(traj.states.leftCols(m - 1));
  const Eigen::MatrixXd o = nn::forward(model.gate_net, s).output();
  u_hat.resize(static_cast<std::size_t>(m - 1));
  for (int j = 0; j + 1 < m; ++j) {
    u_hat[static_cast<std::size_t>(j)] = (softplus(o(0, j)) + model.gate_floor) *
                                        (traj.control(j) - model.control_offset);
  }
  return u_hat;
}

double reconstruction_loss(const Eigen::MatrixXd& states, const Eigen::MatrixXd& predicted) {
  const Eigen::Index m = states.cols();
  if (predicted.cols() != m || predicted.rows() < states.rows()) {
    throw ShapeError("koopman", "reconstruction_loss: shape mismatch");
  }
  if (m < 2) return 0.0;
  const auto n = states.rows();
  const double sum =
      (states.rightCols(m - 1) - predicted.topRows(n).rightCols(m - 1)).colwise().squaredNorm().sum();
  return sum / static_cast<double>(m - 1);
}

double prediction_loss(const Eigen::MatrixXd& lifted, const Eigen::MatrixXd& predicted,
                       double gamma) {
  if (lifted.rows() != predicted.rows() || lifted.cols() != predicted.cols()) {
    throw ShapeError("koopman", "prediction_loss: shape mismatch");
  }
  const auto N = static_cast<double>(lifted.rows());
  double sum = 0.0;
  double weight = 1.0;
  for (Eigen::Index j = 1; j < lifted.cols(); ++j) {
    weight *= gamma;
    sum += weight * (lifted.col(j) - predicted.col(j)).squaredNorm() / N;
  }
  return sum;
}

double loss_reconstruction(const KoopmanModel& model, const Trajectory& traj) {
  const auto u_hat = embedded_controls(model, traj);
  return reconstruction_loss(traj.states, rollout(model, traj.state(0), u_hat));
}

double loss_prediction(const KoopmanModel& model, const Trajectory& traj, double gamma) {
  const auto u_hat = embedded_controls(model, traj);
  return prediction_loss(lift_batch(model, traj.states), rollout(model, traj.state(0), u_hat),
                         gamma);
}

double literal_reconstruction_residual(const KoopmanModel& model, const Trajectory& traj) {
  const Eigen::MatrixXd C = selector(kStateDim, model.lifted_dim());
  return (traj.states - C * lift_batch(model, traj.states)).colwise().norm().sum();
}

ControllabilityLoss loss_controllability(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                         double hinge_margin) {
  if (B.cols() != 1) throw ShapeError("koopman", "controllability loss supports one input");
  const auto pen = linalg::controllability_penalty(A, B.col(0), hinge_margin, false);
  ControllabilityLoss out;
  out.rank = pen.rank;
  out.exact = std::abs(static_cast<double>(A.rows() - pen.rank));
  out.surrogate = pen.value;
  return out;
}

}  // namespace tsrkoop
