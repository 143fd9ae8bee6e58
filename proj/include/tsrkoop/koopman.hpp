#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tsrkoop/dynamics.hpp"
#include "tsrkoop/nn.hpp"
#include "tsrkoop/sampler.hpp"

namespace tsrkoop {

/// Hyperparameters of the learned lifted model and its training loop.
struct TrainConfig {
  // loss weights and prediction decay
  double alpha = 0.5;
  double beta = 1.0;
  double eta = 0.1;
  double gamma = 1.0 - 1e-3;

  // network sizing
  int latent_dim = 36;  ///< K, learned observables
  int hidden_width = 128;
  int hidden_layers = 4;

  // optimisation
  int epochs = 150;
  int batch_size = 256;
  nn::AdamConfig adam{};
  double final_lr = 1e-5;  ///< cosine schedule end point; equal to adam.lr for a constant rate
  double validation_fraction = 0.1;
  std::uint64_t seed = 0;
  int workers = 1;

  // control embedding and controllability surrogate
  double gate_floor = 1e-3;
  double u_max = 5.0;
  double hinge_margin = 1e-4;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// Learned lifted linear model z' = A z + B u_hat with
///   z     = [x; phi(s(x))]
///   u_hat = gate(x) * (u - u_c),   gate(x) = softplus(gate_net(s(x))) + gate_floor
/// where s(x) is a fixed affine input scaling and u_c the centre of the
/// excitation range. Centring keeps the gated input zero-mean over the data,
/// so gate(x) cannot stand in for state-dependent drift.
struct KoopmanModel {
  nn::Mlp phi;
  nn::Mlp gate_net;
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::Vector4d input_offset = Eigen::Vector4d::Zero();
  Eigen::Vector4d input_scale = Eigen::Vector4d::Ones();
  double control_offset = 0.0;  ///< u_c
  double gate_floor = 1e-3;
  double u_max = 5.0;
  TrainConfig config{};

  int state_dim() const { return kStateDim; }
  int latent_dim() const { return static_cast<int>(A.rows()) - kStateDim; }
  int lifted_dim() const { return static_cast<int>(A.rows()); }

  Eigen::MatrixXd scale_inputs(const Eigen::MatrixXd& states) const;
  void check_shapes() const;
  bool operator==(const KoopmanModel& other) const;
};

/// Fresh model: Glorot networks, A = I, B = 0, inputs scaled and the control
/// centred by the sampling ranges of `sampling`.
KoopmanModel init_koopman(const TrainConfig& cfg, const SampleConfig& sampling = {});

/// The n x N selector [I_n 0] that reads the physical state out of z.
Eigen::MatrixXd selector(int n, int lifted_dim);

Eigen::VectorXd lift(const KoopmanModel& model, const TsrState& x);
/// Column-wise lift of a 4 x M state matrix.
Eigen::MatrixXd lift_batch(const KoopmanModel& model, const Eigen::MatrixXd& states);

double gate_value(const KoopmanModel& model, const TsrState& x);
double embed_control(const KoopmanModel& model, const TsrState& x, double u);
/// u = u_hat / gate(x), clamped to [0, u_max]. Throws GateError if the gate
/// is below the floor.
double recover_control(const KoopmanModel& model, const TsrState& x, double u_hat);

/// Linear recursion z_{j+1} = A z_j + B u_hat_j from z0; returns N x (len + 1).
Eigen::MatrixXd rollout_lifted(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                               const Eigen::VectorXd& z0, std::span<const double> u_hat);
Eigen::MatrixXd rollout(const KoopmanModel& model, const TsrState& x0,
                        std::span<const double> u_hat);

/// Embedded controls gate(x_j) * u_j for j < m - 1 of a recorded trajectory.
std::vector<double> embedded_controls(const KoopmanModel& model, const Trajectory& traj);

// --- losses -------------------------------------------------------------

/// Mean over predicted steps k >= 1 of |x_k - C zhat_k|^2; 0 for one column.
double reconstruction_loss(const Eigen::MatrixXd& states, const Eigen::MatrixXd& predicted);
/// sum_{j>=1} gamma^j * mean((Z_j - Zhat_j)^2) over the lifted columns.
double prediction_loss(const Eigen::MatrixXd& lifted, const Eigen::MatrixXd& predicted,
                       double gamma);

double loss_reconstruction(const KoopmanModel& model, const Trajectory& traj);
double loss_prediction(const KoopmanModel& model, const Trajectory& traj, double gamma);
/// |x_k - C psi_x(x_k)| summed over a trajectory; zero by construction.
double literal_reconstruction_residual(const KoopmanModel& model, const Trajectory& traj);

struct ControllabilityLoss {
  int rank = 0;
  double exact = 0.0;      ///< |N - rank|
  double surrogate = 0.0;  ///< hinge on the staircase entries
};
ControllabilityLoss loss_controllability(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                         double hinge_margin = 1e-4);

struct LossBreakdown {
  double total = 0.0;
  double reconstruction = 0.0;  ///< batch mean of L1
  double prediction = 0.0;      ///< batch mean of L2
  double controllability_exact = 0.0;
  double controllability_surrogate = 0.0;
};

struct ModelGradients {
  nn::Gradients phi;
  nn::Gradients gate_net;
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  /// The eta-weighted controllability-surrogate share of A and B (already
  /// included in them). The hinge gradient scales like 1/margin, so the
  /// optimiser keeps separate Adam moments for it.
  Eigen::MatrixXd surrogate_A;
  Eigen::MatrixXd surrogate_B;

  static ModelGradients zeros_like(const KoopmanModel& model);
  ModelGradients& operator+=(const ModelGradients& other);
};

/// alpha * mean(L1) + beta * mean(L2) + eta * surrogate(L3) over `batch`.
LossBreakdown total_loss(const KoopmanModel& model, std::span<const Trajectory> batch,
                         const TrainConfig& cfg);

/// Loss and reverse-mode gradient over a batch. Trajectories are processed in
/// fixed-size chunks on up to `workers` threads and the chunk partials are
/// summed in chunk order, so the result does not depend on `workers`.
LossBreakdown loss_and_gradient(const KoopmanModel& model, std::span<const Trajectory* const> batch,
                                const TrainConfig& cfg, ModelGradients& grad, int workers = 1);

/// Single-pass reference for loss_and_gradient (whole batch at once).
LossBreakdown loss_and_gradient_serial(const KoopmanModel& model,
                                       std::span<const Trajectory* const> batch,
                                       const TrainConfig& cfg, ModelGradients& grad);

// --- training -----------------------------------------------------------

struct EpochRecord {
  int epoch = 0;
  double learning_rate = 0.0;
  LossBreakdown train;
  LossBreakdown validation;
  double validation_error = 0.0;  ///< per-trajectory mean state MSE over the horizon
};

struct TrainingHistory {
  std::vector<EpochRecord> epochs;
};

struct TrainResult {
  KoopmanModel model;
  TrainingHistory history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Fits phi, gate_net, A and B by mini-batch Adam on the training split of
/// `dataset`. Throws DivergenceError if the loss becomes non-finite.
TrainResult train(const Dataset& dataset, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

void write_history_csv(const TrainingHistory& history, const std::string& path);

// --- persistence --------------------------------------------------------

/// Extra matrix stored alongside a model (e.g. the Riccati solution "P" and
/// feedback gain "K_lqr").
struct NamedMatrix {
  std::string name;
  Eigen::MatrixXd value;
};

/// KPKM1 container: text header (method tag, dims, training config, layer
/// shapes, attachment shapes) then little-endian binary64 payload.
void save_model(const KoopmanModel& model, const std::string& path,
                std::span<const NamedMatrix> attachments = {});
KoopmanModel load_model(const std::string& path, std::vector<NamedMatrix>* attachments = nullptr);

/// "koopman" or "edmd"; throws FormatError for anything that is not KPKM1.
std::string model_method(const std::string& path);

}  // namespace tsrkoop
