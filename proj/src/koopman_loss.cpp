#include <cmath>
#include <vector>

#include "tsrkoop/errors.hpp"
#include "tsrkoop/koopman.hpp"
#include "tsrkoop/linalg.hpp"
#include "tsrkoop/parallel.hpp"

namespace tsrkoop {

namespace {

// Trajectories per work item of the parallel reduction. Fixed so that the
// summation order never depends on the thread count.
constexpr std::size_t kChunkTrajectories = 32;

struct Partial {
  double l1 = 0.0;
  double l2 = 0.0;
  ModelGradients grad;
};

Eigen::ArrayXXd softplus(const Eigen::ArrayXXd& v) {
  return v.max(0.0) + (-v.abs()).exp().log1p();
}

Eigen::ArrayXXd sigmoid(const Eigen::ArrayXXd& v) { return 1.0 / (1.0 + (-v).exp()); }

// Losses (sums over the given trajectories, already scaled by inv_batch for
// the gradient) and optionally their gradient for one group of trajectories.
// Columns are laid out step-major: column j * b + i is step j of trajectory i.
void accumulate(const KoopmanModel& model, std::span<const Trajectory* const> trajs,
                const TrainConfig& cfg, double inv_batch, Partial& out, bool want_grad) {
  const auto b = static_cast<Eigen::Index>(trajs.size());
  if (b == 0) return;
  const int m = trajs.front()->steps();
  const int n = kStateDim;
  const int N = model.lifted_dim();
  const int K = model.latent_dim();
  if (m < 2) return;

  Eigen::MatrixXd X(n, m * b);
  Eigen::RowVectorXd U(m * b);
  for (Eigen::Index i = 0; i < b; ++i) {
    const Trajectory& t = *trajs[static_cast<std::size_t>(i)];
    if (t.steps() != m) throw ShapeError("koopman", "batch trajectories differ in length");
    for (int j = 0; j < m; ++j) {
      X.col(j * b + i) = t.states.col(j);
      U(j * b + i) = t.controls(0, j) - model.control_offset;
    }
  }
  const Eigen::MatrixXd S = model.scale_inputs(X);
  const nn::ForwardCache phi_cache = nn::forward(model.phi, S);
  const nn::ForwardCache gate_cache = nn::forward(model.gate_net, S);
  const Eigen::ArrayXXd gate_pre = gate_cache.output().array();
  const Eigen::RowVectorXd U_hat =
      ((softplus(gate_pre) + model.gate_floor) * U.array()).matrix();

  Eigen::MatrixXd Z(N, m * b);
  Z.topRows(n) = X;
  Z.bottomRows(K) = phi_cache.output();

  Eigen::MatrixXd Zp(N, m * b);
  Zp.leftCols(b) = Z.leftCols(b);
  for (int j = 1; j < m; ++j) {
    Zp.middleCols(j * b, b).noalias() = model.A * Zp.middleCols((j - 1) * b, b);
    Zp.middleCols(j * b, b).noalias() += model.B * U_hat.segment((j - 1) * b, b);
  }

  const Eigen::MatrixXd E = Zp - Z;  // prediction residual, lifted
  std::vector<double> decay(static_cast<std::size_t>(m), 1.0);
  for (int j = 1; j < m; ++j) decay[static_cast<std::size_t>(j)] = decay[j - 1] * cfg.gamma;

  double l1 = 0.0;
  double l2 = 0.0;
  for (int j = 1; j < m; ++j) {
    l1 += E.block(0, j * b, n, b).squaredNorm();
    l2 += decay[static_cast<std::size_t>(j)] * E.middleCols(j * b, b).squaredNorm();
  }
  out.l1 += l1 / (m - 1);
  out.l2 += l2 / N;
  if (!want_grad) return;

  const double c1 = cfg.alpha * 2.0 / (m - 1) * inv_batch;
  const double c2 = cfg.beta * 2.0 / N * inv_batch;

  Eigen::MatrixXd dPhi = Eigen::MatrixXd::Zero(K, m * b);
  Eigen::RowVectorXd dU_hat = Eigen::RowVectorXd::Zero(m * b);
  Eigen::MatrixXd lambda = Eigen::MatrixXd::Zero(N, b);
  Eigen::MatrixXd G(N, b);
  for (int j = m - 1; j >= 1; --j) {
    const double wj = c2 * decay[static_cast<std::size_t>(j)];
    const auto Ej = E.middleCols(j * b, b);
    G = wj * Ej;
    G.topRows(n) += c1 * Ej.topRows(n);
    Eigen::MatrixXd next = G;
    next.noalias() += model.A.transpose() * lambda;
    lambda = std::move(next);
    out.grad.A.noalias() += lambda * Zp.middleCols((j - 1) * b, b).transpose();
    out.grad.B.noalias() += lambda * U_hat.segment((j - 1) * b, b).transpose();
    dU_hat.segment((j - 1) * b, b).noalias() = model.B.transpose() * lambda;
    dPhi.middleCols(j * b, b) = -wj * Ej.bottomRows(K);
  }
  // zhat_0 is the data lift z_0
  dPhi.leftCols(b).noalias() += (model.A.transpose() * lambda).bottomRows(K);

  const Eigen::MatrixXd d_gate_pre =
      (dU_hat.array() * U.array() * sigmoid(gate_pre).row(0)).matrix();
  out.grad.phi += nn::backward(model.phi, phi_cache, dPhi);
  out.grad.gate_net += nn::backward(model.gate_net, gate_cache, d_gate_pre);
}

std::vector<const Trajectory*> pointers(std::span<const Trajectory> batch) {
  std::vector<const Trajectory*> ptrs;
  ptrs.reserve(batch.size());
  for (const auto& t : batch) ptrs.push_back(&t);
  return ptrs;
}

LossBreakdown finish(const KoopmanModel& model, const TrainConfig& cfg, double l1_sum,
                     double l2_sum, double inv_batch, ModelGradients* grad) {
  LossBreakdown out;
  out.reconstruction = l1_sum * inv_batch;
  out.prediction = l2_sum * inv_batch;
  const auto pen =
      linalg::controllability_penalty(model.A, model.B.col(0), cfg.hinge_margin, grad != nullptr);
  out.controllability_exact = std::abs(static_cast<double>(model.lifted_dim() - pen.rank));
  out.controllability_surrogate = pen.value;
  out.total = cfg.alpha * out.reconstruction + cfg.beta * out.prediction + cfg.eta * pen.value;
  if (grad != nullptr && cfg.eta != 0.0) {
    grad->surrogate_A = cfg.eta * pen.dA;
    grad->surrogate_B.col(0) = cfg.eta * pen.db;
    grad->A += grad->surrogate_A;
    grad->B += grad->surrogate_B;
  }
  return out;
}

}  // namespace

ModelGradients ModelGradients::zeros_like(const KoopmanModel& model) {
  const Eigen::MatrixXd zA = Eigen::MatrixXd::Zero(model.A.rows(), model.A.cols());
  const Eigen::MatrixXd zB = Eigen::MatrixXd::Zero(model.B.rows(), model.B.cols());
  return {nn::Gradients::zeros_like(model.phi), nn::Gradients::zeros_like(model.gate_net), zA, zB,
          zA, zB};
}

ModelGradients& ModelGradients::operator+=(const ModelGradients& other) {
  phi += other.phi;
  gate_net += other.gate_net;
  A += other.A;
  B += other.B;
  surrogate_A += other.surrogate_A;
  surrogate_B += other.surrogate_B;
  return *this;
}

LossBreakdown loss_and_gradient(const KoopmanModel& model, std::span<const Trajectory* const> batch,
                                const TrainConfig& cfg, ModelGradients& grad, int workers) {
  model.check_shapes();
  grad = ModelGradients::zeros_like(model);
  if (batch.empty()) return finish(model, cfg, 0.0, 0.0, 0.0, &grad);
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  const auto chunks = fixed_chunks(batch.size(), kChunkTrajectories);
  std::vector<Partial> partials(chunks.size());
  const int threads = resolve_workers(workers);
  const auto count = static_cast<long>(chunks.size());

#pragma omp parallel for schedule(dynamic, 1) num_threads(threads) if (threads > 1)
  for (long c = 0; c < count; ++c) {
    auto& part = partials[static_cast<std::size_t>(c)];
    part.grad = ModelGradients::zeros_like(model);
    const auto& r = chunks[static_cast<std::size_t>(c)];
    accumulate(model, batch.subspan(r.begin, r.end - r.begin), cfg, inv_batch, part, true);
  }

  double l1 = 0.0;
  double l2 = 0.0;
  for (const auto& part : partials) {
    l1 += part.l1;
    l2 += part.l2;
    grad += part.grad;
  }
  return finish(model, cfg, l1, l2, inv_batch, &grad);
}

LossBreakdown loss_and_gradient_serial(const KoopmanModel& model,
                                       std::span<const Trajectory* const> batch,
                                       const TrainConfig& cfg, ModelGradients& grad) {
  model.check_shapes();
  Partial part;
  part.grad = ModelGradients::zeros_like(model);
  const double inv_batch = batch.empty() ? 0.0 : 1.0 / static_cast<double>(batch.size());
  accumulate(model, batch, cfg, inv_batch, part, true);
  grad = std::move(part.grad);
  return finish(model, cfg, part.l1, part.l2, inv_batch, &grad);
}

LossBreakdown total_loss(const KoopmanModel& model, std::span<const Trajectory> batch,
                         const TrainConfig& cfg) {
  model.check_shapes();
  const auto ptrs = pointers(batch);
  const double inv_batch = batch.empty() ? 0.0 : 1.0 / static_cast<double>(batch.size());
  const auto chunks = fixed_chunks(ptrs.size(), kChunkTrajectories);
  double l1 = 0.0;
  double l2 = 0.0;
  for (const auto& r : chunks) {
    Partial part;
    accumulate(model, std::span<const Trajectory* const>(ptrs).subspan(r.begin, r.end - r.begin),
               cfg, inv_batch, part, false);
    l1 += part.l1;
    l2 += part.l2;
  }
  return finish(model, cfg, l1, l2, inv_batch, nullptr);
}

}  // namespace tsrkoop
