#include "tsrkoop/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "tsrkoop/errors.hpp"
#include "tsrkoop/parallel.hpp"

namespace tsrkoop {

namespace {

constexpr std::size_t kChunkTrajectories = 64;

template <class Model>
PredictionError parallel_error(const Model& model, std::span<const Trajectory> trajs, int workers) {
  const auto chunks = fixed_chunks(trajs.size(), kChunkTrajectories);
  std::vector<double> partial(chunks.size(), 0.0);
  const int threads = resolve_workers(workers);
  const auto count = static_cast<long>(chunks.size());

#pragma omp parallel for schedule(dynamic, 1) num_threads(threads) if (threads > 1)
  for (long c = 0; c < count; ++c) {
    const auto& r = chunks[static_cast<std::size_t>(c)];
    double s = 0.0;
    for (std::size_t i = r.begin; i < r.end; ++i) {
      s += trajectory_mse(trajs[i].states, predict_states(model, trajs[i]));
    }
    partial[static_cast<std::size_t>(c)] = s;
  }
  PredictionError out;
  for (double s : partial) out.sum += s;
  if (!trajs.empty()) out.mean = out.sum / static_cast<double>(trajs.size());
  return out;
}

template <class Model>
PredictionError serial_error(const Model& model, std::span<const Trajectory> trajs) {
  PredictionError out;
  for (const auto& t : trajs) out.sum += trajectory_mse(t.states, predict_states(model, t));
  if (!trajs.empty()) out.mean = out.sum / static_cast<double>(trajs.size());
  return out;
}

template <class Model>
std::vector<double> step_error(const Model& model, std::span<const Trajectory> trajs, int workers) {
  if (trajs.empty()) return {};
  const int m = trajs.front().steps();
  const auto chunks = fixed_chunks(trajs.size(), kChunkTrajectories);
  std::vector<Eigen::VectorXd> partial(chunks.size());
  const int threads = resolve_workers(workers);
  const auto count = static_cast<long>(chunks.size());

#pragma omp parallel for schedule(dynamic, 1) num_threads(threads) if (threads > 1)
  for (long c = 0; c < count; ++c) {
    const auto& r = chunks[static_cast<std::size_t>(c)];
    Eigen::VectorXd s = Eigen::VectorXd::Zero(m);
    for (std::size_t i = r.begin; i < r.end; ++i) {
      const auto pred = predict_states(model, trajs[i]);
      s += (trajs[i].states - pred).colwise().squaredNorm().transpose() / kStateDim;
    }
    partial[static_cast<std::size_t>(c)] = std::move(s);
  }
  Eigen::VectorXd total = Eigen::VectorXd::Zero(m);
  for (const auto& s : partial) total += s;
  total /= static_cast<double>(trajs.size());
  return {total.data(), total.data() + m};
}

}  // namespace

Eigen::MatrixXd predict_states(const KoopmanModel& model, const Trajectory& traj) {
  const auto u_hat = embedded_controls(model, traj);
  return rollout(model, traj.state(0), u_hat).topRows(kStateDim);
}

Eigen::MatrixXd predict_states(const EdmdModel& model, const Trajectory& traj) {
  const int m = traj.steps();
  std::vector<double> u(static_cast<std::size_t>(std::max(0, m - 1)));
  for (int j = 0; j + 1 < m; ++j) u[static_cast<std::size_t>(j)] = traj.control(j);
  return edmd_rollout(model, traj.state(0), u).topRows(kStateDim);
}

double trajectory_mse(const Eigen::MatrixXd& states, const Eigen::MatrixXd& predicted) {
  if (states.rows() != predicted.rows() || states.cols() != predicted.cols()) {
    throw ShapeError("harness", "trajectory_mse: shape mismatch");
  }
  if (states.size() == 0) return 0.0;
  return (states - predicted).squaredNorm() / static_cast<double>(states.size());
}

PredictionError prediction_error(const KoopmanModel& model, std::span<const Trajectory> trajs,
                                 int workers) {
  return parallel_error(model, trajs, workers);
}
PredictionError prediction_error(const EdmdModel& model, std::span<const Trajectory> trajs,
                                 int workers) {
  return parallel_error(model, trajs, workers);
}
PredictionError prediction_error_serial(const KoopmanModel& model,
                                        std::span<const Trajectory> trajs) {
  return serial_error(model, trajs);
}
PredictionError prediction_error_serial(const EdmdModel& model, std::span<const Trajectory> trajs) {
  return serial_error(model, trajs);
}

std::vector<double> per_step_error(const KoopmanModel& model, std::span<const Trajectory> trajs,
                                   int workers) {
  return step_error(model, trajs, workers);
}
std::vector<double> per_step_error(const EdmdModel& model, std::span<const Trajectory> trajs,
                                   int workers) {
  return step_error(model, trajs, workers);
}

std::optional<int> settling_step(const Eigen::MatrixXd& states, double zone) {
  const auto cols = static_cast<int>(states.cols());
  int k = cols;
  while (k > 0 && std::abs(states(0, k - 1)) <= zone && std::abs(states(2, k - 1)) <= zone) --k;
  if (k == cols) return std::nullopt;
  return k;
}

std::optional<double> settling_time(const Eigen::MatrixXd& states, double h, double zone) {
  const auto k = settling_step(states, zone);
  if (!k) return std::nullopt;
  return *k * h;
}

double x3_overshoot(const Eigen::MatrixXd& states) {
  if (states.cols() == 0) return 0.0;
  return std::max(0.0, states.row(2).maxCoeff());
}

Interval x1_range(const Eigen::MatrixXd& states) {
  if (states.cols() == 0) return {};
  return {states.row(0).minCoeff(), states.row(0).maxCoeff()};
}

}  // namespace tsrkoop
